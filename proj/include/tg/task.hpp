#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tg/assets.hpp"
#include "tg/types.hpp"
#include "tg/world.hpp"

namespace tg {

/// Predicate over task symbols rather than concrete ids.
struct SymPredicate {
  PredKind kind = PredKind::Open;
  std::string subject;
  std::string object;  // empty for unary kinds

  friend bool operator==(const SymPredicate&, const SymPredicate&) = default;
  friend auto operator<=>(const SymPredicate&, const SymPredicate&) = default;
};

std::string to_string(const SymPredicate& p);  // "(inside chicken_1 microwave_1)"

struct TaskObject {
  std::string name;
  std::string category;
  std::vector<std::string> flags;  // requested capabilities, may be empty

  friend bool operator==(const TaskObject&, const TaskObject&) = default;
};

struct TaskDef {
  std::string id;
  std::string instruction;
  std::string family;
  std::vector<TaskObject> objects;    // new objects the factory instantiates
  std::vector<std::string> fixtures;  // names of objects already in the base scene
  std::vector<SymPredicate> init;
  std::vector<SymPredicate> goals;

  std::size_t n_sub() const { return goals.size(); }
  bool has_symbol(std::string_view name) const;
  const TaskObject* find_object(std::string_view name) const;

  friend bool operator==(const TaskDef&, const TaskDef&) = default;
};

class TaskError : public std::runtime_error {
 public:
  enum class Kind { SyntaxError, UnknownPredicateKind, ArityError, UnboundSymbol, GoalEmpty };
  TaskError(Kind kind, int line, int col, const std::string& msg);
  Kind kind() const { return kind_; }
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  Kind kind_;
  int line_;
  int col_;
};

std::string_view task_error_name(TaskError::Kind k);

TaskDef parse_task(std::string_view text);  // throws TaskError
std::string serialize_task(const TaskDef& task);
TaskDef read_task_file(const std::filesystem::path& path);
void write_task_file(const std::filesystem::path& path, const TaskDef& task);

/// Symbols in the order the policy addresses them: goal symbols by first
/// appearance, then the rest of the manifest, then remaining fixtures.
std::vector<std::string> task_symbols(const TaskDef& task);

using Binding = std::map<std::string, int>;

/// Binds every task symbol to the scene object of the same name. Throws
/// TaskError(UnboundSymbol) when a symbol has no object.
Binding bind_by_name(const TaskDef& task, const WorldState& state);

/// Throws TaskError(UnboundSymbol) for a symbol missing from the binding.
Predicate ground(const SymPredicate& p, const Binding& b);

using SatisfiedSet = std::vector<int>;  // ascending goal indices

SatisfiedSet eval_goals(const WorldState& state, const TaskDef& task, const Binding& b);

/// Concrete ids named by the goals (subjects and objects).
std::vector<int> goal_object_ids(const TaskDef& task, const Binding& b);

struct Finding {
  enum class Kind { Unsupported, Contradictory, DuplicateGoal, TriviallySatisfied };
  Kind kind;
  std::string message;
};

std::string_view finding_name(Finding::Kind k);

struct ValidationReport {
  std::vector<Finding> findings;
  /// Errors only; TriviallySatisfied is a warning.
  bool ok() const;
  bool has(Finding::Kind k) const;
};

ValidationReport validate_task(const TaskDef& task, const SceneDoc& scene,
                               const AssetCatalog& catalog = builtin_catalog());

}  // namespace tg
