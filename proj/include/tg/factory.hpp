#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tg/assets.hpp"
#include "tg/task.hpp"
#include "tg/world.hpp"

namespace tg {

class FactoryError : public std::runtime_error {
 public:
  enum class Kind { NoFeasibleAssignment, LayoutInfeasible, NoValidCell, GenerationFailed, GeneratorExhausted };
  FactoryError(Kind kind, const std::string& msg);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view factory_error_name(FactoryError::Kind k);

// ---------------------------------------------------------------- scene level

struct AssignmentWeights {
  double area = 1.0;
  double function = 2.0;
};

/// Room per manifest symbol.
struct RoomAssignment {
  std::map<std::string, std::string> room_of;
};

/// Groups objects joined by binary init predicates, then gives each group
/// the best-scoring room that still has floor capacity for it.
RoomAssignment distribute_objects(const TaskDef& task, const SceneDoc& base,
                                  const AssetCatalog& catalog = builtin_catalog(), AssignmentWeights w = {});

// ---------------------------------------------------------------- room level

/// A (child, support) edge proposed for the tree. `support` empty means floor.
struct LayoutRelation {
  std::string child;
  std::string support;
  PredKind kind = PredKind::OnTop;  // OnTop or Inside; floor edges use OnTop
  bool from_init = false;

  friend bool operator==(const LayoutRelation&, const LayoutRelation&) = default;
};

struct LayoutNode {
  enum class Type { Floor, Object, Relation };
  Type type = Type::Object;
  std::string symbol;               // object nodes
  PredKind kind = PredKind::OnTop;  // relation nodes
  int parent = -1;
  std::vector<int> children;
};

struct LayoutTree {
  std::string room;
  std::vector<LayoutNode> nodes;  // nodes[0] is the floor
  std::vector<std::pair<LayoutRelation, std::string>> build_history;  // rejected edges and why
  std::vector<std::string> priority;  // children placed ahead of everything else

  /// Support edge of an object node, if it is attached; support empty = floor.
  std::optional<LayoutRelation> relation_of(const std::string& symbol) const;
  /// Objects in placement order: parents before children, prioritised ones first.
  std::vector<std::string> placement_order() const;
  bool well_formed() const;
};

/// What the builder needs about one object in the room.
struct LayoutObject {
  std::string symbol;
  std::string category;
  Extents half;
  ObjectFlags flags;
  bool fixed = false;  // already in the base scene
  std::vector<std::string> preferred_supports;
};

/// The probe places a candidate tree and reports the first edge it could not
/// realise, or nothing on success.
struct Rejection {
  LayoutRelation relation;
  std::string reason;
};
using PlacementProbe = std::function<std::optional<Rejection>(const LayoutTree&)>;

/// `fixed_parents` holds the existing support edges of base-scene objects.
LayoutTree build_layout_tree(const std::string& room, const std::vector<LayoutObject>& objects,
                             const std::vector<SymPredicate>& ic, const std::vector<LayoutRelation>& fixed_parents,
                             int retry_budget = 3, const PlacementProbe& probe = nullptr);

// ---------------------------------------------------------------- planar level

struct PlanarConstraint {
  enum class Kind { NextTo, FaceTo, AlignedWith };
  Kind kind = Kind::NextTo;
  std::string subject;
  std::string reference;
  double weight = 1.0;
  // Reference geometry, filled by the caller.
  double ref_x = 0.0;
  double ref_y = 0.0;
  double ref_yaw = 0.0;
};

/// Score of one pose under the constraints (scores compare at 1e-9).
double planar_score(const Pose2& pose, const std::vector<PlanarConstraint>& constraints);

inline constexpr int kYawCandidates = 8;

/// Best (cell, yaw) for a floor object: footprint on free cells inside the
/// room, spawn cell kept free, and some free cell 4-adjacent to the
/// footprint still connected to the spawn. `accept` may veto candidates.
/// Throws FactoryError(NoValidCell).
Pose2 plan_planar_placement(const OccupancyGrid& grid, const Extents& half,
                            const std::vector<PlanarConstraint>& constraints, Cell robot_spawn,
                            const std::function<bool(const Pose2&)>& accept = nullptr);

// ---------------------------------------------------------------- object level

struct FactoryOptions {
  int retry_budget = 3;
  const AssetCatalog* catalog = nullptr;  // builtin when null
};

struct Instantiated {
  SceneDoc doc;
  Binding binding;
  std::vector<LayoutTree> trees;
};

/// distribute -> layout trees -> placement -> verification. The seed rotates
/// candidate orders. Throws FactoryError(GenerationFailed).
Instantiated instantiate_scene(const TaskDef& task, const SceneDoc& base, std::uint64_t seed,
                               const FactoryOptions& opt = {});

/// Baseline: same rooms and supports, but poses drawn uniformly with no
/// collision or reachability checks.
Instantiated random_uniform_scene(const TaskDef& task, const SceneDoc& base, std::uint64_t seed,
                                  const FactoryOptions& opt = {});

struct VerifyReport {
  bool pass = false;
  std::vector<std::string> violations;  // each prefixed (a)..(d)
};

VerifyReport verify_scene(const SceneDoc& doc, const TaskDef& task, const Binding& binding);

// ---------------------------------------------------------------- instruction generation

inline const std::vector<std::string> kTaskFamilies = {"pick_and_place", "appliance", "kitchen", "compound"};

class InstructionGenerator {
 public:
  virtual ~InstructionGenerator() = default;
  /// A candidate task for `family`, or nothing if the scene cannot support it.
  virtual std::optional<TaskDef> propose(const SceneDoc& base, const std::string& family, std::mt19937_64& rng) = 0;
};

/// Fills category, room and relation slots of the four families from the
/// base scene's fixtures.
class TemplateGenerator : public InstructionGenerator {
 public:
  explicit TemplateGenerator(const AssetCatalog& catalog = builtin_catalog(), int max_distractors = 3)
      : catalog_(catalog), max_distractors_(max_distractors) {}
  std::optional<TaskDef> propose(const SceneDoc& base, const std::string& family, std::mt19937_64& rng) override;

 private:
  const AssetCatalog& catalog_;
  int max_distractors_;
};

/// n validated, goal-distinct tasks; families rotate in the fixed order.
/// Throws FactoryError(GeneratorExhausted).
std::vector<TaskDef> generate_task_batch(const SceneDoc& base, int n, std::uint64_t seed, InstructionGenerator& gen);

/// Known-good action plan for a template task in an instantiated scene, if
/// the goals follow one of the template recipes.
std::optional<std::vector<Action>> reference_plan(const TaskDef& task, const SceneDoc& doc, const Binding& b);

}  // namespace tg
