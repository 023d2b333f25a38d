#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tg/task.hpp"
#include "tg/types.hpp"
#include "tg/world.hpp"

namespace tg {

inline constexpr int kDefaultHMax = 32;

struct ActionSeq {
  std::vector<Action> actions;
  friend bool operator==(const ActionSeq&, const ActionSeq&) = default;
};

struct ParseFailure {
  enum class Reason { NoActions, UnknownSkill, ArityMismatch, BadValue, Syntax, TooLong };
  int line = 0;  // 1-based line of the offending input, 0 when not line specific
  Reason reason = Reason::Syntax;
  std::string detail;
};

std::string_view parse_failure_name(ParseFailure::Reason r);

struct ParseResult {
  std::optional<ActionSeq> seq;
  ParseFailure failure;
  bool ok() const { return seq.has_value(); }
};

/// Canonical form: `skill(key=value, ...)` with keys in table order.
std::string serialize_action(const Action& a);
std::string serialize_actions(const ActionSeq& seq);  // one line per action

/// Never throws. Accepts surrounding whitespace, a fenced code block, the
/// `moveto` / `pickup` aliases, positional arguments, and free text before
/// the first call line.
ParseResult parse_action_sequence(std::string_view text, int h_max = kDefaultHMax);

/// Four sections in fixed order: Task, Agent capabilities, Scene, Output format.
std::string render_prompt(const TaskDef& task, const SceneDoc& scene);

}  // namespace tg
