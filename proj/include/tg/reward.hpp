#pragma once

#include <stdexcept>
#include <vector>

#include "tg/action_lang.hpp"
#include "tg/task.hpp"
#include "tg/world.hpp"

namespace tg {

struct RewardConfig {
  double parse_penalty = -1.0;
  double parse_base = 0.5;
  double beta_rel = 0.2;
  double rel_cap = 1.0;
  double goal_total = 30.0;

  /// Throws std::invalid_argument when a coefficient is out of range.
  /// beta_rel = 0 is allowed so the relevance tier can be ablated.
  void validate() const;
};

struct RewardBreakdown {
  double r_f = 0.0;
  double r_r = 0.0;
  double r_g = 0.0;
  double total = 0.0;
  SatisfiedSet satisfied;
  std::vector<int> o_goal;
  std::vector<int> o_a;
};

struct DegenerateTask : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

double format_reward(bool parsed, const RewardConfig& cfg = {});
double relevance_reward(const std::vector<int>& o_goal, const std::vector<int>& o_a, const RewardConfig& cfg = {});
double goal_reward(std::size_t n_satisfied, std::size_t n_sub, const RewardConfig& cfg = {});

/// What a rollout produced, before scoring.
struct EpisodeOutcome {
  bool parsed = false;
  std::vector<int> o_a;    // ids named by successfully executed actions
  SatisfiedSet satisfied;  // goal indices true in the halt state
};

RewardBreakdown total_reward(const EpisodeOutcome& ep, const TaskDef& task, const Binding& b,
                             const RewardConfig& cfg = {});

struct EpisodeResult {
  ParseResult parse;
  EpisodeOutcome outcome;
  int executed_len = 0;
  FailReason halt_reason = FailReason::Ok;  // Ok when every action ran
  long micro_steps = 0;
  RewardBreakdown reward;
};

/// Parse, then run actions until the first precondition failure, then score.
/// An index outside the scene turns the whole output into a parse failure.
EpisodeResult run_episode(World& world, std::string_view policy_text, const TaskDef& task, const Binding& b,
                          ExecPath path, const CostModel& cost = {}, const RewardConfig& cfg = {},
                          int h_max = kDefaultHMax);

}  // namespace tg
