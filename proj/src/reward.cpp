#include "tg/reward.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tg {

void RewardConfig::validate() const {
  if (!(beta_rel >= 0.0) || !(rel_cap > 0.0) || !(goal_total > 0.0) || !std::isfinite(parse_penalty) ||
      !std::isfinite(parse_base))
    throw std::invalid_argument("reward coefficients out of range");
}

double format_reward(bool parsed, const RewardConfig& cfg) { return parsed ? cfg.parse_base : cfg.parse_penalty; }

double relevance_reward(const std::vector<int>& o_goal, const std::vector<int>& o_a, const RewardConfig& cfg) {
  std::set<int> g(o_goal.begin(), o_goal.end());
  std::set<int> a(o_a.begin(), o_a.end());
  std::size_t common = 0;
  for (int id : a) common += g.count(id);
  return std::min(cfg.beta_rel * static_cast<double>(common), cfg.rel_cap);
}

double goal_reward(std::size_t n_satisfied, std::size_t n_sub, const RewardConfig& cfg) {
  if (n_sub == 0) throw DegenerateTask("task has no goal predicates");
  if (n_satisfied > n_sub) throw std::invalid_argument("more satisfied goals than goals");
  return cfg.goal_total / static_cast<double>(n_sub) * static_cast<double>(n_satisfied);
}

RewardBreakdown total_reward(const EpisodeOutcome& ep, const TaskDef& task, const Binding& b,
                             const RewardConfig& cfg) {
  RewardBreakdown r;
  r.o_goal = goal_object_ids(task, b);
  r.r_f = format_reward(ep.parsed, cfg);
  if (!ep.parsed) {
    r.total = r.r_f;
    return r;
  }
  r.o_a = ep.o_a;
  std::sort(r.o_a.begin(), r.o_a.end());
  r.o_a.erase(std::unique(r.o_a.begin(), r.o_a.end()), r.o_a.end());
  r.satisfied = ep.satisfied;
  r.r_r = relevance_reward(r.o_goal, r.o_a, cfg);
  r.r_g = goal_reward(ep.satisfied.size(), task.n_sub(), cfg);
  r.total = r.r_f + r.r_r + r.r_g;
  return r;
}

EpisodeResult run_episode(World& world, std::string_view policy_text, const TaskDef& task, const Binding& b,
                          ExecPath path, const CostModel& cost, const RewardConfig& cfg, int h_max) {
  EpisodeResult res;
  res.parse = parse_action_sequence(policy_text, h_max);
  if (res.parse.ok()) {
    const int n = static_cast<int>(world.state().objects.size());
    for (std::size_t i = 0; i < res.parse.seq->actions.size(); ++i) {
      const Action& a = res.parse.seq->actions[i];
      const auto& spec = skill_spec(a.skill);
      for (int k = 0; k < spec.arity; ++k) {
        int id = spec.params[k] == Param::ObjectIndex   ? a.object_index
                 : spec.params[k] == Param::SourceIndex ? a.source_index
                                                        : 0;
        if (id >= n) {
          res.parse.failure = {static_cast<int>(i) + 1, ParseFailure::Reason::BadValue,
                               "unknown object id " + std::to_string(id)};
          res.parse.seq.reset();
          break;
        }
      }
      if (!res.parse.ok()) break;
    }
  }
  res.outcome.parsed = res.parse.ok();
  if (res.parse.ok()) {
    for (const Action& a : res.parse.seq->actions) {
      TransitionResult t = world.apply(a, path, cost);
      res.micro_steps += t.micro_steps;
      if (!t.ok) {
        res.halt_reason = t.reason;
        break;
      }
      ++res.executed_len;
      res.outcome.o_a.insert(res.outcome.o_a.end(), t.objects_touched.begin(), t.objects_touched.end());
    }
    res.outcome.satisfied = eval_goals(world.state(), task, b);
  }
  res.reward = total_reward(res.outcome, task, b, cfg);
  return res;
}

}  // namespace tg
