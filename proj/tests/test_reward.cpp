#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tg/reward.hpp"

using namespace tg;
using namespace tgtest;

TEST(Reward, FormatTier) {
  EXPECT_EQ(format_reward(false), -1.0);
  EXPECT_EQ(format_reward(true), 0.5);
}

TEST(Reward, RelevanceTier) {
  EXPECT_DOUBLE_EQ(relevance_reward({1, 2, 3}, {2, 3, 9}), 0.4);
  EXPECT_EQ(relevance_reward({1, 2, 3, 4, 5, 6, 7}, {1, 2, 3, 4, 5, 6, 7}), 1.0);
  EXPECT_EQ(relevance_reward({1, 2}, {}), 0.0);
  EXPECT_DOUBLE_EQ(relevance_reward({1, 2}, {1, 1, 1}), 0.2);
}

TEST(Reward, GoalTier) {
  EXPECT_EQ(goal_reward(2, 3), 20.0);
  EXPECT_EQ(goal_reward(4, 4), 30.0);
  EXPECT_EQ(goal_reward(0, 5), 0.0);
  EXPECT_EQ(goal_reward(1, 3), 10.0);
  EXPECT_THROW(goal_reward(0, 0), DegenerateTask);
}

TEST(Reward, UnparseableOutputIsGated) {
  TaskDef t = parse_task(kHeatChickenTask);
  World w(heat_chicken_kitchen());
  Binding b = bind_by_name(t, w.state());
  auto ep = run_episode(w, "fly(object_index=1)", t, b, ExecPath::Fast, no_spin());
  EXPECT_EQ(ep.reward.r_f, -1.0);
  EXPECT_EQ(ep.reward.r_r, 0.0);
  EXPECT_EQ(ep.reward.r_g, 0.0);
  EXPECT_EQ(ep.reward.total, -1.0);
  auto bad_id = run_episode(w, "move(object_index=17)", t, b, ExecPath::Fast, no_spin());
  EXPECT_EQ(bad_id.reward.total, -1.0);
}

TEST(Reward, HeatChickenSuccessTotals) {
  TaskDef t = parse_task(kHeatChickenTask);
  World w(heat_chicken_kitchen());
  Binding b = bind_by_name(t, w.state());
  auto ep = run_episode(w, serialize_actions({heat_chicken_plan()}), t, b, ExecPath::Fast, no_spin());
  EXPECT_EQ(ep.executed_len, 9);
  EXPECT_EQ(ep.reward.r_f, 0.5);
  EXPECT_DOUBLE_EQ(ep.reward.r_r, 0.4);
  EXPECT_EQ(ep.reward.r_g, 30.0);
  EXPECT_DOUBLE_EQ(ep.reward.total, 30.9);
}

TEST(Reward, PartialRolloutTouchingOneGoalObject) {
  TaskDef t = parse_task(kHeatChickenTask);
  World w(heat_chicken_kitchen());
  Binding b = bind_by_name(t, w.state());
  auto ep = run_episode(w, "move(object_index=2)\npick_up(object_index=2)", t, b, ExecPath::Fast, no_spin());
  EXPECT_EQ(ep.reward.r_f, 0.5);
  EXPECT_DOUBLE_EQ(ep.reward.r_r, 0.2);
  EXPECT_EQ(ep.reward.r_g, 0.0);
  EXPECT_DOUBLE_EQ(ep.reward.total, 0.7);
}

TEST(Reward, HaltAtFirstFailure) {
  TaskDef t = parse_task(kHeatChickenTask);
  World w(heat_chicken_kitchen());
  Binding b = bind_by_name(t, w.state());
  // Third action fails: the microwave is still closed.
  auto ep = run_episode(w,
                        "move(object_index=2)\npick_up(object_index=2)\nplace(object_index=1, relation=inside)\n"
                        "open(object_index=1)",
                        t, b, ExecPath::Fast, no_spin());
  EXPECT_EQ(ep.executed_len, 2);
  EXPECT_EQ(ep.halt_reason, FailReason::ContainerClosed);
  EXPECT_EQ(ep.outcome.o_a, (std::vector<int>{2, 2}));
  EXPECT_TRUE(w.state().is_held(2));
}

TEST(Reward, BoundsAndMonotonicity) {
  TaskDef t = parse_task(kHeatChickenTask);
  Binding b{{"chicken_0", 2}, {"microwave_0", 1}, {"counter_0", 0}};
  RewardConfig cfg;
  double prev = -2;
  for (std::size_t sat = 0; sat <= 2; ++sat) {
    EpisodeOutcome ep{true, {}, {}};
    for (std::size_t i = 0; i < sat; ++i) ep.satisfied.push_back(static_cast<int>(i));
    double total = total_reward(ep, t, b, cfg).total;
    EXPECT_GT(total, prev);
    EXPECT_LE(total, 0.5 + cfg.rel_cap + cfg.goal_total);
    EXPECT_GE(total, -1.0);
    prev = total;
  }
}
