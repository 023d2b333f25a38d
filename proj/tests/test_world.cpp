#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "tg/world.hpp"

using namespace tg;
using namespace tgtest;

namespace {

SceneDoc one_table_room() {
  SceneDoc d;
  d.id = "one_table";
  d.rooms.push_back({"room", {0, 0, 4, 4}, "living"});
  d.objects.push_back(obj(0, "table_0", "table", "room", {1.0, 1.0, 0, 0}, {0.5, 0.3, 0.375}, {.surface = true}));
  d.robot = {{2.05, 2.05, 0, 0}, "room", std::nullopt};
  return d;
}

}  // namespace

TEST(WorldLoad, MinimalSceneHasOneObject) {
  WorldState s = load_scene(one_table_room());
  EXPECT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.robot.room, "room");
  EXPECT_FALSE(s.robot.held);
}

TEST(WorldLoad, RejectsObjectOutsideRoom) {
  SceneDoc d = one_table_room();
  d.objects[0].pose.x = 3.8;
  EXPECT_THROW(load_scene(d), MalformedScene);
}

TEST(WorldLoad, RejectsDuplicateIdsAndCycles) {
  SceneDoc d = one_table_room();
  d.objects.push_back(d.objects[0]);
  d.objects[1].name = "table_1";
  EXPECT_THROW(load_scene(d), MalformedScene);

  SceneDoc c = heat_chicken_kitchen();
  c.objects[0].parent = ParentLink{1, Relation::OnTop};
  EXPECT_THROW(load_scene(c), MalformedScene);
}

TEST(WorldLoad, RejectsStateWithoutCapability) {
  SceneDoc d = one_table_room();
  d.objects[0].states.open = true;
  EXPECT_THROW(load_scene(d), MalformedScene);
}

TEST(WorldLoad, TextRoundTripIsBitIdentical) {
  SceneDoc d = heat_chicken_kitchen();
  d.objects[3].pose.yaw = 0.3;
  d.objects[3].pose.x = 2.123456789012345;
  std::string text = scene_to_text(d);
  SceneDoc back = scene_from_text(text);
  EXPECT_EQ(back, d);
  WorldState s = load_scene(back);
  EXPECT_EQ(scene_to_text(save_scene(s, d.id)), text);
}

TEST(WorldLoad, MalformedTextIsReported) {
  EXPECT_THROW(scene_from_text("{"), MalformedScene);
  EXPECT_THROW(scene_from_text(R"({"format":"tg-scene","version":1,"rooms":[]})"), MalformedScene);
}

TEST(OutcomeCache, TableTopYieldsEightDistinctCollisionFreePoses) {
  SceneDoc d;
  d.id = "apple_table";
  d.rooms.push_back({"room", {0, 0, 4, 4}, "kitchen"});
  d.objects.push_back(obj(0, "table_0", "table", "room", {2, 2, 0, 0}, {0.5, 0.3, 0.375}, {.surface = true}));
  d.objects.push_back(obj(1, "apple_0", "apple", "room", {0.5, 0.5, 0, 0}, {0.04, 0.04, 0.04}, {.grippable = true}));
  d.robot = {{3.55, 3.55, 0, 0}, "room", std::nullopt};
  WorldState s = load_scene(d);
  OutcomeCache c = precompute_outcome_cache(s);
  const auto& cand = c.candidates(1, 0, Relation::OnTop);
  ASSERT_EQ(cand.size(), 8u);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    EXPECT_TRUE(s.objects[0].footprint().contains(footprint(cand[i], s.objects[1].half_extents)));
    EXPECT_DOUBLE_EQ(cand[i].z, s.objects[0].top_z());
    for (std::size_t j = i + 1; j < cand.size(); ++j)
      EXPECT_FALSE(footprint(cand[i], s.objects[1].half_extents)
                       .overlaps(footprint(cand[j], s.objects[1].half_extents)));
  }
}

TEST(OutcomeCache, CoveredSurfaceHasNoCandidates) {
  SceneDoc d;
  d.id = "covered";
  d.rooms.push_back({"room", {0, 0, 4, 4}, "kitchen"});
  d.objects.push_back(obj(0, "table_0", "table", "room", {2, 2, 0, 0}, {0.5, 0.3, 0.375}, {.surface = true}));
  d.objects.push_back(on(obj(1, "tray_0", "tray", "room", {2, 2, 0.75, 0}, {0.5, 0.3, 0.02}, {.surface = true}), 0));
  d.objects.push_back(obj(2, "apple_0", "apple", "room", {0.5, 0.5, 0, 0}, {0.04, 0.04, 0.04}, {.grippable = true}));
  d.robot = {{3.55, 3.55, 0, 0}, "room", std::nullopt};
  WorldState s = load_scene(d);
  OutcomeCache c = precompute_outcome_cache(s);
  EXPECT_TRUE(c.candidates(2, 0, Relation::OnTop).empty());
  EXPECT_FALSE(c.candidates(2, 1, Relation::OnTop).empty());
}

TEST(OutcomeCache, ObjectInClosedContainerStillHasStandingCells) {
  SceneDoc d = heat_chicken_kitchen();
  d.objects[2] = on(obj(2, "chicken_0", "chicken", "kitchen", {0.5, 2.0, 0.92, 0}, {0.08, 0.06, 0.04},
                        {.grippable = true}),
                    1, Relation::Inside);
  WorldState s = load_scene(d);
  OutcomeCache c = precompute_outcome_cache(s);
  EXPECT_FALSE(c.standing[2].empty());
  EXPECT_TRUE(s.enclosed(2));
}

TEST(Precondition, TableOfReasons) {
  World w(heat_chicken_kitchen());
  EXPECT_EQ(w.check(Action::toggle_on(3)).reason, FailReason::NotToggleable);
  EXPECT_EQ(w.check(Action::pick_up(2)).reason, FailReason::NotAdjacent);
  EXPECT_EQ(w.check(Action::place(1, Relation::Inside)).reason, FailReason::HandEmpty);
  EXPECT_EQ(w.check(Action::open(3)).reason, FailReason::NotOpenable);
  EXPECT_EQ(w.check(Action::heat(2, 3)).reason, FailReason::NotHeatSource);
  EXPECT_EQ(w.check(Action::cook(2, 1)).reason, FailReason::NotCookTool);
  EXPECT_EQ(w.check(Action::froze(2, 1)).reason, FailReason::NotColdSource);
  EXPECT_EQ(w.check(Action::go_to_room("attic")).reason, FailReason::NoSuchRoom);
  EXPECT_EQ(w.check(Action::pick_up(3)).reason, FailReason::NotGrippable);
  EXPECT_THROW(w.check(Action::move(9)), UnknownObjectId);

  auto cm = no_spin();
  ASSERT_TRUE(w.apply(Action::move(2), ExecPath::Fast, cm).ok);
  EXPECT_TRUE(w.check(Action::pick_up(2)).ok());
  ASSERT_TRUE(w.apply(Action::pick_up(2), ExecPath::Fast, cm).ok);
  EXPECT_EQ(w.check(Action::pick_up(2)).reason, FailReason::HandFull);
  ASSERT_TRUE(w.apply(Action::move(1), ExecPath::Fast, cm).ok);
  EXPECT_EQ(w.check(Action::place(1, Relation::Inside)).reason, FailReason::ContainerClosed);
  EXPECT_EQ(w.check(Action::close(1)).reason, FailReason::AlreadyClosed);
}

TEST(Execution, HeatChickenPlanHeatsChickenInsideMicrowave) {
  World w(heat_chicken_kitchen());
  for (const Action& a : heat_chicken_plan()) {
    auto r = w.apply(a, ExecPath::Fast, no_spin());
    ASSERT_TRUE(r.ok) << fail_reason_name(r.reason);
  }
  EXPECT_TRUE(eval_predicate(w.state(), Predicate::make(PredKind::Heated, 2)));
  EXPECT_TRUE(eval_predicate(w.state(), Predicate::make(PredKind::Inside, 2, 1)));
  EXPECT_FALSE(eval_predicate(w.state(), Predicate::make(PredKind::OnTop, 2, 0)));
  EXPECT_TRUE(find_overlaps(w.state()).empty());
  EXPECT_EQ(w.state().step_count, 9);
}

TEST(Execution, SkippingToggleLeavesChickenCold) {
  World w(heat_chicken_kitchen());
  auto plan = heat_chicken_plan();
  plan.erase(plan.begin() + 7);
  for (const Action& a : plan) ASSERT_TRUE(w.apply(a, ExecPath::Fast, no_spin()).ok);
  EXPECT_FALSE(w.state().objects[2].states.heated);
}

TEST(Execution, SecondToggleFailsAndLeavesStateUnchanged) {
  World w(heat_chicken_kitchen());
  auto cm = no_spin();
  ASSERT_TRUE(w.apply(Action::move(1), ExecPath::Fast, cm).ok);
  ASSERT_TRUE(w.apply(Action::toggle_on(1), ExecPath::Fast, cm).ok);
  WorldState before = w.state();
  auto r = w.apply(Action::toggle_on(1), ExecPath::Fast, cm);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.reason, FailReason::AlreadyOn);
  EXPECT_EQ(w.state(), before);
}

TEST(Execution, PickUpDetachesFromSupport) {
  World w(heat_chicken_kitchen());
  auto cm = no_spin();
  ASSERT_TRUE(w.apply(Action::move(2), ExecPath::Fast, cm).ok);
  ASSERT_TRUE(w.apply(Action::pick_up(2), ExecPath::Fast, cm).ok);
  const WorldState& s = w.state();
  for (int other = 0; other < 4; ++other) {
    if (other == 2) continue;
    EXPECT_FALSE(eval_predicate(s, Predicate::make(PredKind::OnTop, 2, other)));
    EXPECT_FALSE(eval_predicate(s, Predicate::make(PredKind::Inside, 2, other)));
    EXPECT_FALSE(eval_predicate(s, Predicate::make(PredKind::Under, 2, other)));
  }
  EXPECT_DOUBLE_EQ(s.objects[2].pose.x, s.robot.pose.x);
  EXPECT_DOUBLE_EQ(s.objects[2].pose.z, kCarryHeight);
}

TEST(Execution, FullSurfaceReportsNoFreePlacement) {
  // Eight cubes are carried onto a shelf one by one; each takes the next
  // cached slot, so the ninth finds every candidate occupied.
  SceneDoc d;
  d.id = "full_shelf";
  d.rooms.push_back({"room", {0, 0, 4, 4}, "living"});
  d.objects.push_back(obj(0, "shelf_0", "shelf", "room", {2, 2, 0, 0}, {0.5, 0.3, 0.4}, {.surface = true}));
  for (int i = 0; i < 9; ++i)
    d.objects.push_back(obj(1 + i, "cube_" + std::to_string(i), "cube", "room", {0.3 + 0.4 * i, 0.3, 0, 0},
                            {0.05, 0.05, 0.05}, {.grippable = true}));
  d.robot = {{2.05, 1.45, 0, 0}, "room", std::nullopt};
  World w(d);
  auto cm = no_spin();
  std::set<std::pair<double, double>> used;
  for (int i = 1; i <= 8; ++i) {
    ASSERT_EQ(w.cache().candidates(i, 0, Relation::OnTop).size(), 8u);
    ASSERT_TRUE(w.apply(Action::move(i), ExecPath::Fast, cm).ok);
    ASSERT_TRUE(w.apply(Action::pick_up(i), ExecPath::Fast, cm).ok);
    ASSERT_TRUE(w.apply(Action::move(0), ExecPath::Fast, cm).ok);
    ASSERT_TRUE(w.apply(Action::place(0, Relation::OnTop), ExecPath::Fast, cm).ok);
    used.insert({w.state().objects[i].pose.x, w.state().objects[i].pose.y});
  }
  EXPECT_EQ(used.size(), 8u);
  ASSERT_TRUE(w.apply(Action::move(9), ExecPath::Fast, cm).ok);
  ASSERT_TRUE(w.apply(Action::pick_up(9), ExecPath::Fast, cm).ok);
  ASSERT_TRUE(w.apply(Action::move(0), ExecPath::Fast, cm).ok);
  EXPECT_EQ(w.check(Action::place(0, Relation::OnTop)).reason, FailReason::NoFreePlacement);
  auto r = w.apply(Action::place(0, Relation::OnTop), ExecPath::Fast, cm);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.reason, FailReason::NoFreePlacement);
  EXPECT_TRUE(find_overlaps(w.state()).empty());
}

TEST(Execution, MicroMatchesFastOnHeatChicken) {
  World fast(heat_chicken_kitchen());
  World micro(heat_chicken_kitchen());
  for (const Action& a : heat_chicken_plan()) {
    auto rf = fast.apply(a, ExecPath::Fast, no_spin());
    auto rm = micro.apply(a, ExecPath::Micro, no_spin());
    ASSERT_EQ(rf.ok, rm.ok);
    EXPECT_EQ(rf.objects_touched, rm.objects_touched);
    EXPECT_EQ(rf.micro_steps, 0);
  }
  EXPECT_EQ(fast.state(), micro.state());
}

TEST(Execution, MicroStepsFollowPathLength) {
  SceneDoc d;
  d.id = "corridor";
  d.rooms.push_back({"hall", {0, 0, 6, 1}, "hallway"});
  d.objects.push_back(obj(0, "stool_0", "stool", "hall", {5.85, 0.5, 0, 0}, {0.05, 0.1, 0.2}));
  d.robot = {{0.75, 0.45, 0, 0}, "hall", std::nullopt};
  WorldState s = load_scene(d);
  OutcomeCache c = precompute_outcome_cache(s);
  auto r = apply_action_micro(s, Action::move(0), c, no_spin());
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(r.micro_steps, 100);
  EXPECT_NEAR(s.robot.pose.x, 5.75, 1e-9);
  auto again = apply_action_micro(s, Action::move(0), c, no_spin());
  ASSERT_TRUE(again.ok);
  EXPECT_EQ(again.micro_steps, 0);
}

TEST(Execution, PlaceSettlesAndTurnRotatesInSteps) {
  World w(heat_chicken_kitchen());
  auto cm = no_spin();
  for (int i = 0; i < 4; ++i) ASSERT_TRUE(w.apply(heat_chicken_plan()[i], ExecPath::Micro, cm).ok);
  ASSERT_TRUE(w.apply(Action::move(3), ExecPath::Micro, cm).ok);
  auto r = w.apply(Action::place(3, Relation::OnTop), ExecPath::Micro, cm);
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(r.micro_steps, 50);
  EXPECT_TRUE(eval_predicate(w.state(), Predicate::make(PredKind::OnTop, 2, 3)));
  ASSERT_TRUE(w.apply(Action::turn(0.0), ExecPath::Micro, cm).ok);
  auto t = w.apply(Action::turn(1.0), ExecPath::Micro, cm);
  EXPECT_EQ(t.micro_steps, 20);
  EXPECT_DOUBLE_EQ(w.state().robot.pose.yaw, 1.0);
}

TEST(Execution, MoveForwardStopsAtWallsAndObstacles) {
  World w(heat_chicken_kitchen());
  auto cm = no_spin();
  EXPECT_EQ(w.check(Action::move_forward(5.0, 0.0)).reason, FailReason::Blocked);
  EXPECT_EQ(w.check(Action::move_forward(1.0, kPi / 2)).reason, FailReason::Blocked);  // table
  auto r = w.apply(Action::move_forward(1.0, 0.0), ExecPath::Micro, cm);
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(r.micro_steps, 20);
  EXPECT_NEAR(w.state().robot.pose.x, 3.05, 1e-12);
}

TEST(Execution, GoToRoomAndCrossRoomMove) {
  SceneDoc d = heat_chicken_kitchen();
  d.rooms.push_back({"living", {4, 0, 8, 3}, "living"});
  d.objects.push_back(obj(4, "sofa_0", "sofa", "living", {6, 2.5, 0, 0}, {0.9, 0.4, 0.4}, {.surface = true}));
  World w(d);
  auto cm = no_spin();
  ASSERT_TRUE(w.apply(Action::move(2), ExecPath::Fast, cm).ok);
  ASSERT_TRUE(w.apply(Action::pick_up(2), ExecPath::Fast, cm).ok);
  ASSERT_TRUE(w.apply(Action::move(4), ExecPath::Fast, cm).ok);
  EXPECT_EQ(w.state().robot.room, "living");
  EXPECT_EQ(w.state().objects[2].room, "living");
  ASSERT_TRUE(w.apply(Action::place(4, Relation::OnTop), ExecPath::Fast, cm).ok);
  EXPECT_EQ(w.state().objects[2].room, "living");
  ASSERT_TRUE(w.apply(Action::go_to_room("kitchen"), ExecPath::Fast, cm).ok);
  EXPECT_EQ(w.state().robot.room, "kitchen");
}

TEST(Predicates, DistinctIdsAreEnforced) {
  EXPECT_THROW(Predicate::make(PredKind::NextTo, 1, 1), std::invalid_argument);
  EXPECT_THROW(Predicate::make(PredKind::Open, 1, 2), std::invalid_argument);
  EXPECT_THROW(Predicate::make(PredKind::Inside, 1), std::invalid_argument);
}

TEST(Predicates, GeometricOnTopAndUnder) {
  WorldState s = load_scene(heat_chicken_kitchen());
  EXPECT_TRUE(eval_predicate(s, Predicate::make(PredKind::OnTop, 2, 0)));
  EXPECT_TRUE(eval_predicate(s, Predicate::make(PredKind::Under, 0, 2)));
  EXPECT_FALSE(eval_predicate(s, Predicate::make(PredKind::Under, 2, 0)));
  EXPECT_FALSE(eval_predicate(s, Predicate::make(PredKind::NextTo, 2, 1)));
  EXPECT_TRUE(eval_predicate(s, Predicate::make(PredKind::NextTo, 1, 0)));
  s.objects[2].parent.reset();  // geometry alone still says on top
  EXPECT_TRUE(eval_predicate(s, Predicate::make(PredKind::OnTop, 2, 0)));
}
