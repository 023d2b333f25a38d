#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "tg/task.hpp"

using namespace tg;
using namespace tgtest;

namespace {

TaskError::Kind error_kind(std::string_view text) {
  try {
    parse_task(text);
  } catch (const TaskError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a parse error";
  return TaskError::Kind::SyntaxError;
}

SceneDoc base_without_chicken() {
  SceneDoc d = heat_chicken_kitchen();
  d.objects.erase(d.objects.begin() + 2);
  d.objects[2].id = 2;  // table
  return d;
}

}  // namespace

TEST(TaskParse, HeatChickenHasTwoGoals) {
  TaskDef t = parse_task(kHeatChickenTask);
  EXPECT_EQ(t.id, "heat_chicken");
  EXPECT_EQ(t.instruction, "Heat the chicken in the microwave.");
  EXPECT_EQ(t.family, "kitchen");
  ASSERT_EQ(t.n_sub(), 2u);
  EXPECT_EQ(t.goals[0], (SymPredicate{PredKind::Inside, "chicken_0", "microwave_0"}));
  EXPECT_EQ(t.goals[1], (SymPredicate{PredKind::Heated, "chicken_0", ""}));
  EXPECT_EQ(t.objects.size(), 1u);
  EXPECT_EQ(t.fixtures, (std::vector<std::string>{"microwave_0", "counter_0"}));
}

TEST(TaskParse, ErrorsCarryKindAndPosition) {
  EXPECT_EQ(error_kind("(define (task t) (:goal (and)))"), TaskError::Kind::GoalEmpty);
  EXPECT_EQ(error_kind("(define (task t) (:objects a - apple))"), TaskError::Kind::GoalEmpty);
  EXPECT_EQ(error_kind("(define (task t) (:objects a - apple) (:goal (and (levitating a))))"),
            TaskError::Kind::UnknownPredicateKind);
  EXPECT_EQ(error_kind("(define (task t) (:objects a - apple) (:goal (and (ontop a))))"),
            TaskError::Kind::ArityError);
  EXPECT_EQ(error_kind("(define (task t) (:objects a - apple) (:goal (and (heated b))))"),
            TaskError::Kind::UnboundSymbol);
  EXPECT_EQ(error_kind("(define (task t) (:goal (and (heated a)))"), TaskError::Kind::SyntaxError);
  try {
    parse_task("(define (task t)\n  (:objects a - apple)\n  (:goal (and (heated a) (cooled a))))");
    FAIL();
  } catch (const TaskError& e) {
    EXPECT_EQ(e.kind(), TaskError::Kind::UnknownPredicateKind);
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.col(), 27);
  }
}

TEST(TaskParse, SerializeIsCanonicalAndStable) {
  TaskDef t = parse_task(kHeatChickenTask);
  std::string s = serialize_task(t);
  EXPECT_EQ(s, kHeatChickenTask);
  EXPECT_EQ(parse_task(s), t);
}

TEST(TaskParse, SingleGoalWithoutAndIsAccepted) {
  TaskDef t = parse_task("(define (task t) (:objects a - apple (grippable)) (:goal (heated a)))");
  EXPECT_EQ(t.n_sub(), 1u);
  EXPECT_EQ(t.objects[0].flags, (std::vector<std::string>{"grippable"}));
}

TEST(TaskSymbols, GoalSymbolsComeFirst) {
  TaskDef t = parse_task(
      "(define (task t) (:objects x - apple y - mug) (:fixtures table_0 shelf_0)"
      " (:init (ontop x table_0)) (:goal (and (ontop y shelf_0))))");
  EXPECT_EQ(task_symbols(t), (std::vector<std::string>{"y", "shelf_0", "x", "table_0"}));
}

TEST(TaskGoals, HeatChickenBeforeAndAfter) {
  TaskDef t = parse_task(kHeatChickenTask);
  World w(heat_chicken_kitchen());
  Binding b = bind_by_name(t, w.state());
  EXPECT_TRUE(eval_goals(w.state(), t, b).empty());
  for (const Action& a : heat_chicken_plan()) ASSERT_TRUE(w.apply(a, ExecPath::Fast, no_spin()).ok);
  EXPECT_EQ(eval_goals(w.state(), t, b), (SatisfiedSet{0, 1}));
  EXPECT_EQ(goal_object_ids(t, b), (std::vector<int>{1, 2}));
}

TEST(TaskGoals, PartialSatisfactionAndUnboundSymbols) {
  TaskDef t = parse_task(
      "(define (task t) (:fixtures counter_0 chicken_0 table_0 microwave_0)"
      " (:goal (and (ontop chicken_0 counter_0) (heated chicken_0) (open microwave_0))))");
  WorldState s = load_scene(heat_chicken_kitchen());
  Binding b = bind_by_name(t, s);
  EXPECT_EQ(eval_goals(s, t, b), (SatisfiedSet{0}));
  b.erase("microwave_0");
  EXPECT_THROW(eval_goals(s, t, b), TaskError);
}

TEST(TaskGoals, MonotoneInPredicateTruth) {
  TaskDef t = parse_task(
      "(define (task t) (:fixtures chicken_0 microwave_0)"
      " (:goal (and (heated chicken_0) (open microwave_0) (toggled_on microwave_0))))");
  WorldState s = load_scene(heat_chicken_kitchen());
  Binding b = bind_by_name(t, s);
  SatisfiedSet prev = eval_goals(s, t, b);
  for (auto setter : {+[](WorldState& w) { w.objects[1].states.open = true; },
                      +[](WorldState& w) { w.objects[2].states.heated = true; },
                      +[](WorldState& w) { w.objects[1].states.toggled_on = true; }}) {
    setter(s);
    SatisfiedSet next = eval_goals(s, t, b);
    EXPECT_TRUE(std::includes(next.begin(), next.end(), prev.begin(), prev.end()));
    EXPECT_GT(next.size(), prev.size());
    prev = next;
  }
}

TEST(TaskValidate, UnknownCategoryIsUnsupported) {
  TaskDef t = parse_task("(define (task t) (:objects k - chess) (:fixtures table_0) (:goal (and (ontop k table_0))))");
  auto rep = validate_task(t, base_without_chicken());
  EXPECT_FALSE(rep.ok());
  EXPECT_TRUE(rep.has(Finding::Kind::Unsupported));
}

TEST(TaskValidate, TwoSupportsIsContradictory) {
  TaskDef t = parse_task(
      "(define (task t) (:objects a - apple) (:fixtures microwave_0 table_0)"
      " (:init (inside a microwave_0) (ontop a table_0)) (:goal (and (heated a))))");
  auto rep = validate_task(t, base_without_chicken());
  EXPECT_TRUE(rep.has(Finding::Kind::Contradictory));
}

TEST(TaskValidate, DuplicateAndTrivialGoals) {
  TaskDef t = parse_task(
      "(define (task t) (:objects a - apple) (:fixtures table_0 counter_0)"
      " (:init (ontop a table_0)) (:goal (and (ontop a table_0) (ontop a counter_0) (ontop a counter_0))))");
  auto rep = validate_task(t, base_without_chicken());
  EXPECT_TRUE(rep.has(Finding::Kind::DuplicateGoal));
  EXPECT_TRUE(rep.has(Finding::Kind::TriviallySatisfied));
}

TEST(TaskValidate, HeatChickenIsClean) {
  TaskDef t = parse_task(kHeatChickenTask);
  auto rep = validate_task(t, base_without_chicken());
  EXPECT_TRUE(rep.ok());
  EXPECT_TRUE(rep.findings.empty());
}

TEST(TaskValidate, CapabilityGaps) {
  TaskDef t = parse_task(
      "(define (task t) (:objects a - apple) (:fixtures table_0 counter_0)"
      " (:goal (and (cooked a) (toggled_on table_0) (inside a counter_0))))");
  auto rep = validate_task(t, base_without_chicken());
  EXPECT_EQ(rep.findings.size(), 3u);
  TaskDef fixture_move = parse_task(
      "(define (task t) (:fixtures table_0 counter_0) (:init (ontop table_0 counter_0))"
      " (:goal (and (open table_0))))");
  EXPECT_TRUE(validate_task(fixture_move, base_without_chicken()).has(Finding::Kind::Unsupported));
}
