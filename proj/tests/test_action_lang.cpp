#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "tg/action_lang.hpp"

using namespace tg;
using namespace tgtest;

TEST(ActionParse, TwoLines) {
  auto r = parse_action_sequence("open(object_index=2)\npick_up(object_index=5)");
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.seq->actions.size(), 2u);
  EXPECT_EQ(r.seq->actions[0], Action::open(2));
  EXPECT_EQ(r.seq->actions[1], Action::pick_up(5));
}

TEST(ActionParse, UnknownSkill) {
  auto r = parse_action_sequence("fly(object_index=1)");
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.failure.reason, ParseFailure::Reason::UnknownSkill);
  EXPECT_EQ(r.failure.line, 1);
}

TEST(ActionParse, LengthBound) {
  std::string text;
  for (int i = 0; i < 33; ++i) text += "move(object_index=0)\n";
  auto r = parse_action_sequence(text);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.failure.reason, ParseFailure::Reason::TooLong);
  text.erase(text.rfind("move"));
  EXPECT_TRUE(parse_action_sequence(text).ok());
}

TEST(ActionParse, FailureReasons) {
  using Rn = ParseFailure::Reason;
  auto reason = [](std::string_view t) { return parse_action_sequence(t).failure.reason; };
  EXPECT_EQ(reason(""), Rn::NoActions);
  EXPECT_EQ(reason("I will now think about it."), Rn::NoActions);
  EXPECT_EQ(reason("move(object_index=x)"), Rn::BadValue);
  EXPECT_EQ(reason("move(object_index=-1)"), Rn::BadValue);
  EXPECT_EQ(reason("move(object_index=1, relation=ontop)"), Rn::ArityMismatch);
  EXPECT_EQ(reason("place(object_index=1)"), Rn::ArityMismatch);
  EXPECT_EQ(reason("place(object_index=1, object_index=2)"), Rn::ArityMismatch);
  EXPECT_EQ(reason("place(object_index=1, relation=under)"), Rn::BadValue);
  EXPECT_EQ(reason("turn(yaw=nan)"), Rn::BadValue);
  EXPECT_EQ(reason("move(object_index=1"), Rn::Syntax);
  EXPECT_EQ(reason("move(object_index=1)\nthen stop"), Rn::Syntax);
  EXPECT_EQ(reason("move_forward(distance=-1, yaw=0)"), Rn::BadValue);
}

TEST(ActionParse, TolerantLayer) {
  auto r = parse_action_sequence(
      "Sure, here is my plan.\n```text\n  moveto(3)  \npickup(object_index=3)\n"
      "place(object_index=1, relation=inside)\n```\n\n");
  ASSERT_TRUE(r.ok()) << r.failure.detail;
  EXPECT_EQ(r.seq->actions,
            (std::vector<Action>{Action::move(3), Action::pick_up(3), Action::place(1, Relation::Inside)}));
  auto named_any_order = parse_action_sequence("move_forward(yaw=1.5, distance=0.5)");
  ASSERT_TRUE(named_any_order.ok());
  EXPECT_EQ(named_any_order.seq->actions[0], Action::move_forward(0.5, 1.5));
}

TEST(ActionParse, CanonicalRoundTrip) {
  ActionSeq seq{{Action::move(0), Action::turn(-2.3561944901923448), Action::pick_up(4),
                 Action::place(7, Relation::OnTop), Action::move_forward(0.1 + 0.2, 3.0), Action::open(1),
                 Action::close(1), Action::toggle_on(2), Action::toggle_off(2), Action::heat(4, 1),
                 Action::cook(4, 5), Action::froze(4, 6), Action::go_to_room("living_room")}};
  std::string text = serialize_actions(seq);
  auto r = parse_action_sequence(text);
  ASSERT_TRUE(r.ok()) << r.failure.detail;
  EXPECT_EQ(*r.seq, seq);
  EXPECT_EQ(serialize_actions(*r.seq), text);
  EXPECT_EQ(serialize_action(Action::place(7, Relation::OnTop)), "place(object_index=7, relation=ontop)");
  EXPECT_EQ(serialize_action(Action::move_forward(0.5, 0)), "move_forward(distance=0.5, yaw=0)");
}

TEST(Prompt, HeatChickenMatchesGolden) {
  TaskDef t = parse_task(kHeatChickenTask);
  SceneDoc scene = heat_chicken_kitchen();
  std::string prompt = render_prompt(t, scene);
  EXPECT_EQ(prompt, render_prompt(t, scene));
  std::ifstream in(std::string(TG_TEST_DIR) + "/golden/heat_chicken_prompt.txt");
  ASSERT_TRUE(in) << "missing golden file";
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(prompt, ss.str());
  EXPECT_NE(prompt.find("[1] microwave_0 (microwave) in kitchen, ontop [0] counter_0; state: closed off"),
            std::string::npos);
}

TEST(Prompt, EmptySceneStillHasFourSections) {
  TaskDef t = parse_task("(define (task t) (:fixtures a) (:goal (and (open a))))");
  SceneDoc scene;
  scene.rooms.push_back({"room", {0, 0, 2, 2}, "living"});
  scene.robot = {{1, 1, 0, 0}, "room", std::nullopt};
  std::string p = render_prompt(t, scene);
  std::size_t a = p.find("## Task"), b = p.find("## Agent capabilities"), c = p.find("## Scene"),
              d = p.find("## Output format");
  ASSERT_NE(a, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_LT(c, d);
  EXPECT_NE(d, std::string::npos);
}
