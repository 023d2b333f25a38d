#pragma once

#include <string>

#include "tg/world.hpp"

namespace tgtest {

struct Caps {
  bool surface = false, container = false, openable = false, toggleable = false;
  bool heat = false, cook = false, cold = false, grippable = false;
};

inline tg::ObjectInstance obj(int id, std::string name, std::string category, std::string room, tg::Pose2 pose,
                              tg::Extents half, Caps c = {}) {
  tg::ObjectInstance o;
  o.id = id;
  o.name = std::move(name);
  o.category = std::move(category);
  o.room = std::move(room);
  o.pose = pose;
  o.half_extents = half;
  o.flags.is_surface = c.surface;
  o.flags.is_container = c.container;
  o.flags.is_openable = c.openable;
  o.flags.is_toggleable = c.toggleable;
  o.flags.is_heat_source = c.heat;
  o.flags.is_cook_tool = c.cook;
  o.flags.is_cold_source = c.cold;
  o.flags.is_grippable = c.grippable;
  return o;
}

inline tg::ObjectInstance on(tg::ObjectInstance o, int parent, tg::Relation rel = tg::Relation::OnTop) {
  o.parent = tg::ParentLink{parent, rel};
  return o;
}

// Ids: 0 counter, 1 microwave (on counter), 2 chicken (on counter), 3 table.
inline tg::SceneDoc heat_chicken_kitchen() {
  tg::SceneDoc d;
  d.id = "kitchen_fixture";
  d.rooms.push_back({"kitchen", {0, 0, 4, 3}, "kitchen"});
  d.objects.push_back(obj(0, "counter_0", "counter", "kitchen", {0.5, 1.5, 0, 0}, {0.3, 1.0, 0.45},
                          {.surface = true}));
  d.objects.push_back(on(obj(1, "microwave_0", "microwave", "kitchen", {0.5, 2.0, 0.9, 0}, {0.25, 0.3, 0.15},
                             {.container = true, .openable = true, .toggleable = true, .heat = true}),
                         0));
  d.objects.push_back(
      on(obj(2, "chicken_0", "chicken", "kitchen", {0.5, 1.0, 0.9, 0}, {0.08, 0.06, 0.04}, {.grippable = true}),
         0));
  d.objects.push_back(obj(3, "table_0", "table", "kitchen", {2.5, 1.5, 0, 0}, {0.5, 0.3, 0.375},
                          {.surface = true}));
  d.robot.pose = {2.05, 0.55, 0, 0};
  d.robot.room = "kitchen";
  return d;
}

inline std::vector<tg::Action> heat_chicken_plan() {
  using tg::Action;
  return {Action::move(1),    Action::open(1),
          Action::move(2),    Action::pick_up(2),
          Action::move(1),    Action::place(1, tg::Relation::Inside),
          Action::close(1),   Action::toggle_on(1),
          Action::heat(2, 1)};
}

inline tg::CostModel no_spin() {
  tg::CostModel c;
  c.spin = false;
  return c;
}

}  // namespace tgtest

namespace tgtest {

inline const char* kHeatChickenTask = R"(;; instruction: Heat the chicken in the microwave.
;; family: kitchen
(define (task heat_chicken)
  (:objects
    chicken_0 - chicken)
  (:fixtures microwave_0 counter_0)
  (:init
    (ontop chicken_0 counter_0))
  (:goal (and
    (inside chicken_0 microwave_0)
    (heated chicken_0))))
)";

}  // namespace tgtest
