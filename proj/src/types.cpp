#include "tg/types.hpp"

namespace tg {

std::string_view relation_name(Relation r) { return r == Relation::OnTop ? "ontop" : "inside"; }

std::optional<Relation> relation_from_name(std::string_view s) {
  if (s == "ontop") return Relation::OnTop;
  if (s == "inside") return Relation::Inside;
  return std::nullopt;
}

bool is_binary(PredKind k) {
  return k == PredKind::OnTop || k == PredKind::Inside || k == PredKind::Under || k == PredKind::NextTo;
}

std::string_view pred_name(PredKind k) {
  switch (k) {
    case PredKind::OnTop: return "ontop";
    case PredKind::Inside: return "inside";
    case PredKind::Under: return "under";
    case PredKind::NextTo: return "nextto";
    case PredKind::Open: return "open";
    case PredKind::ToggledOn: return "toggled_on";
    case PredKind::Heated: return "heated";
    case PredKind::Cooked: return "cooked";
    case PredKind::Frozen: return "frozen";
  }
  return "?";
}

std::optional<PredKind> pred_from_name(std::string_view s) {
  for (PredKind k : kAllPredKinds)
    if (pred_name(k) == s) return k;
  return std::nullopt;
}

Predicate Predicate::make(PredKind kind, int subject, int object) {
  if (is_binary(kind)) {
    if (object < 0) throw std::invalid_argument(std::string(pred_name(kind)) + " needs two ids");
    if (object == subject)
      throw std::invalid_argument(std::string(pred_name(kind)) + " needs distinct ids");
  } else if (object != -1) {
    throw std::invalid_argument(std::string(pred_name(kind)) + " takes one id");
  }
  if (subject < 0) throw std::invalid_argument("negative object id");
  return {kind, subject, object};
}

std::string_view param_key(Param p) {
  switch (p) {
    case Param::ObjectIndex: return "object_index";
    case Param::SourceIndex: return "source_index";
    case Param::Relation: return "relation";
    case Param::Yaw: return "yaw";
    case Param::Distance: return "distance";
    case Param::RoomName: return "room_name";
  }
  return "?";
}

const std::array<SkillSpec, kNumSkills>& skill_table() {
  using P = Param;
  static const std::array<SkillSpec, kNumSkills> table = {{
      {Skill::Move, "move", {P::ObjectIndex, P::ObjectIndex}, 1, "walk next to an object"},
      {Skill::Turn, "turn", {P::Yaw, P::Yaw}, 1, "rotate in place to an absolute heading (radians)"},
      {Skill::PickUp, "pick_up", {P::ObjectIndex, P::ObjectIndex}, 1, "grasp a nearby object; hand must be empty"},
      {Skill::Place, "place", {P::ObjectIndex, P::Relation}, 2,
       "put the held object ontop of or inside a nearby object"},
      {Skill::MoveForward, "move_forward", {P::Distance, P::Yaw}, 2,
       "drive a distance (meters) along an absolute heading (radians)"},
      {Skill::Open, "open", {P::ObjectIndex, P::ObjectIndex}, 1, "open a nearby openable object"},
      {Skill::Close, "close", {P::ObjectIndex, P::ObjectIndex}, 1, "close a nearby openable object"},
      {Skill::ToggleOn, "toggle_on", {P::ObjectIndex, P::ObjectIndex}, 1, "switch a nearby appliance on"},
      {Skill::ToggleOff, "toggle_off", {P::ObjectIndex, P::ObjectIndex}, 1, "switch a nearby appliance off"},
      {Skill::Heat, "heat_object_with_source", {P::ObjectIndex, P::SourceIndex}, 2,
       "heat an object with a heat source that is on"},
      {Skill::Cook, "cook_object_with_tool", {P::ObjectIndex, P::SourceIndex}, 2,
       "cook an object with a cooking tool"},
      {Skill::Froze, "froze_object_with_source", {P::ObjectIndex, P::SourceIndex}, 2,
       "freeze an object with a cold source"},
      {Skill::GoToRoom, "go_to_room", {P::RoomName, P::RoomName}, 1, "walk to a room"},
  }};
  return table;
}

const SkillSpec& skill_spec(Skill s) { return skill_table()[static_cast<std::size_t>(s)]; }

std::optional<Skill> skill_from_name(std::string_view name) {
  for (const auto& spec : skill_table())
    if (spec.name == name) return spec.skill;
  return std::nullopt;
}

}  // namespace tg
