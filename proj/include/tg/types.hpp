#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tg {

enum class Relation { OnTop, Inside };

std::string_view relation_name(Relation r);  // "ontop" / "inside"
std::optional<Relation> relation_from_name(std::string_view s);

enum class PredKind { OnTop, Inside, Under, NextTo, Open, ToggledOn, Heated, Cooked, Frozen };

inline constexpr std::array<PredKind, 9> kAllPredKinds = {
    PredKind::OnTop,  PredKind::Inside,    PredKind::Under,  PredKind::NextTo, PredKind::Open,
    PredKind::ToggledOn, PredKind::Heated, PredKind::Cooked, PredKind::Frozen};

bool is_binary(PredKind k);
std::string_view pred_name(PredKind k);  // lower-case task-file keyword
std::optional<PredKind> pred_from_name(std::string_view s);

/// Grounded predicate over object ids.
struct Predicate {
  PredKind kind = PredKind::Open;
  int subject = 0;
  int object = -1;  // -1 for unary kinds

  /// Throws std::invalid_argument when the arity or distinct-id rule is broken.
  static Predicate make(PredKind kind, int subject, int object = -1);

  friend bool operator==(const Predicate&, const Predicate&) = default;
  friend auto operator<=>(const Predicate&, const Predicate&) = default;
};

enum class Skill {
  Move,
  Turn,
  PickUp,
  Place,
  MoveForward,
  Open,
  Close,
  ToggleOn,
  ToggleOff,
  Heat,
  Cook,
  Froze,
  GoToRoom,
};

inline constexpr int kNumSkills = 13;

enum class Param { ObjectIndex, SourceIndex, Relation, Yaw, Distance, RoomName };

std::string_view param_key(Param p);

struct SkillSpec {
  Skill skill;
  std::string_view name;
  std::array<Param, 2> params;
  int arity;
  std::string_view summary;
};

const std::array<SkillSpec, kNumSkills>& skill_table();
const SkillSpec& skill_spec(Skill s);
std::optional<Skill> skill_from_name(std::string_view name);

/// One structured skill call. Only the fields named by the skill's table
/// entry are meaningful; the rest keep their defaults so that equality is
/// well defined.
struct Action {
  Skill skill = Skill::Move;
  int object_index = -1;
  int source_index = -1;
  Relation relation = Relation::OnTop;
  double yaw = 0.0;
  double distance = 0.0;
  std::string room_name;

  static Action move(int i) { return idx(Skill::Move, i); }
  static Action turn(double yaw) {
    Action a;
    a.skill = Skill::Turn;
    a.yaw = yaw;
    return a;
  }
  static Action pick_up(int i) { return idx(Skill::PickUp, i); }
  static Action place(int i, Relation r) {
    Action a = idx(Skill::Place, i);
    a.relation = r;
    return a;
  }
  static Action move_forward(double distance, double yaw) {
    Action a;
    a.skill = Skill::MoveForward;
    a.distance = distance;
    a.yaw = yaw;
    return a;
  }
  static Action open(int i) { return idx(Skill::Open, i); }
  static Action close(int i) { return idx(Skill::Close, i); }
  static Action toggle_on(int i) { return idx(Skill::ToggleOn, i); }
  static Action toggle_off(int i) { return idx(Skill::ToggleOff, i); }
  static Action heat(int i, int src) { return idx(Skill::Heat, i, src); }
  static Action cook(int i, int src) { return idx(Skill::Cook, i, src); }
  static Action froze(int i, int src) { return idx(Skill::Froze, i, src); }
  static Action go_to_room(std::string room) {
    Action a;
    a.skill = Skill::GoToRoom;
    a.room_name = std::move(room);
    return a;
  }
  static Action idx(Skill s, int i, int src = -1) {
    Action a;
    a.skill = s;
    a.object_index = i;
    a.source_index = src;
    return a;
  }

  friend bool operator==(const Action&, const Action&) = default;
};

/// Thrown when an action names an object index outside the scene.
struct UnknownObjectId : std::out_of_range {
  explicit UnknownObjectId(int id) : std::out_of_range("unknown object id " + std::to_string(id)), id(id) {}
  int id;
};

}  // namespace tg
