#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "tg/geometry.hpp"
#include "tg/types.hpp"

namespace tg {

// Fixed geometry of the simulator.
inline constexpr double kReach = 0.75;        // robot centre to footprint, manipulation
inline constexpr double kNearDistance = 0.5;  // NextTo threshold, centre to centre
inline constexpr double kGridRes = 0.10;
inline constexpr double kCarryHeight = 1.0;
inline constexpr int kPlacementsPerPair = 8;
inline constexpr double kPlacementGap = 0.02;
inline constexpr double kContainerWall = 0.02;

struct ObjectFlags {
  bool is_container = false;
  bool is_openable = false;
  bool is_toggleable = false;
  bool is_heat_source = false;
  bool is_cook_tool = false;
  bool is_cold_source = false;
  bool is_surface = false;
  bool is_grippable = false;

  friend bool operator==(const ObjectFlags&, const ObjectFlags&) = default;
};

struct ObjectStates {
  bool open = false;
  bool toggled_on = false;
  bool heated = false;
  bool cooked = false;
  bool frozen = false;

  friend bool operator==(const ObjectStates&, const ObjectStates&) = default;
};

struct ParentLink {
  int id = -1;
  Relation relation = Relation::OnTop;
  friend bool operator==(const ParentLink&, const ParentLink&) = default;
};

struct ObjectInstance {
  int id = 0;
  std::string name;
  std::string category;
  std::string room;
  Pose2 pose;
  Extents half_extents;
  ObjectFlags flags;
  ObjectStates states;
  std::optional<ParentLink> parent;

  Rect footprint() const { return tg::footprint(pose, half_extents); }
  Box box() const { return box_of(pose, half_extents); }
  double top_z() const { return pose.z + 2.0 * half_extents.hz; }

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct RoomSpec {
  std::string name;
  Rect rect;
  std::string function_tag;

  double area() const { return rect.area(); }
  friend bool operator==(const RoomSpec&, const RoomSpec&) = default;
};

struct RobotState {
  Pose2 pose;
  std::string room;
  std::optional<int> held;
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct WorldState {
  std::vector<RoomSpec> rooms;
  std::vector<ObjectInstance> objects;
  RobotState robot;
  int step_count = 0;

  const RoomSpec* find_room(std::string_view name) const;
  int room_index(std::string_view name) const;  // -1 when absent
  /// Throws UnknownObjectId.
  const ObjectInstance& object(int id) const;
  ObjectInstance& object(int id);
  int find_object(std::string_view name) const;  // -1 when absent
  bool is_held(int id) const { return robot.held && *robot.held == id; }
  /// Objects that stand on the floor and block navigation.
  bool on_floor(int id) const;
  bool is_ancestor(int ancestor, int id) const;
  /// True if the object or any ancestor sits inside a closed openable container.
  bool enclosed(int id) const;
  std::vector<int> children(int id) const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Serialized scene: the unit the factory emits and the workers load.
struct SceneDoc {
  std::string id;
  std::vector<RoomSpec> rooms;
  std::vector<ObjectInstance> objects;
  RobotState robot;

  friend bool operator==(const SceneDoc&, const SceneDoc&) = default;
};

struct MalformedScene : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string scene_to_text(const SceneDoc& doc);
SceneDoc scene_from_text(std::string_view text);  // throws MalformedScene
SceneDoc read_scene_file(const std::filesystem::path& path);
void write_scene_file(const std::filesystem::path& path, const SceneDoc& doc);

WorldState load_scene(const SceneDoc& doc);  // throws MalformedScene
SceneDoc save_scene(const WorldState& state, const std::string& id);

/// Occupancy of one room by floor objects, with the robot spawn cell and
/// BFS distances from it.
struct RoomGrid {
  std::string room;
  OccupancyGrid grid;
  std::optional<Cell> spawn;
  std::vector<int> spawn_dist;

  bool reachable(Cell c) const { return grid.in_bounds(c) && spawn_dist[grid.index(c)] >= 0; }
};

std::vector<RoomGrid> build_room_grids(const WorldState& state);

/// Free cells of `g` connected to the spawn whose centre is within reach of
/// `fp`, nearest first, ties by (row, col).
std::vector<Cell> standing_cells(const RoomGrid& g, const Rect& fp);

/// Collision-free resting poses for `subject` on/in `target`, at most `k`,
/// spread over the lattice of the receiving face.
std::vector<Pose2> sample_placements(const WorldState& state, int subject, int target, Relation rel,
                                     int k = kPlacementsPerPair);

/// Pose collides with some object other than the subject, the target and the
/// target's ancestors.
bool placement_blocked(const WorldState& state, int subject, int target, const Pose2& pose);

struct OutcomeCache {
  std::map<std::tuple<int, int, Relation>, std::vector<Pose2>> placements;
  std::vector<std::vector<Cell>> standing;  // per object id
  std::vector<Pose2> standing_pose;         // object pose the entry was built for
  std::vector<std::string> standing_room;
  std::vector<RoomGrid> grids;              // floor occupancy at build time

  const RoomGrid* grid(std::string_view room) const;
  const std::vector<Pose2>& candidates(int subject, int target, Relation rel) const;
  /// Cached standing cells, or a fresh computation from the cached grid when
  /// the object has moved since the cache was built.
  std::vector<Cell> standing_for(const WorldState& state, int id) const;
};

OutcomeCache precompute_outcome_cache(const WorldState& state);

enum class FailReason {
  Ok,
  NotAdjacent,
  HandFull,
  HandEmpty,
  NotOpenable,
  AlreadyOpen,
  AlreadyClosed,
  ContainerClosed,
  NotToggleable,
  AlreadyOn,
  AlreadyOff,
  NotHeatSource,
  NotCookTool,
  NotColdSource,
  NoSuchRoom,
  NoFreePlacement,
  NotGrippable,
  NotReceptacle,
  Blocked,
  Unreachable,
};

std::string_view fail_reason_name(FailReason r);

struct PreconditionResult {
  FailReason reason = FailReason::Ok;
  bool ok() const { return reason == FailReason::Ok; }
};

struct TransitionResult {
  bool ok = false;
  FailReason reason = FailReason::Ok;
  std::vector<int> objects_touched;  // sorted ids named by the action
  long micro_steps = 0;
};

struct CostModel {
  double per_step_ms = 1.0;
  double fast_action_ms = 0.2;
  double scene_load_ms = 2000.0;
  double step_length = 0.05;  // meters per navigation micro-step
  double turn_step = 0.05;    // radians per turning micro-step
  int settle_iterations = 50;
  bool spin = true;  // false: count micro-steps without spending time
};

/// Burns CPU (yielding between checks) until `ms` milliseconds have passed.
void busy_work(double ms);

bool robot_adjacent(const WorldState& state, int id);

/// Throws UnknownObjectId when the action names an id outside the scene.
PreconditionResult check_precondition(const WorldState& state, const OutcomeCache& cache,
                                      const Action& a);

TransitionResult apply_action_fast(WorldState& state, const Action& a, const OutcomeCache& cache,
                                   const CostModel& cost = {});

/// Same successor as the fast path; integrates micro-steps and charges
/// `cost.per_step_ms` for each.
TransitionResult apply_action_micro(WorldState& state, const Action& a, const OutcomeCache& cache,
                                    const CostModel& cost = {});

bool eval_predicate(const WorldState& state, const Predicate& p);

/// Pairs of objects whose boxes overlap without one containing the other.
std::vector<std::pair<int, int>> find_overlaps(const WorldState& state);

enum class ExecPath { Fast, Micro };

/// Loaded scene with its cache and the snapshot used for resets.
class World {
 public:
  explicit World(const SceneDoc& doc);

  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const OutcomeCache& cache() const { return cache_; }
  const std::string& scene_id() const { return scene_id_; }

  PreconditionResult check(const Action& a) const { return check_precondition(state_, cache_, a); }
  TransitionResult apply(const Action& a, ExecPath path, const CostModel& cost = {});
  void reset() { state_ = snapshot_; }

 private:
  std::string scene_id_;
  WorldState state_;
  WorldState snapshot_;
  OutcomeCache cache_;
};

}  // namespace tg
