#include "tg/world.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace tg {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------- state

const RoomSpec* WorldState::find_room(std::string_view name) const {
  for (const auto& r : rooms)
    if (r.name == name) return &r;
  return nullptr;
}

int WorldState::room_index(std::string_view name) const {
  for (std::size_t i = 0; i < rooms.size(); ++i)
    if (rooms[i].name == name) return static_cast<int>(i);
  return -1;
}

const ObjectInstance& WorldState::object(int id) const {
  if (id < 0 || id >= static_cast<int>(objects.size())) throw UnknownObjectId(id);
  return objects[static_cast<std::size_t>(id)];
}

ObjectInstance& WorldState::object(int id) {
  if (id < 0 || id >= static_cast<int>(objects.size())) throw UnknownObjectId(id);
  return objects[static_cast<std::size_t>(id)];
}

int WorldState::find_object(std::string_view name) const {
  for (const auto& o : objects)
    if (o.name == name) return o.id;
  return -1;
}

bool WorldState::on_floor(int id) const { return !object(id).parent && !is_held(id); }

bool WorldState::is_ancestor(int ancestor, int id) const {
  const ObjectInstance* o = &object(id);
  for (std::size_t guard = 0; o->parent && guard <= objects.size(); ++guard) {
    if (o->parent->id == ancestor) return true;
    o = &object(o->parent->id);
  }
  return false;
}

bool WorldState::enclosed(int id) const {
  const ObjectInstance* o = &object(id);
  for (std::size_t guard = 0; o->parent && guard <= objects.size(); ++guard) {
    const ObjectInstance& p = object(o->parent->id);
    if (o->parent->relation == Relation::Inside && p.flags.is_openable && !p.states.open) return true;
    o = &p;
  }
  return false;
}

std::vector<int> WorldState::children(int id) const {
  std::vector<int> out;
  for (const auto& o : objects)
    if (o.parent && o.parent->id == id) out.push_back(o.id);
  return out;
}

// ---------------------------------------------------------------- scene doc

namespace {

constexpr std::array<std::pair<const char*, bool ObjectFlags::*>, 8> kFlagNames = {{
    {"container", &ObjectFlags::is_container},
    {"openable", &ObjectFlags::is_openable},
    {"toggleable", &ObjectFlags::is_toggleable},
    {"heat_source", &ObjectFlags::is_heat_source},
    {"cook_tool", &ObjectFlags::is_cook_tool},
    {"cold_source", &ObjectFlags::is_cold_source},
    {"surface", &ObjectFlags::is_surface},
    {"grippable", &ObjectFlags::is_grippable},
}};

constexpr std::array<std::pair<const char*, bool ObjectStates::*>, 5> kStateNames = {{
    {"open", &ObjectStates::open},
    {"toggled_on", &ObjectStates::toggled_on},
    {"heated", &ObjectStates::heated},
    {"cooked", &ObjectStates::cooked},
    {"frozen", &ObjectStates::frozen},
}};

ojson pose_json(const Pose2& p) { return ojson::array({p.x, p.y, p.z, p.yaw}); }

Pose2 pose_from(const ojson& j) {
  if (!j.is_array() || j.size() != 4) throw MalformedScene("pose must be [x, y, z, yaw]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::string scene_to_text(const SceneDoc& doc) {
  ojson j;
  j["format"] = "tg-scene";
  j["version"] = 1;
  j["id"] = doc.id;
  j["rooms"] = ojson::array();
  for (const auto& r : doc.rooms)
    j["rooms"].push_back({{"name", r.name},
                          {"rect", ojson::array({r.rect.x0, r.rect.y0, r.rect.x1, r.rect.y1})},
                          {"function", r.function_tag}});
  j["objects"] = ojson::array();
  for (const auto& o : doc.objects) {
    ojson flags = ojson::array();
    for (const auto& [name, field] : kFlagNames)
      if (o.flags.*field) flags.push_back(name);
    ojson states = ojson::array();
    for (const auto& [name, field] : kStateNames)
      if (o.states.*field) states.push_back(name);
    ojson jo{{"id", o.id},
             {"name", o.name},
             {"category", o.category},
             {"room", o.room},
             {"pose", pose_json(o.pose)},
             {"half_extents", ojson::array({o.half_extents.hx, o.half_extents.hy, o.half_extents.hz})},
             {"flags", flags},
             {"states", states}};
    if (o.parent)
      jo["parent"] = {{"id", o.parent->id}, {"relation", relation_name(o.parent->relation)}};
    else
      jo["parent"] = nullptr;
    j["objects"].push_back(std::move(jo));
  }
  j["robot"] = {{"pose", pose_json(doc.robot.pose)}, {"room", doc.robot.room}};
  if (doc.robot.held)
    j["robot"]["held"] = *doc.robot.held;
  else
    j["robot"]["held"] = nullptr;
  return j.dump(2) + "\n";
}

SceneDoc scene_from_text(std::string_view text) {
  try {
    ojson j = ojson::parse(text);
    if (j.value("format", "") != "tg-scene") throw MalformedScene("not a tg-scene document");
    if (j.value("version", 0) != 1) throw MalformedScene("unsupported scene version");
    SceneDoc doc;
    doc.id = j.value("id", "");
    for (const auto& jr : j.at("rooms")) {
      const auto& rect = jr.at("rect");
      if (!rect.is_array() || rect.size() != 4) throw MalformedScene("room rect must have 4 numbers");
      doc.rooms.push_back({jr.at("name").get<std::string>(),
                           {rect[0].get<double>(), rect[1].get<double>(), rect[2].get<double>(),
                            rect[3].get<double>()},
                           jr.value("function", "")});
    }
    for (const auto& jo : j.at("objects")) {
      ObjectInstance o;
      o.id = jo.at("id").get<int>();
      o.name = jo.at("name").get<std::string>();
      o.category = jo.at("category").get<std::string>();
      o.room = jo.at("room").get<std::string>();
      o.pose = pose_from(jo.at("pose"));
      const auto& he = jo.at("half_extents");
      if (!he.is_array() || he.size() != 3) throw MalformedScene("half_extents must have 3 numbers");
      o.half_extents = {he[0].get<double>(), he[1].get<double>(), he[2].get<double>()};
      for (const auto& f : jo.value("flags", ojson::array())) {
        auto name = f.get<std::string>();
        auto it = std::find_if(kFlagNames.begin(), kFlagNames.end(),
                               [&](const auto& e) { return name == e.first; });
        if (it == kFlagNames.end()) throw MalformedScene("unknown flag '" + name + "'");
        o.flags.*(it->second) = true;
      }
      for (const auto& s : jo.value("states", ojson::array())) {
        auto name = s.get<std::string>();
        auto it = std::find_if(kStateNames.begin(), kStateNames.end(),
                               [&](const auto& e) { return name == e.first; });
        if (it == kStateNames.end()) throw MalformedScene("unknown state '" + name + "'");
        o.states.*(it->second) = true;
      }
      if (jo.contains("parent") && !jo["parent"].is_null()) {
        auto rel = relation_from_name(jo["parent"].at("relation").get<std::string>());
        if (!rel) throw MalformedScene("parent relation must be ontop or inside");
        o.parent = ParentLink{jo["parent"].at("id").get<int>(), *rel};
      }
      doc.objects.push_back(std::move(o));
    }
    const auto& jr = j.at("robot");
    doc.robot.pose = pose_from(jr.at("pose"));
    doc.robot.room = jr.at("room").get<std::string>();
    if (jr.contains("held") && !jr["held"].is_null()) doc.robot.held = jr["held"].get<int>();
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedScene(std::string("scene document: ") + e.what());
  }
}

SceneDoc read_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MalformedScene("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_text(ss.str());
}

void write_scene_file(const std::filesystem::path& path, const SceneDoc& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << scene_to_text(doc);
}

// ---------------------------------------------------------------- load

namespace {

constexpr double kEps = 1e-6;

bool finite_pose(const Pose2& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && std::isfinite(p.yaw);
}

void sync_held(WorldState& s) {
  if (!s.robot.held) return;
  ObjectInstance& h = s.object(*s.robot.held);
  h.pose.x = s.robot.pose.x;
  h.pose.y = s.robot.pose.y;
  h.pose.z = kCarryHeight;
  h.room = s.robot.room;
}

}  // namespace

WorldState load_scene(const SceneDoc& doc) {
  WorldState s;
  s.rooms = doc.rooms;
  s.objects = doc.objects;
  s.robot = doc.robot;

  std::set<std::string> room_names;
  for (const auto& r : s.rooms) {
    if (r.name.empty()) throw MalformedScene("room with empty name");
    if (!room_names.insert(r.name).second) throw MalformedScene("duplicate room '" + r.name + "'");
    if (!r.rect.valid()) throw MalformedScene("room '" + r.name + "' has an empty rect");
  }
  for (std::size_t i = 0; i < s.rooms.size(); ++i)
    for (std::size_t j = i + 1; j < s.rooms.size(); ++j)
      if (s.rooms[i].rect.overlaps(s.rooms[j].rect))
        throw MalformedScene("rooms '" + s.rooms[i].name + "' and '" + s.rooms[j].name + "' overlap");

  std::set<std::string> names;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    ObjectInstance& o = s.objects[i];
    if (o.id != static_cast<int>(i))
      throw MalformedScene("object ids must be 0..n-1 in order (duplicate or gap at " +
                           std::to_string(o.id) + ")");
    if (o.name.empty() || !names.insert(o.name).second)
      throw MalformedScene("object names must be unique and non-empty ('" + o.name + "')");
    if (!finite_pose(o.pose)) throw MalformedScene("object '" + o.name + "' has a non-finite pose");
    if (!(o.half_extents.hx > 0 && o.half_extents.hy > 0 && o.half_extents.hz > 0))
      throw MalformedScene("object '" + o.name + "' needs positive half extents");
    if (o.pose.z < -kEps) throw MalformedScene("object '" + o.name + "' is below the floor");
    o.pose.yaw = normalize_yaw(o.pose.yaw);
    if (o.states.open && !o.flags.is_openable)
      throw MalformedScene("object '" + o.name + "' is open but not openable");
    if (o.states.toggled_on && !o.flags.is_toggleable)
      throw MalformedScene("object '" + o.name + "' is on but not toggleable");
    if (!room_names.count(o.room)) throw MalformedScene("object '" + o.name + "' names unknown room");
  }

  if (!finite_pose(s.robot.pose)) throw MalformedScene("robot pose is not finite");
  s.robot.pose.yaw = normalize_yaw(s.robot.pose.yaw);
  const RoomSpec* robot_room = s.find_room(s.robot.room);
  if (!robot_room) throw MalformedScene("robot names unknown room '" + s.robot.room + "'");
  if (!robot_room->rect.contains(s.robot.pose.x, s.robot.pose.y))
    throw MalformedScene("robot lies outside its room");
  if (s.robot.held) {
    int h = *s.robot.held;
    if (h < 0 || h >= static_cast<int>(s.objects.size())) throw MalformedScene("held id out of range");
    if (s.objects[h].parent) throw MalformedScene("held object cannot have a parent");
    if (!s.objects[h].flags.is_grippable) throw MalformedScene("held object is not grippable");
    sync_held(s);
  }

  const int n = static_cast<int>(s.objects.size());
  for (const auto& o : s.objects) {
    if (!o.parent) continue;
    if (o.parent->id < 0 || o.parent->id >= n || o.parent->id == o.id)
      throw MalformedScene("object '" + o.name + "' has an invalid parent");
    int cur = o.parent->id;
    for (int steps = 0; cur >= 0; ++steps) {
      if (cur == o.id || steps > n) throw MalformedScene("parent cycle through '" + o.name + "'");
      cur = s.objects[cur].parent ? s.objects[cur].parent->id : -1;
    }
    const ObjectInstance& p = s.objects[o.parent->id];
    if (s.is_held(o.parent->id)) throw MalformedScene("object '" + o.name + "' rests on the held object");
    if (p.room != o.room) throw MalformedScene("object '" + o.name + "' is in a different room from its parent");
    if (o.parent->relation == Relation::OnTop) {
      if (!p.flags.is_surface) throw MalformedScene("'" + p.name + "' is not a surface");
      if (std::abs(o.pose.z - p.top_z()) > kEps)
        throw MalformedScene("object '" + o.name + "' does not rest on top of '" + p.name + "'");
    } else {
      if (!p.flags.is_container) throw MalformedScene("'" + p.name + "' is not a container");
      if (o.pose.z < p.pose.z - kEps || o.top_z() > p.top_z() + kEps)
        throw MalformedScene("object '" + o.name + "' does not fit inside '" + p.name + "'");
    }
    if (!p.footprint().contains(o.footprint(), kEps))
      throw MalformedScene("object '" + o.name + "' sticks out of '" + p.name + "'");
  }
  for (const auto& o : s.objects) {
    if (s.is_held(o.id)) continue;
    if (!s.find_room(o.room)->rect.contains(o.footprint(), kEps))
      throw MalformedScene("object '" + o.name + "' lies outside room '" + o.room + "'");
  }
  return s;
}

SceneDoc save_scene(const WorldState& state, const std::string& id) {
  return {id, state.rooms, state.objects, state.robot};
}

// ---------------------------------------------------------------- grids and cache

std::vector<RoomGrid> build_room_grids(const WorldState& state) {
  std::vector<RoomGrid> out;
  for (const auto& r : state.rooms) {
    RoomGrid g{r.name, OccupancyGrid(r.rect, kGridRes), std::nullopt, {}};
    for (const auto& o : state.objects)
      if (o.room == r.name && state.on_floor(o.id)) g.grid.mark(o.footprint(), o.id);
    g.spawn = nearest_free_to_center(g.grid);
    if (g.spawn)
      g.spawn_dist = bfs_distances(g.grid, *g.spawn);
    else
      g.spawn_dist.assign(g.grid.size(), -1);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Cell> standing_cells(const RoomGrid& g, const Rect& fp) {
  std::vector<std::pair<double, Cell>> found;
  for (std::size_t i = 0; i < g.grid.size(); ++i) {
    Cell c = g.grid.cell_at(i);
    if (g.spawn_dist[i] < 0) continue;
    auto [x, y] = g.grid.cell_center(c);
    double d = point_rect_distance(x, y, fp);
    if (d <= kReach + 1e-9) found.push_back({d, c});
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<Cell> out;
  out.reserve(found.size());
  for (const auto& f : found) out.push_back(f.second);
  return out;
}

bool placement_blocked(const WorldState& state, int subject, int target, const Pose2& pose) {
  Box b = box_of(pose, state.object(subject).half_extents);
  for (const auto& o : state.objects) {
    if (o.id == subject || o.id == target || state.is_held(o.id)) continue;
    if (state.is_ancestor(o.id, target) || state.is_ancestor(subject, o.id)) continue;
    if (b.overlaps(o.box())) return true;
  }
  return false;
}

std::vector<Pose2> sample_placements(const WorldState& state, int subject, int target, Relation rel,
                                     int k) {
  const ObjectInstance& sub = state.object(subject);
  const ObjectInstance& tgt = state.object(target);
  if (subject == target || k <= 0) return {};
  Rect face;
  double z;
  if (rel == Relation::OnTop) {
    if (!tgt.flags.is_surface) return {};
    face = tgt.footprint();
    z = tgt.top_z();
  } else {
    if (!tgt.flags.is_container) return {};
    face = tgt.footprint().shrunk(kContainerWall);
    z = tgt.pose.z + kContainerWall;
    if (z + 2.0 * sub.half_extents.hz > tgt.top_z() - kContainerWall + 1e-9) return {};
  }
  const double hx = sub.half_extents.hx;
  const double hy = sub.half_extents.hy;
  if (face.width() < 2.0 * hx - 1e-12 || face.height() < 2.0 * hy - 1e-12) return {};

  auto axis = [](double lo, double len, double h) {
    double pitch = 2.0 * h + kPlacementGap;
    int count = static_cast<int>(std::floor((len - 2.0 * h) / pitch + 1e-9)) + 1;
    double margin = 0.5 * (len - 2.0 * h - (count - 1) * pitch);
    std::vector<double> v;
    for (int i = 0; i < count; ++i) v.push_back(lo + margin + h + i * pitch);
    return v;
  };
  std::vector<double> xs = axis(face.x0, face.width(), hx);
  std::vector<double> ys = axis(face.y0, face.height(), hy);

  std::vector<Pose2> free;
  for (double y : ys)
    for (double x : xs) {
      Pose2 p{x, y, z, 0.0};
      if (!placement_blocked(state, subject, target, p)) free.push_back(p);
    }
  if (static_cast<int>(free.size()) <= k) return free;
  std::vector<Pose2> picked;
  const std::size_t n = free.size();
  for (int i = 0; i < k; ++i) picked.push_back(free[static_cast<std::size_t>(i) * n / k]);
  return picked;
}

const RoomGrid* OutcomeCache::grid(std::string_view room) const {
  for (const auto& g : grids)
    if (g.room == room) return &g;
  return nullptr;
}

const std::vector<Pose2>& OutcomeCache::candidates(int subject, int target, Relation rel) const {
  static const std::vector<Pose2> kEmpty;
  auto it = placements.find({subject, target, rel});
  return it == placements.end() ? kEmpty : it->second;
}

std::vector<Cell> OutcomeCache::standing_for(const WorldState& state, int id) const {
  const ObjectInstance& o = state.object(id);
  auto idx = static_cast<std::size_t>(id);
  if (idx < standing.size() && standing_pose[idx] == o.pose && standing_room[idx] == o.room)
    return standing[idx];
  const RoomGrid* g = grid(o.room);
  return g ? standing_cells(*g, o.footprint()) : std::vector<Cell>{};
}

OutcomeCache precompute_outcome_cache(const WorldState& state) {
  OutcomeCache c;
  c.grids = build_room_grids(state);
  for (const auto& o : state.objects) {
    const RoomGrid* g = c.grid(o.room);
    c.standing.push_back(g ? standing_cells(*g, o.footprint()) : std::vector<Cell>{});
    c.standing_pose.push_back(o.pose);
    c.standing_room.push_back(o.room);
  }
  for (const auto& sub : state.objects) {
    if (!sub.flags.is_grippable) continue;
    for (const auto& tgt : state.objects) {
      if (tgt.id == sub.id) continue;
      if (tgt.flags.is_surface)
        c.placements[{sub.id, tgt.id, Relation::OnTop}] =
            sample_placements(state, sub.id, tgt.id, Relation::OnTop);
      if (tgt.flags.is_container)
        c.placements[{sub.id, tgt.id, Relation::Inside}] =
            sample_placements(state, sub.id, tgt.id, Relation::Inside);
    }
  }
  return c;
}

// ---------------------------------------------------------------- predicates

bool robot_adjacent(const WorldState& state, int id) {
  const ObjectInstance& o = state.object(id);
  if (state.is_held(id)) return true;
  if (o.room != state.robot.room) return false;
  return point_rect_distance(state.robot.pose.x, state.robot.pose.y, o.footprint()) <= kReach + 1e-9;
}

bool eval_predicate(const WorldState& state, const Predicate& p) {
  const ObjectInstance& a = state.object(p.subject);
  switch (p.kind) {
    case PredKind::Open: return a.states.open;
    case PredKind::ToggledOn: return a.states.toggled_on;
    case PredKind::Heated: return a.states.heated;
    case PredKind::Cooked: return a.states.cooked;
    case PredKind::Frozen: return a.states.frozen;
    default: break;
  }
  const ObjectInstance& b = state.object(p.object);
  if (p.kind == PredKind::NextTo) {
    return a.room == b.room &&
           std::hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y) <= kNearDistance + 1e-9;
  }
  if (state.is_held(a.id) || state.is_held(b.id)) return false;
  switch (p.kind) {
    case PredKind::OnTop:
      if (a.parent && a.parent->id == b.id && a.parent->relation == Relation::OnTop) return true;
      return b.footprint().contains(a.pose.x, a.pose.y) && std::abs(a.pose.z - b.top_z()) <= kEps;
    case PredKind::Inside:
      return a.parent && a.parent->id == b.id && a.parent->relation == Relation::Inside;
    case PredKind::Under:
      return a.footprint().overlaps(b.footprint()) && a.pose.z + kEps < b.pose.z;
    default:
      return false;
  }
}

std::vector<std::pair<int, int>> find_overlaps(const WorldState& state) {
  std::vector<std::pair<int, int>> out;
  const auto& objs = state.objects;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    if (state.is_held(objs[i].id)) continue;
    for (std::size_t j = i + 1; j < objs.size(); ++j) {
      if (state.is_held(objs[j].id) || objs[i].room != objs[j].room) continue;
      if (state.is_ancestor(objs[i].id, objs[j].id) || state.is_ancestor(objs[j].id, objs[i].id)) continue;
      if (objs[i].box().overlaps(objs[j].box())) out.push_back({objs[i].id, objs[j].id});
    }
  }
  return out;
}

// ---------------------------------------------------------------- execution

std::string_view fail_reason_name(FailReason r) {
  switch (r) {
    case FailReason::Ok: return "Ok";
    case FailReason::NotAdjacent: return "NotAdjacent";
    case FailReason::HandFull: return "HandFull";
    case FailReason::HandEmpty: return "HandEmpty";
    case FailReason::NotOpenable: return "NotOpenable";
    case FailReason::AlreadyOpen: return "AlreadyOpen";
    case FailReason::AlreadyClosed: return "AlreadyClosed";
    case FailReason::ContainerClosed: return "ContainerClosed";
    case FailReason::NotToggleable: return "NotToggleable";
    case FailReason::AlreadyOn: return "AlreadyOn";
    case FailReason::AlreadyOff: return "AlreadyOff";
    case FailReason::NotHeatSource: return "NotHeatSource";
    case FailReason::NotCookTool: return "NotCookTool";
    case FailReason::NotColdSource: return "NotColdSource";
    case FailReason::NoSuchRoom: return "NoSuchRoom";
    case FailReason::NoFreePlacement: return "NoFreePlacement";
    case FailReason::NotGrippable: return "NotGrippable";
    case FailReason::NotReceptacle: return "NotReceptacle";
    case FailReason::Blocked: return "Blocked";
    case FailReason::Unreachable: return "Unreachable";
  }
  return "?";
}

void busy_work(double ms) {
  if (ms <= 0.0) return;
  auto until = std::chrono::steady_clock::now() + std::chrono::duration<double, std::milli>(ms);
  while (std::chrono::steady_clock::now() < until) std::this_thread::yield();
}

namespace {

using FR = FailReason;

void require_ids(const WorldState& s, const Action& a) {
  const auto& spec = skill_spec(a.skill);
  for (int i = 0; i < spec.arity; ++i) {
    if (spec.params[i] == Param::ObjectIndex) s.object(a.object_index);
    if (spec.params[i] == Param::SourceIndex) s.object(a.source_index);
  }
}

std::optional<Pose2> first_free_placement(const WorldState& s, const OutcomeCache& cache, int subject,
                                          int target, Relation rel) {
  for (const Pose2& p : cache.candidates(subject, target, rel))
    if (!placement_blocked(s, subject, target, p)) return p;
  return std::nullopt;
}

Pose2 cell_pose(const RoomGrid& g, Cell c, double yaw) {
  auto [x, y] = g.grid.cell_center(c);
  return {x, y, 0.0, yaw};
}

double heading_to(const Pose2& from, double x, double y, double fallback) {
  double dx = x - from.x, dy = y - from.y;
  if (std::abs(dx) < 1e-12 && std::abs(dy) < 1e-12) return fallback;
  return normalize_yaw(std::atan2(dy, dx));
}

/// End pose of move_forward, if the straight segment stays on free,
/// reachable floor inside the current room.
std::optional<Pose2> forward_target(const WorldState& s, const OutcomeCache& cache, double dist, double yaw) {
  if (!std::isfinite(dist) || !std::isfinite(yaw) || dist < 0.0) return std::nullopt;
  const RoomSpec* room = s.find_room(s.robot.room);
  const RoomGrid* g = cache.grid(s.robot.room);
  if (!room || !g) return std::nullopt;
  const double c = std::cos(yaw), sn = std::sin(yaw);
  Pose2 end{s.robot.pose.x + dist * c, s.robot.pose.y + dist * sn, 0.0, normalize_yaw(yaw)};
  const double step = 0.05;
  int samples = static_cast<int>(std::ceil(dist / step - 1e-6));
  for (int i = 1; i <= samples; ++i) {
    double t = std::min(i * step, dist);
    double x = s.robot.pose.x + t * c, y = s.robot.pose.y + t * sn;
    if (!room->rect.contains(x, y)) return std::nullopt;
    if (g->grid.blocked(g->grid.cell_of(x, y))) return std::nullopt;
  }
  if (!room->rect.contains(end.x, end.y) || !g->reachable(g->grid.cell_of(end.x, end.y))) return std::nullopt;
  return end;
}

bool capable(const ObjectInstance& src, Skill s) {
  switch (s) {
    case Skill::Heat: return src.flags.is_heat_source;
    case Skill::Cook: return src.flags.is_cook_tool;
    default: return src.flags.is_cold_source;
  }
}

FR incapable_reason(Skill s) {
  switch (s) {
    case Skill::Heat: return FR::NotHeatSource;
    case Skill::Cook: return FR::NotCookTool;
    default: return FR::NotColdSource;
  }
}

}  // namespace

PreconditionResult check_precondition(const WorldState& s, const OutcomeCache& cache, const Action& a) {
  require_ids(s, a);
  auto fail = [](FR r) { return PreconditionResult{r}; };
  switch (a.skill) {
    case Skill::Move: {
      if (robot_adjacent(s, a.object_index)) return {};
      if (cache.standing_for(s, a.object_index).empty()) return fail(FR::Unreachable);
      return {};
    }
    case Skill::Turn:
      return std::isfinite(a.yaw) ? PreconditionResult{} : fail(FR::Blocked);
    case Skill::PickUp: {
      const ObjectInstance& o = s.object(a.object_index);
      if (!o.flags.is_grippable) return fail(FR::NotGrippable);
      if (s.robot.held) return fail(FR::HandFull);
      if (!s.children(o.id).empty()) return fail(FR::NotGrippable);
      if (s.enclosed(o.id)) return fail(FR::ContainerClosed);
      if (!robot_adjacent(s, o.id)) return fail(FR::NotAdjacent);
      return {};
    }
    case Skill::Place: {
      if (!s.robot.held) return fail(FR::HandEmpty);
      const ObjectInstance& t = s.object(a.object_index);
      if (t.id == *s.robot.held) return fail(FR::Blocked);
      if (a.relation == Relation::OnTop ? !t.flags.is_surface : !t.flags.is_container)
        return fail(FR::NotReceptacle);
      if (a.relation == Relation::Inside && t.flags.is_openable && !t.states.open)
        return fail(FR::ContainerClosed);
      if (s.enclosed(t.id)) return fail(FR::ContainerClosed);
      if (!robot_adjacent(s, t.id)) return fail(FR::NotAdjacent);
      if (!first_free_placement(s, cache, *s.robot.held, t.id, a.relation)) return fail(FR::NoFreePlacement);
      return {};
    }
    case Skill::MoveForward:
      return forward_target(s, cache, a.distance, a.yaw) ? PreconditionResult{} : fail(FR::Blocked);
    case Skill::Open:
    case Skill::Close: {
      const ObjectInstance& o = s.object(a.object_index);
      if (!o.flags.is_openable) return fail(FR::NotOpenable);
      if (a.skill == Skill::Open && o.states.open) return fail(FR::AlreadyOpen);
      if (a.skill == Skill::Close && !o.states.open) return fail(FR::AlreadyClosed);
      if (!robot_adjacent(s, o.id)) return fail(FR::NotAdjacent);
      return {};
    }
    case Skill::ToggleOn:
    case Skill::ToggleOff: {
      const ObjectInstance& o = s.object(a.object_index);
      if (!o.flags.is_toggleable) return fail(FR::NotToggleable);
      if (a.skill == Skill::ToggleOn && o.states.toggled_on) return fail(FR::AlreadyOn);
      if (a.skill == Skill::ToggleOff && !o.states.toggled_on) return fail(FR::AlreadyOff);
      if (!robot_adjacent(s, o.id)) return fail(FR::NotAdjacent);
      return {};
    }
    case Skill::Heat:
    case Skill::Cook:
    case Skill::Froze: {
      const ObjectInstance& src = s.object(a.source_index);
      if (!capable(src, a.skill)) return fail(incapable_reason(a.skill));
      if (a.object_index == a.source_index) return fail(FR::Blocked);
      if (!robot_adjacent(s, src.id)) return fail(FR::NotAdjacent);
      if (!robot_adjacent(s, a.object_index)) return fail(FR::NotAdjacent);
      return {};
    }
    case Skill::GoToRoom: {
      if (!s.find_room(a.room_name)) return fail(FR::NoSuchRoom);
      const RoomGrid* g = cache.grid(a.room_name);
      if (!g || !g->spawn) return fail(FR::Unreachable);
      return {};
    }
  }
  return fail(FR::Blocked);
}

namespace {

/// Charges micro-steps against a single deadline so per-step costs do not drift.
class Stepper {
 public:
  Stepper(const CostModel& cost, bool micro) : cost_(cost), micro_(micro) {}
  void step() {
    ++steps_;
    if (!micro_ || !cost_.spin || cost_.per_step_ms <= 0) return;
    if (steps_ == 1) start_ = std::chrono::steady_clock::now();
    auto until = start_ + std::chrono::duration<double, std::milli>(steps_ * cost_.per_step_ms);
    while (std::chrono::steady_clock::now() < until) std::this_thread::yield();
  }
  long steps() const { return steps_; }
  bool micro() const { return micro_; }

 private:
  const CostModel& cost_;
  bool micro_;
  long steps_ = 0;
  std::chrono::steady_clock::time_point start_{};
};

long step_count_for(double length, double unit) {
  if (length <= 1e-12) return 0;
  return static_cast<long>(std::ceil(length / unit - 1e-6));
}

/// Drives the robot along a polyline one micro-step at a time (micro path
/// only), then snaps to `end` exactly.
void walk(WorldState& s, const std::vector<std::pair<double, double>>& pts, const Pose2& end, Stepper& st,
          double unit) {
  if (st.micro() && pts.size() >= 2) {
    std::vector<double> cum{0.0};
    for (std::size_t i = 1; i < pts.size(); ++i)
      cum.push_back(cum.back() +
                    std::hypot(pts[i].first - pts[i - 1].first, pts[i].second - pts[i - 1].second));
    long n = step_count_for(cum.back(), unit);
    std::size_t seg = 1;
    for (long k = 1; k <= n; ++k) {
      double t = std::min(k * unit, cum.back());
      while (seg + 1 < pts.size() && cum[seg] < t) ++seg;
      double len = cum[seg] - cum[seg - 1];
      double u = len > 0 ? (t - cum[seg - 1]) / len : 1.0;
      s.robot.pose.x = pts[seg - 1].first + u * (pts[seg].first - pts[seg - 1].first);
      s.robot.pose.y = pts[seg - 1].second + u * (pts[seg].second - pts[seg - 1].second);
      sync_held(s);
      st.step();
    }
  }
  s.robot.pose = end;
  sync_held(s);
}

/// Robot route to `cell` of `room`: straight hop to the room spawn when
/// changing rooms, then a 4-connected grid path.
std::vector<std::pair<double, double>> route(const WorldState& s, const OutcomeCache& cache,
                                             const std::string& room, Cell cell) {
  std::vector<std::pair<double, double>> pts{{s.robot.pose.x, s.robot.pose.y}};
  const RoomGrid* g = cache.grid(room);
  Cell start;
  if (s.robot.room != room) {
    pts.push_back(g->grid.cell_center(*g->spawn));
    start = *g->spawn;
  } else {
    start = g->grid.cell_of(s.robot.pose.x, s.robot.pose.y);
  }
  std::vector<Cell> path = bfs_path(g->grid, start, cell);
  if (path.empty()) {
    pts.push_back(g->grid.cell_center(cell));
    return pts;
  }
  for (Cell c : path) {
    auto p = g->grid.cell_center(c);
    if (std::hypot(p.first - pts.back().first, p.second - pts.back().second) > 1e-12) pts.push_back(p);
  }
  return pts;
}

std::vector<int> touched_ids(const Action& a) {
  std::vector<int> ids;
  const auto& spec = skill_spec(a.skill);
  for (int i = 0; i < spec.arity; ++i) {
    if (spec.params[i] == Param::ObjectIndex) ids.push_back(a.object_index);
    if (spec.params[i] == Param::SourceIndex) ids.push_back(a.source_index);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

TransitionResult apply_impl(WorldState& s, const Action& a, const OutcomeCache& cache, const CostModel& cost,
                            bool micro) {
  PreconditionResult pre = check_precondition(s, cache, a);
  if (!pre.ok()) return {false, pre.reason, {}, 0};
  Stepper st(cost, micro);

  switch (a.skill) {
    case Skill::Move: {
      if (robot_adjacent(s, a.object_index)) break;
      const ObjectInstance& o = s.object(a.object_index);
      Cell cell = cache.standing_for(s, o.id).front();
      const RoomGrid* g = cache.grid(o.room);
      auto pts = route(s, cache, o.room, cell);
      Pose2 end = cell_pose(*g, cell, 0.0);
      end.yaw = heading_to(end, o.pose.x, o.pose.y, s.robot.pose.yaw);
      std::string room = o.room;
      walk(s, pts, end, st, cost.step_length);
      s.robot.room = room;
      sync_held(s);
      break;
    }
    case Skill::Turn: {
      double target = normalize_yaw(a.yaw);
      double diff = normalize_yaw(target - s.robot.pose.yaw);
      if (micro) {
        long n = step_count_for(std::abs(diff), cost.turn_step);
        double y0 = s.robot.pose.yaw;
        for (long k = 1; k <= n; ++k) {
          double t = std::min(k * cost.turn_step, std::abs(diff));
          s.robot.pose.yaw = normalize_yaw(y0 + std::copysign(t, diff));
          st.step();
        }
      }
      s.robot.pose.yaw = target;
      break;
    }
    case Skill::PickUp: {
      ObjectInstance& o = s.object(a.object_index);
      o.parent.reset();
      s.robot.held = o.id;
      sync_held(s);
      break;
    }
    case Skill::Place: {
      int held = *s.robot.held;
      Pose2 p = *first_free_placement(s, cache, held, a.object_index, a.relation);
      ObjectInstance& o = s.object(held);
      if (micro) {
        double z0 = o.pose.z;
        o.pose.x = p.x;
        o.pose.y = p.y;
        o.pose.yaw = p.yaw;
        for (int k = 1; k <= cost.settle_iterations; ++k) {
          o.pose.z = z0 + (p.z - z0) * k / cost.settle_iterations;
          st.step();
        }
      }
      o.pose = p;
      o.room = s.object(a.object_index).room;
      o.parent = ParentLink{a.object_index, a.relation};
      s.robot.held.reset();
      break;
    }
    case Skill::MoveForward: {
      Pose2 end = *forward_target(s, cache, a.distance, a.yaw);
      s.robot.pose.yaw = end.yaw;
      walk(s, {{s.robot.pose.x, s.robot.pose.y}, {end.x, end.y}}, end, st, cost.step_length);
      break;
    }
    case Skill::Open: s.object(a.object_index).states.open = true; break;
    case Skill::Close: s.object(a.object_index).states.open = false; break;
    case Skill::ToggleOn: s.object(a.object_index).states.toggled_on = true; break;
    case Skill::ToggleOff: s.object(a.object_index).states.toggled_on = false; break;
    case Skill::Heat:
    case Skill::Cook:
    case Skill::Froze: {
      const ObjectInstance& src = s.object(a.source_index);
      ObjectInstance& sub = s.object(a.object_index);
      bool placed = !src.flags.is_openable ||
                    (sub.parent && sub.parent->id == src.id && sub.parent->relation == Relation::Inside);
      bool powered = !src.flags.is_toggleable || src.states.toggled_on;
      if (placed && powered) {
        if (a.skill == Skill::Heat) sub.states.heated = true;
        if (a.skill == Skill::Cook) sub.states.cooked = true;
        if (a.skill == Skill::Froze) sub.states.frozen = true;
      }
      break;
    }
    case Skill::GoToRoom: {
      const RoomGrid* g = cache.grid(a.room_name);
      Pose2 end = cell_pose(*g, *g->spawn, s.robot.pose.yaw);
      walk(s, {{s.robot.pose.x, s.robot.pose.y}, {end.x, end.y}}, end, st, cost.step_length);
      s.robot.room = a.room_name;
      sync_held(s);
      break;
    }
  }
  if (!micro && cost.spin) busy_work(cost.fast_action_ms);
  ++s.step_count;
  return {true, FR::Ok, touched_ids(a), st.steps()};
}

}  // namespace

TransitionResult apply_action_fast(WorldState& state, const Action& a, const OutcomeCache& cache,
                                   const CostModel& cost) {
  return apply_impl(state, a, cache, cost, false);
}

TransitionResult apply_action_micro(WorldState& state, const Action& a, const OutcomeCache& cache,
                                    const CostModel& cost) {
  return apply_impl(state, a, cache, cost, true);
}

World::World(const SceneDoc& doc)
    : scene_id_(doc.id), state_(load_scene(doc)), snapshot_(state_), cache_(precompute_outcome_cache(state_)) {}

TransitionResult World::apply(const Action& a, ExecPath path, const CostModel& cost) {
  return path == ExecPath::Fast ? apply_action_fast(state_, a, cache_, cost)
                                : apply_action_micro(state_, a, cache_, cost);
}

}  // namespace tg
