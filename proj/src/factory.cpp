#include "tg/factory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace tg {

FactoryError::FactoryError(Kind kind, const std::string& msg)
    : std::runtime_error(std::string(factory_error_name(kind)) + ": " + msg), kind_(kind) {}

std::string_view factory_error_name(FactoryError::Kind k) {
  switch (k) {
    case FactoryError::Kind::NoFeasibleAssignment: return "NoFeasibleAssignment";
    case FactoryError::Kind::LayoutInfeasible: return "LayoutInfeasible";
    case FactoryError::Kind::NoValidCell: return "NoValidCell";
    case FactoryError::Kind::GenerationFailed: return "GenerationFailed";
    case FactoryError::Kind::GeneratorExhausted: return "GeneratorExhausted";
  }
  return "?";
}

namespace {

using FK = FactoryError::Kind;

const AssetCatalog& catalog_of(const FactoryOptions& opt) { return opt.catalog ? *opt.catalog : builtin_catalog(); }

/// (child, support, relation) for support-like init predicates.
std::optional<LayoutRelation> support_edge(const SymPredicate& p) {
  if (p.kind == PredKind::OnTop || p.kind == PredKind::Inside) return LayoutRelation{p.subject, p.object, p.kind, true};
  if (p.kind == PredKind::Under) return LayoutRelation{p.object, p.subject, PredKind::OnTop, true};
  return std::nullopt;
}

Relation to_relation(PredKind k) { return k == PredKind::Inside ? Relation::Inside : Relation::OnTop; }
PredKind to_pred(Relation r) { return r == Relation::Inside ? PredKind::Inside : PredKind::OnTop; }

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

bool goes_on_floor(const AssetSpec& a) { return a.fixture; }

std::uint64_t mix(std::uint64_t seed, std::string_view s) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  h ^= h >> 29;
  return h;
}

}  // namespace

// ---------------------------------------------------------------- distribute

RoomAssignment distribute_objects(const TaskDef& task, const SceneDoc& base, const AssetCatalog& catalog,
                                  AssignmentWeights w) {
  if (base.rooms.empty()) throw FactoryError(FK::NoFeasibleAssignment, "scene has no rooms");
  std::vector<std::string> symbols;
  std::map<std::string, int> index;
  for (const auto& o : task.objects) {
    index[o.name] = static_cast<int>(symbols.size());
    symbols.push_back(o.name);
  }
  std::map<std::string, std::string> fixture_room;
  for (const auto& f : task.fixtures) {
    for (const auto& o : base.objects)
      if (o.name == f) fixture_room[f] = o.room;
    if (!index.count(f)) {
      index[f] = static_cast<int>(symbols.size());
      symbols.push_back(f);
    }
  }
  UnionFind uf(static_cast<int>(symbols.size()));
  for (const auto& p : task.init)
    if (is_binary(p.kind) && index.count(p.subject) && index.count(p.object)) uf.unite(index[p.subject], index[p.object]);

  // Capacity estimates: half of the free floor, and the usable surface area.
  double max_area = 0.0;
  std::map<std::string, double> floor_left, surface_left;
  for (const auto& r : base.rooms) {
    max_area = std::max(max_area, r.area());
    double used = 0.0, surf = 0.0;
    for (const auto& o : base.objects) {
      if (o.room != r.name) continue;
      if (!o.parent) used += o.footprint().area();
      if (o.flags.is_surface && !o.flags.is_grippable) surf += o.footprint().area();
    }
    floor_left[r.name] = 0.5 * std::max(0.0, r.area() - used);
    surface_left[r.name] = 0.6 * surf;
  }

  std::map<int, std::vector<int>> groups;  // root -> manifest members, in manifest order
  std::vector<int> group_order;
  for (std::size_t i = 0; i < task.objects.size(); ++i) {
    int root = uf.find(static_cast<int>(i));
    if (!groups.count(root)) group_order.push_back(root);
    groups[root].push_back(static_cast<int>(i));
  }

  RoomAssignment out;
  for (int root : group_order) {
    const auto& members = groups[root];
    std::set<std::string> forced;
    for (std::size_t s = 0; s < symbols.size(); ++s)
      if (uf.find(static_cast<int>(s)) == root && fixture_room.count(symbols[s])) forced.insert(fixture_room[symbols[s]]);
    if (forced.size() > 1)
      throw FactoryError(FK::NoFeasibleAssignment, "'" + symbols[members[0]] + "' is tied to fixtures in several rooms");

    double floor_need = 0.0, surf_need = 0.0;
    for (int m : members) {
      const AssetSpec* a = catalog.find(task.objects[m].category);
      if (!a) throw FactoryError(FK::NoFeasibleAssignment, "no asset for '" + task.objects[m].category + "'");
      double area = 4.0 * a->half.hx * a->half.hy;
      (goes_on_floor(*a) ? floor_need : surf_need) += area;
    }

    struct Scored {
      double score;
      const RoomSpec* room;
    };
    std::vector<Scored> cands;
    for (const auto& r : base.rooms) {
      if (!forced.empty() && !forced.count(r.name)) continue;
      double score = 0.0;
      for (int m : members) {
        const AssetSpec* a = catalog.find(task.objects[m].category);
        bool match = std::find(a->rooms.begin(), a->rooms.end(), r.function_tag) != a->rooms.end();
        score += w.area * (r.area() / max_area) + w.function * (match ? 1.0 : 0.0);
      }
      cands.push_back({score, &r});
    }
    std::sort(cands.begin(), cands.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.room->name < b.room->name;
    });
    const RoomSpec* chosen = nullptr;
    for (const auto& c : cands) {
      const std::string& n = c.room->name;
      double fl = floor_left[n] - floor_need;
      if (fl < 0) continue;
      if (surface_left[n] >= surf_need) {
        surface_left[n] -= surf_need;
      } else if (fl >= surf_need) {
        fl -= surf_need;
      } else {
        continue;
      }
      floor_left[n] = fl;
      chosen = c.room;
      break;
    }
    if (!chosen)
      throw FactoryError(FK::NoFeasibleAssignment,
                         "no room has capacity for the group of '" + task.objects[members[0]].name + "'");
    for (int m : members) out.room_of[task.objects[m].name] = chosen->name;
  }
  return out;
}

// ---------------------------------------------------------------- layout tree

std::optional<LayoutRelation> LayoutTree::relation_of(const std::string& symbol) const {
  for (const auto& n : nodes) {
    if (n.type != LayoutNode::Type::Object || n.symbol != symbol) continue;
    if (n.parent < 0) return std::nullopt;
    const LayoutNode& rel = nodes[n.parent];
    if (rel.parent < 0) return std::nullopt;
    const LayoutNode& sup = nodes[rel.parent];
    LayoutRelation r{symbol, sup.type == LayoutNode::Type::Floor ? "" : sup.symbol, rel.kind, false};
    return r;
  }
  return std::nullopt;
}

std::vector<std::string> LayoutTree::placement_order() const {
  std::vector<std::string> out;
  if (nodes.empty()) return out;
  auto rank = [&](const std::string& s) {
    auto it = std::find(priority.begin(), priority.end(), s);
    return it == priority.end() ? priority.size() : static_cast<std::size_t>(it - priority.begin());
  };
  std::vector<int> level{0};
  while (!level.empty()) {
    std::vector<int> objs;
    for (int n : level)
      for (int r : nodes[n].children)
        for (int c : nodes[r].children) objs.push_back(c);
    std::stable_sort(objs.begin(), objs.end(),
                     [&](int a, int b) { return rank(nodes[a].symbol) < rank(nodes[b].symbol); });
    for (int c : objs) out.push_back(nodes[c].symbol);
    level = std::move(objs);
  }
  return out;
}

bool LayoutTree::well_formed() const {
  if (nodes.empty() || nodes[0].type != LayoutNode::Type::Floor) return false;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.parent < 0 || n.parent >= static_cast<int>(nodes.size())) return false;
    const auto& p = nodes[n.parent];
    if (n.type == LayoutNode::Type::Relation && p.type == LayoutNode::Type::Relation) return false;
    if (n.type == LayoutNode::Type::Object && p.type != LayoutNode::Type::Relation) return false;
    if (n.type == LayoutNode::Type::Object && !seen.insert(n.symbol).second) return false;
  }
  return placement_order().size() == seen.size();
}

namespace {

struct EdgeChoice {
  std::string support;
  PredKind kind;
  bool from_init;
};

LayoutTree assemble_tree(const std::string& room, const std::vector<LayoutObject>& objects,
                         const std::vector<SymPredicate>& ic, const std::vector<LayoutRelation>& fixed_parents,
                         const std::set<std::pair<std::string, std::string>>& excluded) {
  std::map<std::string, const LayoutObject*> by_name;
  for (const auto& o : objects) by_name[o.symbol] = &o;

  std::map<std::string, EdgeChoice> edge;
  for (const auto& r : fixed_parents) edge[r.child] = {r.support, r.kind, false};

  // Fixed surfaces by top area, largest first; ties by name.
  std::vector<const LayoutObject*> surfaces;
  for (const auto& o : objects)
    if (o.fixed && o.flags.is_surface && !o.flags.is_grippable) surfaces.push_back(&o);
  std::stable_sort(surfaces.begin(), surfaces.end(), [](const LayoutObject* a, const LayoutObject* b) {
    double aa = a->half.hx * a->half.hy, bb = b->half.hx * b->half.hy;
    if (aa != bb) return aa > bb;
    return a->symbol < b->symbol;
  });

  for (const auto& o : objects) {
    if (o.fixed) continue;
    std::optional<EdgeChoice> choice;
    for (const auto& p : ic) {
      auto e = support_edge(p);
      if (e && e->child == o.symbol && by_name.count(e->support)) {
        choice = EdgeChoice{e->support, e->kind, true};
        break;
      }
    }
    if (!choice) {
      auto usable = [&](const LayoutObject* s) {
        return s->symbol != o.symbol && !excluded.count({o.symbol, s->symbol});
      };
      for (const auto& cat : o.preferred_supports) {
        for (const auto* s : surfaces)
          if (s->category == cat && usable(s)) {
            choice = EdgeChoice{s->symbol, PredKind::OnTop, false};
            break;
          }
        if (choice) break;
      }
      bool small = o.flags.is_grippable || !o.preferred_supports.empty();
      if (!choice && small)
        for (const auto* s : surfaces)
          if (usable(s)) {
            choice = EdgeChoice{s->symbol, PredKind::OnTop, false};
            break;
          }
      if (!choice) choice = EdgeChoice{"", PredKind::OnTop, false};
    }
    edge[o.symbol] = *choice;
  }

  LayoutTree t;
  t.room = room;
  t.nodes.push_back({LayoutNode::Type::Floor, "", PredKind::OnTop, -1, {}});
  std::map<std::string, int> node_of;
  for (const auto& o : objects) {
    node_of[o.symbol] = static_cast<int>(t.nodes.size());
    t.nodes.push_back({LayoutNode::Type::Object, o.symbol, PredKind::OnTop, -1, {}});
  }
  std::map<std::pair<int, PredKind>, int> rel_node;
  for (const auto& o : objects) {
    auto it = edge.find(o.symbol);
    int parent_obj = 0;
    PredKind kind = PredKind::OnTop;
    if (it != edge.end() && !it->second.support.empty() && node_of.count(it->second.support)) {
      parent_obj = node_of[it->second.support];
      kind = it->second.kind;
    }
    auto key = std::pair{parent_obj, kind};
    if (!rel_node.count(key)) {
      rel_node[key] = static_cast<int>(t.nodes.size());
      t.nodes.push_back({LayoutNode::Type::Relation, "", kind, parent_obj, {}});
      t.nodes[parent_obj].children.push_back(rel_node[key]);
    }
    int r = rel_node[key];
    int me = node_of[o.symbol];
    t.nodes[me].parent = r;
    t.nodes[r].children.push_back(me);
  }
  return t;
}

bool is_init_edge(const LayoutRelation& r, const std::vector<SymPredicate>& ic) {
  for (const auto& p : ic) {
    auto e = support_edge(p);
    if (e && e->child == r.child && e->support == r.support) return true;
  }
  return false;
}

}  // namespace

LayoutTree build_layout_tree(const std::string& room, const std::vector<LayoutObject>& objects,
                             const std::vector<SymPredicate>& ic, const std::vector<LayoutRelation>& fixed_parents,
                             int retry_budget, const PlacementProbe& probe) {
  std::set<std::pair<std::string, std::string>> excluded;
  std::vector<std::pair<LayoutRelation, std::string>> history;
  std::vector<std::string> priority;
  std::map<std::pair<std::string, std::string>, int> rejections;
  for (;;) {
    LayoutTree t = assemble_tree(room, objects, ic, fixed_parents, excluded);
    t.build_history = history;
    t.priority = priority;
    if (!probe) return t;
    std::optional<Rejection> rej = probe(t);
    if (!rej) return t;

    LayoutRelation r = rej->relation;
    r.from_init = is_init_edge(r, ic);
    history.push_back({r, rej->reason});
    if (static_cast<int>(history.size()) > retry_budget)
      throw FactoryError(FK::LayoutInfeasible, "retry budget spent in room '" + room + "': " + rej->reason);
    // First rejection: place the child ahead of everything. Second: drop the
    // edge if it is only a preference, otherwise give up.
    int& n = rejections[{r.child, r.support}];
    if (++n == 1) {
      priority.erase(std::remove(priority.begin(), priority.end(), r.child), priority.end());
      priority.insert(priority.begin(), r.child);
    } else if (r.from_init || r.support.empty()) {
      throw FactoryError(FK::LayoutInfeasible, "cannot realise '" + r.child + "' on '" +
                                                   (r.support.empty() ? std::string("floor") : r.support) +
                                                   "': " + rej->reason);
    } else {
      excluded.insert({r.child, r.support});
    }
  }
}

// ---------------------------------------------------------------- planar placement

double planar_score(const Pose2& pose, const std::vector<PlanarConstraint>& constraints) {
  double score = 0.0;
  for (const auto& c : constraints) {
    double dx = c.ref_x - pose.x, dy = c.ref_y - pose.y;
    double d = std::hypot(dx, dy);
    double sat = 0.0;
    switch (c.kind) {
      case PlanarConstraint::Kind::NextTo: sat = d <= kNearDistance ? 1.0 : std::exp(-(d - kNearDistance)); break;
      case PlanarConstraint::Kind::FaceTo:
        sat = d < 1e-9 ? 0.0 : std::max(0.0, std::cos(pose.yaw - std::atan2(dy, dx)));
        break;
      case PlanarConstraint::Kind::AlignedWith:
        sat = std::fabs(std::remainder(pose.yaw - c.ref_yaw, kPi)) <= kPi / 12.0 + 1e-9 ? 1.0 : 0.0;
        break;
    }
    score += c.weight * sat;
  }
  return score;
}

Pose2 plan_planar_placement(const OccupancyGrid& grid, const Extents& half,
                            const std::vector<PlanarConstraint>& constraints, Cell robot_spawn,
                            const std::function<bool(const Pose2&)>& accept) {
  struct Cand {
    long long key;
    int row, col, k;
    Pose2 pose;
    std::vector<Cell> cells;
  };
  std::vector<Cand> cands;
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c)
      for (int k = 0; k < kYawCandidates; ++k) {
        auto [x, y] = grid.cell_center({r, c});
        Pose2 p{x, y, 0.0, normalize_yaw(k * kPi / 4.0)};
        Rect fp = footprint(p, half);
        if (!grid.area().contains(fp)) continue;
        std::vector<Cell> cells = grid.cells_overlapping(fp);
        bool ok = true;
        for (Cell cell : cells)
          if (grid.blocked(cell) || cell == robot_spawn) ok = false;
        if (!ok) continue;
        long long key = std::llround(planar_score(p, constraints) * 1e9);
        cands.push_back({key, r, c, k, p, std::move(cells)});
      }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.key != b.key) return a.key > b.key;
    return std::tie(a.row, a.col, a.k) < std::tie(b.row, b.col, b.k);
  });
  if (!grid.in_bounds(robot_spawn) || grid.blocked(robot_spawn))
    throw FactoryError(FK::NoValidCell, "robot spawn cell is blocked");

  std::vector<std::uint8_t> mask(grid.size(), 0);
  for (const auto& cand : cands) {
    for (Cell cell : cand.cells) mask[grid.index(cell)] = 1;
    std::vector<int> dist = bfs_distances(grid, robot_spawn, &mask);
    bool reachable = false;
    for (Cell cell : cand.cells) {
      const Cell nbr[] = {{cell.row + 1, cell.col}, {cell.row - 1, cell.col}, {cell.row, cell.col + 1}, {cell.row, cell.col - 1}};
      for (Cell n : nbr)
        if (grid.in_bounds(n) && !mask[grid.index(n)] && dist[grid.index(n)] >= 0) reachable = true;
    }
    for (Cell cell : cand.cells) mask[grid.index(cell)] = 0;
    if (!reachable) continue;
    if (accept && !accept(cand.pose)) continue;
    return cand.pose;
  }
  throw FactoryError(FK::NoValidCell, "no cell satisfies the hard constraints");
}

// ---------------------------------------------------------------- verification

VerifyReport verify_scene(const SceneDoc& doc, const TaskDef& task, const Binding& binding) {
  VerifyReport rep;
  WorldState ws;
  try {
    ws = load_scene(doc);
  } catch (const MalformedScene& e) {
    rep.violations.push_back(std::string("(a) scene does not load: ") + e.what());
    return rep;
  }
  for (const auto& p : task.init) {
    try {
      if (!eval_predicate(ws, ground(p, binding)))
        rep.violations.push_back("(b) init " + to_string(p) + " does not hold");
    } catch (const std::exception& e) {
      rep.violations.push_back("(b) init " + to_string(p) + ": " + e.what());
    }
  }
  std::vector<RoomGrid> grids = build_room_grids(ws);
  auto grid_of = [&](const std::string& room) -> const RoomGrid* {
    for (const auto& g : grids)
      if (g.room == room) return &g;
    return nullptr;
  };
  for (const auto& s : task_symbols(task)) {
    auto it = binding.find(s);
    if (it == binding.end() || it->second < 0 || it->second >= static_cast<int>(ws.objects.size())) {
      rep.violations.push_back("(c) '" + s + "' is unbound");
      continue;
    }
    const ObjectInstance& o = ws.objects[it->second];
    const RoomGrid* g = grid_of(o.room);
    if (!g || standing_cells(*g, o.footprint()).empty())
      rep.violations.push_back("(c) no reachable standing cell for '" + s + "'");
  }
  if (const RoomGrid* g = grid_of(ws.robot.room)) {
    Cell c = g->grid.cell_of(ws.robot.pose.x, ws.robot.pose.y);
    if (!g->reachable(c)) rep.violations.push_back("(c) robot start is not on a reachable cell");
  }
  for (auto [a, b] : find_overlaps(ws))
    rep.violations.push_back("(d) '" + ws.objects[a].name + "' overlaps '" + ws.objects[b].name + "'");
  rep.pass = rep.violations.empty();
  return rep;
}

// ---------------------------------------------------------------- instantiate

namespace {

const RoomGrid* find_grid(const std::vector<RoomGrid>& grids, const std::string& room) {
  for (const auto& g : grids)
    if (g.room == room) return &g;
  return nullptr;
}

ObjectInstance new_instance(const WorldState& ws, const TaskObject& to, const AssetSpec& a, const std::string& room) {
  ObjectInstance o;
  o.id = static_cast<int>(ws.objects.size());
  o.name = to.name;
  o.category = to.category;
  o.room = room;
  o.half_extents = a.half;
  o.flags = a.flags;
  return o;
}

bool next_to_ok(const WorldState& ws, const std::vector<SymPredicate>& ic, const std::string& sym) {
  for (const auto& p : ic) {
    if (p.kind != PredKind::NextTo || (p.subject != sym && p.object != sym)) continue;
    int a = ws.find_object(p.subject), b = ws.find_object(p.object);
    if (a < 0 || b < 0) continue;
    if (!eval_predicate(ws, Predicate::make(PredKind::NextTo, a, b))) return false;
  }
  return true;
}

/// Every task object in the room keeps a standing cell and the robot keeps its footing.
bool room_ok(const WorldState& ws, const std::string& room, const std::vector<std::string>& symbols) {
  std::vector<RoomGrid> grids = build_room_grids(ws);
  const RoomGrid* g = find_grid(grids, room);
  if (!g || !g->spawn) return false;
  for (const auto& s : symbols) {
    int id = ws.find_object(s);
    if (id < 0 || ws.objects[id].room != room) continue;
    if (standing_cells(*g, ws.objects[id].footprint()).empty()) return false;
  }
  if (ws.robot.room == room && !g->reachable(g->grid.cell_of(ws.robot.pose.x, ws.robot.pose.y))) return false;
  return true;
}

struct RoomPlacer {
  const TaskDef& task;
  const AssetCatalog& catalog;
  const std::vector<std::string>& symbols;
  std::uint64_t seed;

  std::optional<Rejection> place(WorldState& ws, const LayoutTree& tree) const {
    for (const auto& sym : tree.placement_order()) {
      if (ws.find_object(sym) >= 0) continue;
      LayoutRelation rel = *tree.relation_of(sym);
      const TaskObject* to = task.find_object(sym);
      const AssetSpec* asset = catalog.find(to->category);
      ObjectInstance o = new_instance(ws, *to, *asset, tree.room);
      std::optional<Rejection> r = rel.support.empty() ? place_on_floor(ws, o, rel) : place_on_support(ws, o, rel);
      if (r) return r;
    }
    return std::nullopt;
  }

  std::optional<Rejection> place_on_support(WorldState& ws, ObjectInstance o, const LayoutRelation& rel) const {
    int sid = ws.find_object(rel.support);
    if (sid < 0) return Rejection{rel, "support '" + rel.support + "' is not placed"};
    Relation relation = to_relation(rel.kind);
    ws.objects.push_back(o);
    std::vector<Pose2> cands = sample_placements(ws, o.id, sid, relation, 1 << 20);
    std::vector<RoomGrid> grids = build_room_grids(ws);
    const RoomGrid* g = find_grid(grids, o.room);
    std::size_t n = cands.size();
    std::size_t start = n ? mix(seed, o.name) % n : 0;
    for (std::size_t i = 0; i < n; ++i) {
      ObjectInstance& me = ws.objects.back();
      me.pose = cands[(start + i) % n];
      me.parent = ParentLink{sid, relation};
      if (!g || standing_cells(*g, me.footprint()).empty()) continue;
      if (!next_to_ok(ws, task.init, o.name)) continue;
      return std::nullopt;
    }
    ws.objects.pop_back();
    return Rejection{rel, "no free placement for '" + o.name + "' on '" + rel.support + "'"};
  }

  std::optional<Rejection> place_on_floor(WorldState& ws, ObjectInstance o, const LayoutRelation& rel) const {
    std::vector<RoomGrid> grids = build_room_grids(ws);
    const RoomGrid* g = find_grid(grids, o.room);
    if (!g || !g->spawn) return Rejection{rel, "room '" + o.room + "' has no free spawn"};

    std::vector<PlanarConstraint> cons;
    auto add = [&](PlanarConstraint::Kind k, const ObjectInstance& ref, double wgt) {
      PlanarConstraint c;
      c.kind = k;
      c.subject = o.name;
      c.reference = ref.name;
      c.weight = wgt;
      c.ref_x = ref.pose.x;
      c.ref_y = ref.pose.y;
      c.ref_yaw = ref.pose.yaw;
      cons.push_back(c);
    };
    for (const auto& p : task.init) {
      if (p.kind != PredKind::NextTo) continue;
      const std::string& other = p.subject == o.name ? p.object : (p.object == o.name ? p.subject : "");
      int id = other.empty() ? -1 : ws.find_object(other);
      if (id >= 0) add(PlanarConstraint::Kind::NextTo, ws.objects[id], 1.0);
    }
    if (const AssetSpec* a = catalog.find(o.category)) {
      for (const auto& cat : a->faces) {
        auto it = std::find_if(ws.objects.begin(), ws.objects.end(), [&](const ObjectInstance& x) {
          return x.category == cat && x.room == o.room;
        });
        if (it == ws.objects.end()) continue;
        add(PlanarConstraint::Kind::FaceTo, *it, 1.0);
        add(PlanarConstraint::Kind::NextTo, *it, 0.5);
        break;
      }
    }
    auto accept = [&](const Pose2& pose) {
      WorldState trial = ws;
      ObjectInstance me = o;
      me.pose = pose;
      trial.objects.push_back(me);
      return next_to_ok(trial, task.init, o.name) && room_ok(trial, o.room, symbols);
    };
    try {
      o.pose = plan_planar_placement(g->grid, o.half_extents, cons, *g->spawn, accept);
    } catch (const FactoryError& e) {
      return Rejection{rel, e.what()};
    }
    ws.objects.push_back(o);
    return std::nullopt;
  }
};

void apply_unary_init(WorldState& ws, const TaskDef& task) {
  for (const auto& p : task.init) {
    if (is_binary(p.kind)) continue;
    int id = ws.find_object(p.subject);
    if (id < 0) continue;
    ObjectStates& s = ws.objects[id].states;
    switch (p.kind) {
      case PredKind::Open: s.open = true; break;
      case PredKind::ToggledOn: s.toggled_on = true; break;
      case PredKind::Heated: s.heated = true; break;
      case PredKind::Cooked: s.cooked = true; break;
      case PredKind::Frozen: s.frozen = true; break;
      default: break;
    }
  }
}

std::vector<LayoutObject> room_objects(const WorldState& ws, const TaskDef& task, const RoomAssignment& ra,
                                       const std::string& room, const AssetCatalog& catalog,
                                       std::vector<LayoutRelation>& fixed_parents) {
  std::vector<LayoutObject> out;
  for (const auto& o : ws.objects) {
    if (o.room != room) continue;
    out.push_back({o.name, o.category, o.half_extents, o.flags, true, {}});
    if (o.parent)
      fixed_parents.push_back({o.name, ws.objects[o.parent->id].name, to_pred(o.parent->relation), false});
    else
      fixed_parents.push_back({o.name, "", PredKind::OnTop, false});
  }
  for (const auto& t : task.objects) {
    auto it = ra.room_of.find(t.name);
    if (it == ra.room_of.end() || it->second != room) continue;
    const AssetSpec* a = catalog.find(t.category);
    out.push_back({t.name, t.category, a->half, a->flags, false, a->supports});
  }
  return out;
}

std::string scene_id_for(const TaskDef& task, std::uint64_t seed) {
  return (task.id.empty() ? std::string("task") : task.id) + "_s" + std::to_string(seed);
}

WorldState load_base(const TaskDef& task, const SceneDoc& base, const AssetCatalog& catalog) {
  ValidationReport rep = validate_task(task, base, catalog);
  if (!rep.ok()) {
    for (const auto& f : rep.findings)
      if (f.kind != Finding::Kind::TriviallySatisfied)
        throw FactoryError(FK::GenerationFailed, "task does not validate: " + f.message);
  }
  try {
    return load_scene(base);
  } catch (const MalformedScene& e) {
    throw FactoryError(FK::GenerationFailed, std::string("base scene: ") + e.what());
  }
}

}  // namespace

Instantiated instantiate_scene(const TaskDef& task, const SceneDoc& base, std::uint64_t seed,
                               const FactoryOptions& opt) {
  const AssetCatalog& catalog = catalog_of(opt);
  WorldState ws = load_base(task, base, catalog);
  Instantiated out;
  try {
    RoomAssignment ra = distribute_objects(task, base, catalog);
    std::vector<std::string> symbols = task_symbols(task);
    RoomPlacer placer{task, catalog, symbols, seed};
    for (const auto& room : ws.rooms) {
      bool any = std::any_of(ra.room_of.begin(), ra.room_of.end(), [&](const auto& kv) { return kv.second == room.name; });
      if (!any) continue;
      std::vector<LayoutRelation> fixed_parents;
      std::vector<LayoutObject> objs = room_objects(ws, task, ra, room.name, catalog, fixed_parents);
      WorldState committed;
      auto probe = [&](const LayoutTree& t) -> std::optional<Rejection> {
        WorldState trial = ws;
        std::optional<Rejection> r = placer.place(trial, t);
        if (!r) committed = std::move(trial);
        return r;
      };
      out.trees.push_back(build_layout_tree(room.name, objs, task.init, fixed_parents, opt.retry_budget, probe));
      ws = std::move(committed);
    }
  } catch (const FactoryError& e) {
    throw FactoryError(FK::GenerationFailed, e.what());
  }
  apply_unary_init(ws, task);
  out.doc = save_scene(ws, scene_id_for(task, seed));
  try {
    out.binding = bind_by_name(task, ws);
  } catch (const TaskError& e) {
    throw FactoryError(FK::GenerationFailed, e.what());
  }
  VerifyReport v = verify_scene(out.doc, task, out.binding);
  if (!v.pass) throw FactoryError(FK::GenerationFailed, "verification failed: " + v.violations.front());
  return out;
}

Instantiated random_uniform_scene(const TaskDef& task, const SceneDoc& base, std::uint64_t seed,
                                  const FactoryOptions& opt) {
  const AssetCatalog& catalog = catalog_of(opt);
  WorldState ws = load_base(task, base, catalog);
  RoomAssignment ra;
  try {
    ra = distribute_objects(task, base, catalog);
  } catch (const FactoryError& e) {
    throw FactoryError(FK::GenerationFailed, e.what());
  }
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    if (hi <= lo) return 0.5 * (lo + hi);
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  // Supports before the objects they carry.
  std::vector<const TaskObject*> pending;
  for (const auto& o : task.objects) pending.push_back(&o);
  std::map<std::string, LayoutRelation> support;
  for (const auto& p : task.init)
    if (auto e = support_edge(p)) support[e->child] = *e;
  while (!pending.empty()) {
    auto it = std::find_if(pending.begin(), pending.end(), [&](const TaskObject* o) {
      auto s = support.find(o->name);
      return s == support.end() || ws.find_object(s->second.support) >= 0;
    });
    if (it == pending.end()) throw FactoryError(FK::GenerationFailed, "unresolvable support chain");
    const TaskObject& to = **it;
    pending.erase(it);
    ObjectInstance o = new_instance(ws, to, *catalog.find(to.category), ra.room_of.at(to.name));
    o.pose.yaw = std::bernoulli_distribution(0.5)(rng) ? 0.0 : kPi / 2.0;
    auto [hx, hy] = rotated_half_widths(o.half_extents, o.pose.yaw);
    auto s = support.find(o.name);
    Rect face;
    if (s != support.end()) {
      const ObjectInstance& sup = ws.objects[ws.find_object(s->second.support)];
      o.room = sup.room;
      Relation rel = to_relation(s->second.kind);
      face = rel == Relation::OnTop ? sup.footprint() : sup.footprint().shrunk(kContainerWall);
      o.pose.z = rel == Relation::OnTop ? sup.top_z() : sup.pose.z + kContainerWall;
      o.parent = ParentLink{sup.id, rel};
    } else {
      face = ws.find_room(o.room)->rect;
    }
    o.pose.x = uniform(face.x0 + hx, face.x1 - hx);
    o.pose.y = uniform(face.y0 + hy, face.y1 - hy);
    ws.objects.push_back(o);
  }
  apply_unary_init(ws, task);
  Instantiated out;
  out.doc = save_scene(ws, scene_id_for(task, seed) + "_uniform");
  for (const auto& s : task_symbols(task)) out.binding[s] = ws.find_object(s);
  return out;
}

}  // namespace tg
