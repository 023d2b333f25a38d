#include <algorithm>
#include <set>
#include <tuple>

#include "tg/factory.hpp"

namespace tg {

namespace {

std::string display(std::string s) {
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

struct Receptacle {
  const ObjectInstance* obj;
  PredKind kind;  // OnTop or Inside
};

/// Answers whether a fresh object of some category has a free, reachable
/// resting pose on a receptacle of the base scene.
class FitProbe {
 public:
  explicit FitProbe(WorldState base) : s_(std::move(base)), grids_(build_room_grids(s_)) {}

  bool operator()(const AssetSpec& a, const Receptacle& r) {
    auto key = std::tuple{a.category, r.obj->id, r.kind};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    return memo_[key] = compute(a, r);
  }
  const WorldState& state() const { return s_; }

 private:
  bool compute(const AssetSpec& a, const Receptacle& r) {
    ObjectInstance o;
    o.id = static_cast<int>(s_.objects.size());
    o.name = "__probe";
    o.category = a.category;
    o.room = r.obj->room;
    o.half_extents = a.half;
    o.flags = a.flags;
    s_.objects.push_back(o);
    auto poses = sample_placements(s_, o.id, r.obj->id, r.kind == PredKind::Inside ? Relation::Inside : Relation::OnTop,
                                   1 << 20);
    s_.objects.pop_back();
    for (const auto& g : grids_)
      if (g.room == o.room)
        for (const auto& p : poses)
          if (!standing_cells(g, footprint(p, a.half)).empty()) return true;
    return false;
  }

  WorldState s_;
  std::vector<RoomGrid> grids_;
  std::map<std::tuple<std::string, int, PredKind>, bool> memo_;
};

class Builder {
 public:
  explicit Builder(const AssetCatalog& cat) : cat_(&cat) {}

  std::string add(const std::string& category) {
    std::string name = category + "_" + std::to_string(++count_[category]);
    t.objects.push_back({name, category, {}});
    return name;
  }
  void fixture(const std::string& name) {
    if (std::find(t.fixtures.begin(), t.fixtures.end(), name) == t.fixtures.end()) t.fixtures.push_back(name);
  }
  void init(PredKind k, const std::string& a, const std::string& b = "") { t.init.push_back({k, a, b}); }
  void goal(PredKind k, const std::string& a, const std::string& b = "") { t.goals.push_back({k, a, b}); }
  bool uses(const std::string& category) const { return count_.count(category) > 0; }

  void distractors(int lo, int hi, std::mt19937_64& rng) {
    std::vector<std::string> pool;
    for (const auto& a : cat_->all())
      if (a.flags.is_grippable && !uses(a.category)) pool.push_back(a.category);
    if (pool.empty() || hi <= 0) return;
    int n = std::uniform_int_distribution<int>(std::min(lo, hi), hi)(rng);
    for (int i = 0; i < n && !pool.empty(); ++i) {
      auto idx = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
      add(pool[idx]);
      pool.erase(pool.begin() + static_cast<long>(idx));
    }
  }

  TaskDef t;

 private:
  const AssetCatalog* cat_;
  std::map<std::string, int> count_;
};

const std::vector<std::string> kFoods = {"chicken", "steak", "fish", "egg", "bread", "apple", "ice_cream"};

std::string phrase(PredKind k) { return k == PredKind::Inside ? "in" : "on"; }

}  // namespace

std::optional<TaskDef> TemplateGenerator::propose(const SceneDoc& base, const std::string& family,
                                                  std::mt19937_64& rng) {
  WorldState ws;
  try {
    ws = load_scene(base);
  } catch (const MalformedScene&) {
    return std::nullopt;
  }
  FitProbe fits(ws);
  std::vector<Receptacle> recs, surfaces;
  std::vector<const ObjectInstance*> toggles, openables, heaters, coolers;
  for (const auto& o : ws.objects) {
    if (o.flags.is_grippable) continue;
    if (o.flags.is_surface) {
      recs.push_back({&o, PredKind::OnTop});
      surfaces.push_back({&o, PredKind::OnTop});
    }
    if (o.flags.is_container) recs.push_back({&o, PredKind::Inside});
    if (o.flags.is_toggleable && !o.states.toggled_on) toggles.push_back(&o);
    if (o.flags.is_openable && !o.states.open) openables.push_back(&o);
    if (o.flags.is_heat_source && o.flags.is_container) heaters.push_back(&o);
    if (o.flags.is_cold_source && o.flags.is_container) coolers.push_back(&o);
  }
  std::vector<const AssetSpec*> items, foods;
  for (const auto& a : catalog_.all()) {
    if (!a.flags.is_grippable || a.flags.is_cook_tool) continue;
    items.push_back(&a);
    if (std::find(kFoods.begin(), kFoods.end(), a.category) != kFoods.end()) foods.push_back(&a);
  }
  auto fitting = [&](const AssetSpec& a, const std::vector<Receptacle>& from, const ObjectInstance* not_obj) {
    std::vector<Receptacle> out;
    for (const auto& r : from)
      if (r.obj != not_obj && fits(a, r)) out.push_back(r);
    return out;
  };

  Builder b(catalog_);
  b.t.family = family;
  std::vector<std::string> sentences;

  // Item resting on some receptacle, carried to another one.
  auto pick_place = [&](const std::vector<const AssetSpec*>& pool) -> bool {
    std::vector<const AssetSpec*> fresh;
    for (const auto* a : pool)
      if (!b.uses(a->category)) fresh.push_back(a);
    if (fresh.empty() || recs.size() < 2) return false;
    const AssetSpec& a = *pick(fresh, rng);
    auto srcs = fitting(a, recs, nullptr);
    if (srcs.empty()) return false;
    Receptacle src = pick(srcs, rng);
    auto dsts = fitting(a, recs, src.obj);
    if (dsts.empty()) return false;
    Receptacle dst = pick(dsts, rng);
    std::string item = b.add(a.category);
    b.fixture(src.obj->name);
    b.fixture(dst.obj->name);
    b.init(src.kind, item, src.obj->name);
    b.goal(dst.kind, item, dst.obj->name);
    sentences.push_back("put the " + display(a.category) + " " + phrase(dst.kind) + " the " +
                        display(dst.obj->category));
    return true;
  };
  auto appliance = [&]() -> bool {
    std::vector<std::pair<const ObjectInstance*, PredKind>> opts;
    for (const auto* o : toggles) opts.push_back({o, PredKind::ToggledOn});
    for (const auto* o : openables) opts.push_back({o, PredKind::Open});
    std::erase_if(opts, [&](const auto& op) {
      return std::any_of(b.t.goals.begin(), b.t.goals.end(),
                         [&](const SymPredicate& g) { return g.subject == op.first->name; });
    });
    if (opts.empty()) return false;
    auto [o, k] = pick(opts, rng);
    b.fixture(o->name);
    b.goal(k, o->name);
    sentences.push_back((k == PredKind::Open ? "open the " : "turn on the ") + display(o->category));
    return true;
  };
  // Food starts on a plain surface.
  auto place_food = [&](const AssetSpec& f) -> std::optional<std::string> {
    std::vector<Receptacle> plain;
    for (const auto& r : surfaces)
      if (!r.obj->flags.is_heat_source && fits(f, r)) plain.push_back(r);
    if (plain.empty()) return std::nullopt;
    const Receptacle& src = pick(plain, rng);
    std::string food = b.add(f.category);
    b.fixture(src.obj->name);
    b.init(PredKind::OnTop, food, src.obj->name);
    return food;
  };
  auto heat = [&](bool keep_inside) -> std::optional<std::string> {
    std::vector<std::pair<const ObjectInstance*, const AssetSpec*>> opts;
    for (const auto* h : heaters)
      for (const auto* f : foods)
        if (fits(*f, {h, PredKind::Inside})) opts.push_back({h, f});
    if (opts.empty()) return std::nullopt;
    auto [h, f] = pick(opts, rng);
    auto food = place_food(*f);
    if (!food) return std::nullopt;
    b.fixture(h->name);
    if (keep_inside) b.goal(PredKind::Inside, *food, h->name);
    b.goal(PredKind::Heated, *food);
    sentences.push_back("heat the " + display(f->category) + " in the " + display(h->category));
    return food;
  };
  auto cook = [&]() -> bool {
    const AssetSpec* pan = catalog_.find(rng() % 2 ? "frying_pan" : "pot");
    if (!pan || foods.empty()) return false;
    std::vector<Receptacle> spots;
    for (const auto& r : surfaces)
      if (fits(*pan, r)) spots.push_back(r);
    if (spots.empty()) return false;
    auto food = place_food(*pick(foods, rng));
    if (!food) return false;
    const Receptacle& spot = pick(spots, rng);
    std::string tool = b.add(pan->category);
    b.fixture(spot.obj->name);
    b.init(PredKind::OnTop, tool, spot.obj->name);
    b.goal(PredKind::Cooked, *food);
    sentences.push_back("cook the " + display(b.t.find_object(*food)->category) + " with the " + display(pan->category));
    return true;
  };
  auto freeze = [&]() -> bool {
    std::vector<std::pair<const ObjectInstance*, const AssetSpec*>> opts;
    for (const auto* c : coolers)
      for (const auto* f : foods)
        if (fits(*f, {c, PredKind::Inside})) opts.push_back({c, f});
    if (opts.empty()) return false;
    auto [c, f] = pick(opts, rng);
    auto food = place_food(*f);
    if (!food) return false;
    b.fixture(c->name);
    b.goal(PredKind::Inside, *food, c->name);
    b.goal(PredKind::Frozen, *food);
    sentences.push_back("freeze the " + display(f->category) + " in the " + display(c->category));
    return true;
  };

  bool ok = false;
  if (family == "pick_and_place") {
    ok = pick_place(items);
  } else if (family == "appliance") {
    ok = appliance();
    if (ok && rng() % 2) appliance();
  } else if (family == "kitchen") {
    std::vector<int> opts;
    if (!heaters.empty()) opts.push_back(0);
    if (!surfaces.empty()) opts.push_back(1);
    if (!coolers.empty()) opts.push_back(2);
    std::shuffle(opts.begin(), opts.end(), rng);
    for (int o : opts) {
      ok = o == 0 ? heat(true).has_value() : o == 1 ? cook() : freeze();
      if (ok) break;
      b = Builder(catalog_);
      b.t.family = family;
      sentences.clear();
    }
  } else if (family == "compound") {
    int variant = static_cast<int>(rng() % 3);
    if (variant == 0 && !heaters.empty()) {
      // Heat, then serve somewhere else.
      auto food = heat(false);
      if (food) {
        const AssetSpec& f = *catalog_.find(b.t.find_object(*food)->category);
        std::vector<Receptacle> dsts;
        for (const auto& r : surfaces)
          if (!r.obj->flags.is_heat_source && fits(f, r)) dsts.push_back(r);
        std::erase_if(dsts, [&](const Receptacle& r) {
          return std::any_of(b.t.init.begin(), b.t.init.end(),
                             [&](const SymPredicate& p) { return p.subject == *food && p.object == r.obj->name; });
        });
        if (!dsts.empty()) {
          const Receptacle& d = pick(dsts, rng);
          b.fixture(d.obj->name);
          b.goal(PredKind::OnTop, *food, d.obj->name);
          sentences.push_back("then put it on the " + display(d.obj->category));
          ok = true;
        }
      }
    } else if (variant == 1) {
      ok = pick_place(items) && pick_place(items);
    } else {
      ok = pick_place(items) && appliance();
    }
  } else {
    return std::nullopt;
  }
  if (!ok || b.t.goals.empty()) return std::nullopt;

  b.distractors(2, max_distractors_, rng);
  std::string text;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) text += sentences[i].rfind("then", 0) == 0 ? ", " : " and ";
    text += sentences[i];
  }
  text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
  b.t.instruction = text + ".";
  return b.t;
}

std::vector<TaskDef> generate_task_batch(const SceneDoc& base, int n, std::uint64_t seed, InstructionGenerator& gen) {
  std::mt19937_64 rng(seed);
  std::vector<TaskDef> out;
  std::set<std::vector<std::string>> seen;
  const int max_attempts = 25 * n + 25;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < n; ++attempt) {
    const std::string& family = kTaskFamilies[attempt % kTaskFamilies.size()];
    std::optional<TaskDef> t = gen.propose(base, family, rng);
    if (!t) continue;
    ValidationReport rep = validate_task(*t, base);
    if (!rep.findings.empty()) continue;
    std::vector<std::string> key;
    for (const auto& g : t->goals) key.push_back(to_string(g));
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", out.size());
    t->id = base.id + "_" + buf;
    if (t->family.empty()) t->family = family;
    out.push_back(std::move(*t));
  }
  if (static_cast<int>(out.size()) < n)
    throw FactoryError(FactoryError::Kind::GeneratorExhausted,
                       "only " + std::to_string(out.size()) + " of " + std::to_string(n) + " tasks for '" + base.id + "'");
  return out;
}

// ---------------------------------------------------------------- reference plans

namespace {

class Planner {
 public:
  Planner(const TaskDef& task, const SceneDoc& doc, const Binding& b) : task_(task), world_(doc), b_(b) {}

  bool run() {
    for (const auto& g : task_.goals)
      if (!achieve(g)) return false;
    return eval_goals(world_.state(), task_, b_).size() == task_.n_sub();
  }
  std::vector<Action> plan;

 private:
  const WorldState& s() const { return world_.state(); }

  bool push(const Action& a) {
    CostModel c;
    c.spin = false;
    plan.push_back(a);
    return world_.apply(a, ExecPath::Fast, c).ok;
  }
  bool near(int id) { return robot_adjacent(s(), id) || push(Action::move(id)); }

  bool open_path_to(int id) {
    for (auto p = s().object(id).parent; p; p = s().object(p->id).parent) {
      const ObjectInstance& c = s().object(p->id);
      if (c.flags.is_openable && !c.states.open && !(near(c.id) && push(Action::open(c.id)))) return false;
    }
    return true;
  }

  bool carry(int item, int dest, Relation rel) {
    if (!s().is_held(item)) {
      if (s().robot.held) return false;
      if (!open_path_to(item) || !near(item) || !push(Action::pick_up(item))) return false;
    }
    const ObjectInstance& d = s().object(dest);
    if (rel == Relation::Inside && d.flags.is_openable && !d.states.open && !(near(dest) && push(Action::open(dest))))
      return false;
    if (!open_path_to(dest)) return false;
    return near(dest) && push(Action::place(dest, rel));
  }

  int source_for(int subject, bool ObjectFlags::*cap) {
    for (const auto& g : task_.goals)
      if (g.kind == PredKind::Inside && g.subject != g.object && b_.count(g.subject) && b_.at(g.subject) == subject &&
          s().object(b_.at(g.object)).flags.*cap)
        return b_.at(g.object);
    for (const auto& [sym, id] : b_)
      if (s().object(id).flags.*cap) return id;
    return -1;
  }

  bool process(int food, bool ObjectFlags::*cap, Skill skill) {
    int src = source_for(food, cap);
    if (src < 0) return false;
    const ObjectInstance& so = s().object(src);
    bool inside = s().object(food).parent && s().object(food).parent->id == src;
    if (so.flags.is_openable && !inside && !carry(food, src, Relation::Inside)) return false;
    inside = s().object(food).parent && s().object(food).parent->id == src;
    if (!inside && !s().is_held(food)) {
      if (s().robot.held || !open_path_to(food) || !near(food) || !push(Action::pick_up(food))) return false;
    }
    if (so.flags.is_toggleable && !so.states.toggled_on && !(near(src) && push(Action::toggle_on(src)))) return false;
    if (!near(src)) return false;
    if (!robot_adjacent(s(), food) && !near(food)) return false;
    if (!robot_adjacent(s(), src)) return false;
    Action a = skill == Skill::Heat ? Action::heat(food, src) : skill == Skill::Cook ? Action::cook(food, src)
                                                                                    : Action::froze(food, src);
    return push(a);
  }

  bool achieve(const SymPredicate& g) {
    Predicate p = ground(g, b_);
    if (eval_predicate(s(), p)) return true;
    switch (g.kind) {
      case PredKind::OnTop: return carry(p.subject, p.object, Relation::OnTop);
      case PredKind::Inside: return carry(p.subject, p.object, Relation::Inside);
      case PredKind::Under: return carry(p.object, p.subject, Relation::OnTop);
      case PredKind::Open: return near(p.subject) && push(Action::open(p.subject));
      case PredKind::ToggledOn: return near(p.subject) && push(Action::toggle_on(p.subject));
      case PredKind::Heated: return process(p.subject, &ObjectFlags::is_heat_source, Skill::Heat);
      case PredKind::Cooked: return process(p.subject, &ObjectFlags::is_cook_tool, Skill::Cook);
      case PredKind::Frozen: return process(p.subject, &ObjectFlags::is_cold_source, Skill::Froze);
      case PredKind::NextTo: return false;
    }
    return false;
  }

  const TaskDef& task_;
  World world_;
  const Binding& b_;
};

}  // namespace

std::optional<std::vector<Action>> reference_plan(const TaskDef& task, const SceneDoc& doc, const Binding& b) {
  try {
    Planner p(task, doc, b);
    if (!p.run()) return std::nullopt;
    return p.plan;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace tg
