#include "tg/task.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace tg {

using K = TaskError::Kind;

TaskError::TaskError(Kind kind, int line, int col, const std::string& msg)
    : std::runtime_error(std::string(task_error_name(kind)) + " at " + std::to_string(line) + ":" +
                         std::to_string(col) + ": " + msg),
      kind_(kind),
      line_(line),
      col_(col) {}

std::string_view task_error_name(TaskError::Kind k) {
  switch (k) {
    case K::SyntaxError: return "SyntaxError";
    case K::UnknownPredicateKind: return "UnknownPredicateKind";
    case K::ArityError: return "ArityError";
    case K::UnboundSymbol: return "UnboundSymbol";
    case K::GoalEmpty: return "GoalEmpty";
  }
  return "?";
}

std::string to_string(const SymPredicate& p) {
  std::string s = "(" + std::string(pred_name(p.kind)) + " " + p.subject;
  if (!p.object.empty()) s += " " + p.object;
  return s + ")";
}

bool TaskDef::has_symbol(std::string_view name) const {
  return find_object(name) || std::find(fixtures.begin(), fixtures.end(), name) != fixtures.end();
}

const TaskObject* TaskDef::find_object(std::string_view name) const {
  for (const auto& o : objects)
    if (o.name == name) return &o;
  return nullptr;
}

// ---------------------------------------------------------------- reader

namespace {

struct Sexp {
  bool atom = false;
  std::string text;
  std::vector<Sexp> items;
  int line = 1;
  int col = 1;
};

class Reader {
 public:
  explicit Reader(std::string_view src) : src_(src) {}

  std::vector<Sexp> read_all() {
    std::vector<Sexp> out;
    skip();
    while (pos_ < src_.size()) {
      out.push_back(read());
      skip();
    }
    return out;
  }

 private:
  Sexp read() {
    skip();
    if (pos_ >= src_.size()) throw TaskError(K::SyntaxError, line_, col_, "unexpected end of input");
    Sexp e;
    e.line = line_;
    e.col = col_;
    char c = src_[pos_];
    if (c == '(') {
      advance();
      for (;;) {
        skip();
        if (pos_ >= src_.size())
          throw TaskError(K::SyntaxError, e.line, e.col, "unbalanced '(' opened here");
        if (src_[pos_] == ')') {
          advance();
          return e;
        }
        e.items.push_back(read());
      }
    }
    if (c == ')') throw TaskError(K::SyntaxError, line_, col_, "unexpected ')'");
    e.atom = true;
    while (pos_ < src_.size()) {
      char d = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(d)) || d == '(' || d == ')' || d == ';') break;
      e.text += d;
      advance();
    }
    return e;
  }

  void skip() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ';') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

bool valid_name(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

[[noreturn]] void fail(K k, const Sexp& at, const std::string& msg) { throw TaskError(k, at.line, at.col, msg); }

const std::string& expect_atom(const Sexp& e, const char* what) {
  if (!e.atom) fail(K::SyntaxError, e, std::string("expected ") + what);
  return e.text;
}

std::string expect_name(const Sexp& e, const char* what) {
  const std::string& s = expect_atom(e, what);
  if (!valid_name(s)) fail(K::SyntaxError, e, "invalid " + std::string(what) + " '" + s + "'");
  return s;
}

SymPredicate read_predicate(const Sexp& e) {
  if (e.atom || e.items.empty()) fail(K::SyntaxError, e, "expected a predicate");
  const std::string& head = expect_atom(e.items[0], "predicate name");
  auto kind = pred_from_name(head);
  if (!kind) fail(K::UnknownPredicateKind, e.items[0], "unknown predicate '" + head + "'");
  std::size_t want = is_binary(*kind) ? 2 : 1;
  if (e.items.size() - 1 != want)
    fail(K::ArityError, e, head + " takes " + std::to_string(want) + " argument(s)");
  SymPredicate p;
  p.kind = *kind;
  p.subject = expect_name(e.items[1], "symbol");
  if (want == 2) {
    p.object = expect_name(e.items[2], "symbol");
    if (p.object == p.subject) fail(K::ArityError, e, head + " needs two distinct symbols");
  }
  return p;
}

}  // namespace

TaskDef parse_task(std::string_view text) {
  TaskDef t;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      std::string s = trim(line);
      if (s.rfind(";;", 0) != 0) {
        if (!s.empty()) break;
        continue;
      }
      std::string body = trim(std::string_view(s).substr(2));
      if (body.rfind("instruction:", 0) == 0) t.instruction = trim(std::string_view(body).substr(12));
      if (body.rfind("family:", 0) == 0) t.family = trim(std::string_view(body).substr(7));
    }
  }

  std::vector<Sexp> top = Reader(text).read_all();
  if (top.size() != 1) {
    int line = top.empty() ? 1 : top[1].line, col = top.empty() ? 1 : top[1].col;
    throw TaskError(K::SyntaxError, line, col, "expected exactly one (define ...) form");
  }
  const Sexp& def = top[0];
  if (def.atom || def.items.size() < 2 || !def.items[0].atom || def.items[0].text != "define")
    fail(K::SyntaxError, def, "expected (define (task <id>) ...)");
  const Sexp& head = def.items[1];
  if (head.atom || head.items.size() != 2 || !head.items[0].atom || head.items[0].text != "task")
    fail(K::SyntaxError, head, "expected (task <id>)");
  t.id = expect_name(head.items[1], "task id");

  std::set<std::string> seen_sections;
  std::set<std::string> symbols;
  std::vector<const Sexp*> init_forms, goal_forms;
  const Sexp* goal_section = nullptr;
  for (std::size_t i = 2; i < def.items.size(); ++i) {
    const Sexp& sec = def.items[i];
    if (sec.atom || sec.items.empty() || !sec.items[0].atom || sec.items[0].text.empty() ||
        sec.items[0].text[0] != ':')
      fail(K::SyntaxError, sec, "expected a (:section ...)");
    const std::string& name = sec.items[0].text;
    if (!seen_sections.insert(name).second) fail(K::SyntaxError, sec, "duplicate section " + name);
    if (name == ":objects") {
      std::size_t j = 1;
      while (j < sec.items.size()) {
        TaskObject o;
        o.name = expect_name(sec.items[j], "object name");
        if (j + 2 >= sec.items.size() || !sec.items[j + 1].atom || sec.items[j + 1].text != "-")
          fail(K::SyntaxError, sec.items[j], "expected '<name> - <category>'");
        o.category = expect_name(sec.items[j + 2], "category");
        j += 3;
        if (j < sec.items.size() && !sec.items[j].atom) {
          for (const Sexp& f : sec.items[j].items) {
            std::string flag = expect_name(f, "flag");
            if (!is_flag_name(flag)) fail(K::SyntaxError, f, "unknown flag '" + flag + "'");
            o.flags.push_back(flag);
          }
          ++j;
        }
        if (!symbols.insert(o.name).second) fail(K::SyntaxError, sec, "duplicate symbol '" + o.name + "'");
        t.objects.push_back(std::move(o));
      }
    } else if (name == ":fixtures") {
      for (std::size_t j = 1; j < sec.items.size(); ++j) {
        std::string f = expect_name(sec.items[j], "fixture name");
        if (!symbols.insert(f).second) fail(K::SyntaxError, sec.items[j], "duplicate symbol '" + f + "'");
        t.fixtures.push_back(f);
      }
    } else if (name == ":init") {
      for (std::size_t j = 1; j < sec.items.size(); ++j) init_forms.push_back(&sec.items[j]);
    } else if (name == ":goal") {
      goal_section = &sec;
      if (sec.items.size() == 1) fail(K::GoalEmpty, sec, "goal is empty");
      if (sec.items.size() > 2) fail(K::SyntaxError, sec, "goal takes a single (and ...) form");
      const Sexp& g = sec.items[1];
      if (!g.atom && !g.items.empty() && g.items[0].atom && g.items[0].text == "and") {
        for (std::size_t j = 1; j < g.items.size(); ++j) goal_forms.push_back(&g.items[j]);
      } else {
        goal_forms.push_back(&g);
      }
    } else {
      fail(K::SyntaxError, sec, "unknown section " + name);
    }
  }
  if (!goal_section) fail(K::GoalEmpty, def, "task has no :goal section");
  if (goal_forms.empty()) fail(K::GoalEmpty, *goal_section, "goal is empty");

  auto check_bound = [&](const SymPredicate& p, const Sexp& at) {
    for (const std::string* s : {&p.subject, &p.object}) {
      if (s->empty()) continue;
      if (!symbols.count(*s)) fail(K::UnboundSymbol, at, "symbol '" + *s + "' is not declared");
    }
  };
  for (const Sexp* e : init_forms) {
    SymPredicate p = read_predicate(*e);
    check_bound(p, *e);
    t.init.push_back(std::move(p));
  }
  for (const Sexp* e : goal_forms) {
    SymPredicate p = read_predicate(*e);
    check_bound(p, *e);
    t.goals.push_back(std::move(p));
  }
  return t;
}

std::string serialize_task(const TaskDef& t) {
  auto one_line = [](std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return trim(s);
  };
  std::ostringstream out;
  out << ";; instruction: " << one_line(t.instruction) << "\n";
  if (!t.family.empty()) out << ";; family: " << one_line(t.family) << "\n";
  out << "(define (task " << t.id << ")\n";
  out << "  (:objects";
  for (const auto& o : t.objects) {
    out << "\n    " << o.name << " - " << o.category;
    if (!o.flags.empty()) {
      out << " (";
      for (std::size_t i = 0; i < o.flags.size(); ++i) out << (i ? " " : "") << o.flags[i];
      out << ")";
    }
  }
  out << ")\n";
  out << "  (:fixtures";
  for (const auto& f : t.fixtures) out << " " << f;
  out << ")\n";
  out << "  (:init";
  for (const auto& p : t.init) out << "\n    " << to_string(p);
  out << ")\n";
  out << "  (:goal (and";
  for (const auto& p : t.goals) out << "\n    " << to_string(p);
  out << ")))\n";
  return out.str();
}

TaskDef read_task_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task(ss.str());
}

void write_task_file(const std::filesystem::path& path, const TaskDef& task) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_task(task);
}

// ---------------------------------------------------------------- binding and goals

std::vector<std::string> task_symbols(const TaskDef& t) {
  std::vector<std::string> out;
  auto add = [&](const std::string& s) {
    if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  for (const auto& g : t.goals) {
    add(g.subject);
    add(g.object);
  }
  for (const auto& o : t.objects) add(o.name);
  for (const auto& f : t.fixtures) add(f);
  return out;
}

Binding bind_by_name(const TaskDef& task, const WorldState& state) {
  Binding b;
  for (const auto& s : task_symbols(task)) {
    int id = state.find_object(s);
    if (id < 0) throw TaskError(K::UnboundSymbol, 0, 0, "no scene object named '" + s + "'");
    b[s] = id;
  }
  return b;
}

Predicate ground(const SymPredicate& p, const Binding& b) {
  auto id = [&](const std::string& s) {
    auto it = b.find(s);
    if (it == b.end()) throw TaskError(K::UnboundSymbol, 0, 0, "symbol '" + s + "' is not bound");
    return it->second;
  };
  return Predicate::make(p.kind, id(p.subject), p.object.empty() ? -1 : id(p.object));
}

SatisfiedSet eval_goals(const WorldState& state, const TaskDef& task, const Binding& b) {
  SatisfiedSet out;
  for (std::size_t i = 0; i < task.goals.size(); ++i)
    if (eval_predicate(state, ground(task.goals[i], b))) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> goal_object_ids(const TaskDef& task, const Binding& b) {
  std::vector<int> out;
  for (const auto& g : task.goals) {
    Predicate p = ground(g, b);
    out.push_back(p.subject);
    if (p.object >= 0) out.push_back(p.object);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------- validation

std::string_view finding_name(Finding::Kind k) {
  switch (k) {
    case Finding::Kind::Unsupported: return "Unsupported";
    case Finding::Kind::Contradictory: return "Contradictory";
    case Finding::Kind::DuplicateGoal: return "DuplicateGoal";
    case Finding::Kind::TriviallySatisfied: return "TriviallySatisfied";
  }
  return "?";
}

bool ValidationReport::ok() const {
  return std::none_of(findings.begin(), findings.end(),
                      [](const Finding& f) { return f.kind != Finding::Kind::TriviallySatisfied; });
}

bool ValidationReport::has(Finding::Kind k) const {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.kind == k; });
}

namespace {

bool same_predicate(const SymPredicate& a, const SymPredicate& b) {
  if (a == b) return true;
  return a.kind == PredKind::NextTo && b.kind == PredKind::NextTo && a.subject == b.object &&
         a.object == b.subject;
}

/// (child, parent) support edge implied by a binary predicate, if any.
std::optional<std::pair<std::string, std::string>> support_edge(const SymPredicate& p) {
  if (p.kind == PredKind::OnTop || p.kind == PredKind::Inside) return std::pair{p.subject, p.object};
  if (p.kind == PredKind::Under) return std::pair{p.object, p.subject};
  return std::nullopt;
}

}  // namespace

ValidationReport validate_task(const TaskDef& task, const SceneDoc& scene, const AssetCatalog& catalog) {
  ValidationReport rep;
  auto add = [&](Finding::Kind k, std::string msg) { rep.findings.push_back({k, std::move(msg)}); };
  using F = Finding::Kind;

  std::map<std::string, ObjectFlags> flags;
  std::map<std::string, const ObjectInstance*> fixture_obj;
  for (const auto& o : task.objects) {
    const AssetSpec* a = catalog.find(o.category);
    if (!a) {
      add(F::Unsupported, "no asset for category '" + o.category + "'");
      continue;
    }
    flags[o.name] = a->flags;
    for (const auto& f : o.flags) {
      bool known = false;
      if (!flag_by_name(a->flags, f, &known))
        add(F::Unsupported, "'" + o.category + "' cannot provide flag '" + f + "'");
    }
    for (const auto& so : scene.objects)
      if (so.name == o.name) add(F::Unsupported, "object name '" + o.name + "' clashes with the scene");
  }
  for (const auto& f : task.fixtures) {
    auto it = std::find_if(scene.objects.begin(), scene.objects.end(),
                           [&](const ObjectInstance& o) { return o.name == f; });
    if (it == scene.objects.end()) {
      add(F::Unsupported, "fixture '" + f + "' is not in the scene");
      continue;
    }
    flags[f] = it->flags;
    fixture_obj[f] = &*it;
  }
  auto known = [&](const std::string& s) { return flags.count(s) > 0; };
  auto flag = [&](const std::string& s, bool ObjectFlags::*field) { return known(s) && flags[s].*field; };

  auto capability = [&](const SymPredicate& p, bool goal) {
    if (!known(p.subject) || (!p.object.empty() && !known(p.object))) return;
    const std::string where = goal ? "goal " : "init ";
    switch (p.kind) {
      case PredKind::OnTop:
        if (!flag(p.object, &ObjectFlags::is_surface))
          add(F::Unsupported, where + to_string(p) + ": '" + p.object + "' is not a surface");
        break;
      case PredKind::Inside:
        if (!flag(p.object, &ObjectFlags::is_container))
          add(F::Unsupported, where + to_string(p) + ": '" + p.object + "' is not a container");
        break;
      case PredKind::Under:
        if (!flag(p.subject, &ObjectFlags::is_surface))
          add(F::Unsupported, where + to_string(p) + ": '" + p.subject + "' cannot carry objects");
        break;
      case PredKind::Open:
        if (!flag(p.subject, &ObjectFlags::is_openable))
          add(F::Unsupported, where + to_string(p) + ": not openable");
        break;
      case PredKind::ToggledOn:
        if (!flag(p.subject, &ObjectFlags::is_toggleable))
          add(F::Unsupported, where + to_string(p) + ": not toggleable");
        break;
      default: break;
    }
    if (!goal) return;
    auto movable = [&](const std::string& s) { return flag(s, &ObjectFlags::is_grippable); };
    auto any_symbol_with = [&](bool ObjectFlags::*field) {
      return std::any_of(flags.begin(), flags.end(), [&](const auto& kv) { return kv.second.*field; });
    };
    switch (p.kind) {
      case PredKind::OnTop:
      case PredKind::Inside:
        if (!movable(p.subject)) add(F::Unsupported, "goal " + to_string(p) + ": subject cannot be carried");
        break;
      case PredKind::Under:
        if (!movable(p.object)) add(F::Unsupported, "goal " + to_string(p) + ": object cannot be carried");
        break;
      case PredKind::NextTo:
        if (!movable(p.subject) && !movable(p.object))
          add(F::Unsupported, "goal " + to_string(p) + ": neither side can be carried");
        break;
      case PredKind::Heated:
        if (!any_symbol_with(&ObjectFlags::is_heat_source)) add(F::Unsupported, "goal " + to_string(p) + ": no heat source");
        break;
      case PredKind::Cooked:
        if (!any_symbol_with(&ObjectFlags::is_cook_tool)) add(F::Unsupported, "goal " + to_string(p) + ": no cooking tool");
        break;
      case PredKind::Frozen:
        if (!any_symbol_with(&ObjectFlags::is_cold_source)) add(F::Unsupported, "goal " + to_string(p) + ": no cold source");
        break;
      default: break;
    }
  };
  for (const auto& p : task.init) capability(p, false);
  for (const auto& p : task.goals) capability(p, true);

  // Relations whose supported side is a fixture must already hold in the scene.
  std::optional<WorldState> base;
  try {
    base = load_scene(scene);
  } catch (const MalformedScene& e) {
    add(F::Unsupported, std::string("base scene does not load: ") + e.what());
  }
  auto holds_in_base = [&](const SymPredicate& p) {
    if (!base) return false;
    if (!fixture_obj.count(p.subject) || (!p.object.empty() && !fixture_obj.count(p.object))) return false;
    int s = fixture_obj[p.subject]->id;
    int o = p.object.empty() ? -1 : fixture_obj[p.object]->id;
    return eval_predicate(*base, Predicate::make(p.kind, s, o));
  };
  for (const auto& p : task.init) {
    auto e = support_edge(p);
    if (e && fixture_obj.count(e->first) && !holds_in_base(p))
      add(F::Unsupported, "init " + to_string(p) + " would move fixture '" + e->first + "'");
  }

  // At most one support per object, and no support cycles.
  std::map<std::string, std::pair<std::string, PredKind>> parent;
  for (const auto& p : task.init) {
    auto e = support_edge(p);
    if (!e) continue;
    auto [it, fresh] = parent.insert({e->first, {e->second, p.kind}});
    if (!fresh && it->second != std::pair{e->second, p.kind})
      add(F::Contradictory, "'" + e->first + "' has two supports in init");
  }
  for (const auto& [child, par] : parent) {
    std::string cur = par.first;
    for (std::size_t n = 0; n <= parent.size(); ++n) {
      if (cur == child) {
        add(F::Contradictory, "support cycle through '" + child + "'");
        break;
      }
      auto it = parent.find(cur);
      if (it == parent.end()) break;
      cur = it->second.first;
    }
  }

  for (std::size_t i = 0; i < task.goals.size(); ++i)
    for (std::size_t j = i + 1; j < task.goals.size(); ++j)
      if (same_predicate(task.goals[i], task.goals[j]))
        add(F::DuplicateGoal, "goal " + to_string(task.goals[i]) + " appears twice");

  for (const auto& g : task.goals) {
    bool in_init = std::any_of(task.init.begin(), task.init.end(),
                               [&](const SymPredicate& p) { return same_predicate(p, g); });
    if (in_init || holds_in_base(g)) add(F::TriviallySatisfied, "goal " + to_string(g) + " already holds");
  }
  return rep;
}

}  // namespace tg
