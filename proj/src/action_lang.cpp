#include "tg/action_lang.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace tg {

using R = ParseFailure::Reason;

std::string_view parse_failure_name(ParseFailure::Reason r) {
  switch (r) {
    case R::NoActions: return "NoActions";
    case R::UnknownSkill: return "UnknownSkill";
    case R::ArityMismatch: return "ArityMismatch";
    case R::BadValue: return "BadValue";
    case R::Syntax: return "Syntax";
    case R::TooLong: return "TooLong";
  }
  return "?";
}

namespace {

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string param_value(const Action& a, Param p) {
  switch (p) {
    case Param::ObjectIndex: return std::to_string(a.object_index);
    case Param::SourceIndex: return std::to_string(a.source_index);
    case Param::Relation: return std::string(relation_name(a.relation));
    case Param::Yaw: return format_real(a.yaw);
    case Param::Distance: return format_real(a.distance);
    case Param::RoomName: return a.room_name;
  }
  return {};
}

/// Head of a call line, or empty if the line does not look like one.
std::string_view call_head(std::string_view line) {
  line = trim(line);
  std::size_t i = 0;
  while (i < line.size() && is_ident_char(line[i])) ++i;
  if (i == 0) return {};
  if (i >= line.size() || line[i] != '(') return {};
  return line.substr(0, i);
}

std::optional<Skill> resolve_skill(std::string_view name) {
  if (name == "moveto") return Skill::Move;
  if (name == "pickup") return Skill::PickUp;
  return skill_from_name(name);
}

struct LineResult {
  std::optional<Action> action;
  R reason = R::Syntax;
  std::string detail;
};

LineResult fail_line(R r, std::string d) { return {std::nullopt, r, std::move(d)}; }

bool parse_index(std::string_view v, int& out) {
  if (v.empty() || v.size() > 9) return false;
  if (!std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  return r.ec == std::errc() && r.ptr == v.data() + v.size();
}

bool parse_real(std::string_view v, double& out) {
  if (v.empty() || v.size() > 64) return false;
  if (v.front() == '+') v.remove_prefix(1);
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  return r.ec == std::errc() && r.ptr == v.data() + v.size() && std::isfinite(out);
}

LineResult parse_line(std::string_view raw) {
  std::string_view line = trim(raw);
  std::string_view head = call_head(line);
  if (head.empty()) return fail_line(R::Syntax, "expected skill(...)");
  auto skill = resolve_skill(head);
  if (!skill) return fail_line(R::UnknownSkill, "unknown skill '" + std::string(head) + "'");
  std::size_t open = line.find('(');
  if (line.back() != ')') return fail_line(R::Syntax, "missing ')'");
  std::string_view body = trim(line.substr(open + 1, line.size() - open - 2));
  if (body.find('(') != std::string_view::npos || body.find(')') != std::string_view::npos)
    return fail_line(R::Syntax, "nested parentheses");

  std::vector<std::pair<std::string_view, std::string_view>> args;
  if (!body.empty()) {
    std::size_t start = 0;
    for (;;) {
      std::size_t comma = body.find(',', start);
      std::string_view part = trim(body.substr(start, comma == std::string_view::npos ? body.npos : comma - start));
      if (part.empty()) return fail_line(R::Syntax, "empty argument");
      std::size_t eq = part.find('=');
      if (eq == std::string_view::npos) {
        args.push_back({{}, part});
      } else {
        std::string_view key = trim(part.substr(0, eq));
        std::string_view val = trim(part.substr(eq + 1));
        if (key.empty() || val.empty()) return fail_line(R::Syntax, "malformed key=value");
        args.push_back({key, val});
      }
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }

  const SkillSpec& spec = skill_spec(*skill);
  if (static_cast<int>(args.size()) != spec.arity)
    return fail_line(R::ArityMismatch, std::string(spec.name) + " takes " + std::to_string(spec.arity) +
                                           " argument(s)");
  bool named = !args.empty() && !args[0].first.empty();
  for (const auto& a : args)
    if (a.first.empty() == named) return fail_line(R::Syntax, "mixed positional and named arguments");

  Action act;
  act.skill = *skill;
  for (int i = 0; i < spec.arity; ++i) {
    Param p = spec.params[i];
    std::string_view val;
    if (named) {
      int hits = 0;
      for (const auto& a : args)
        if (a.first == param_key(p)) {
          val = a.second;
          ++hits;
        }
      if (hits != 1)
        return fail_line(R::ArityMismatch, std::string(spec.name) + " needs exactly one '" +
                                               std::string(param_key(p)) + "'");
    } else {
      val = args[static_cast<std::size_t>(i)].second;
    }
    switch (p) {
      case Param::ObjectIndex:
      case Param::SourceIndex: {
        int v;
        if (!parse_index(val, v)) return fail_line(R::BadValue, "index must be a non-negative integer");
        (p == Param::ObjectIndex ? act.object_index : act.source_index) = v;
        break;
      }
      case Param::Relation: {
        auto r = relation_from_name(val);
        if (!r) return fail_line(R::BadValue, "relation must be ontop or inside");
        act.relation = *r;
        break;
      }
      case Param::Yaw:
      case Param::Distance: {
        double v;
        if (!parse_real(val, v)) return fail_line(R::BadValue, "expected a finite number");
        if (p == Param::Distance && v < 0) return fail_line(R::BadValue, "distance must be non-negative");
        (p == Param::Yaw ? act.yaw : act.distance) = v;
        break;
      }
      case Param::RoomName: {
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
        if (val.empty() || !std::all_of(val.begin(), val.end(), is_ident_char))
          return fail_line(R::BadValue, "room name must be an identifier");
        act.room_name = std::string(val);
        break;
      }
    }
  }
  return {act, R::Syntax, {}};
}

}  // namespace

std::string serialize_action(const Action& a) {
  const SkillSpec& spec = skill_spec(a.skill);
  std::string out(spec.name);
  out += '(';
  for (int i = 0; i < spec.arity; ++i) {
    if (i) out += ", ";
    out += param_key(spec.params[i]);
    out += '=';
    out += param_value(a, spec.params[i]);
  }
  out += ')';
  return out;
}

std::string serialize_actions(const ActionSeq& seq) {
  std::string out;
  for (const auto& a : seq.actions) {
    out += serialize_action(a);
    out += '\n';
  }
  return out;
}

ParseResult parse_action_sequence(std::string_view text, int h_max) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t nl = text.find('\n', start);
      std::string_view l = text.substr(start, nl == text.npos ? text.npos : nl - start);
      if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
      lines.push_back(l);
      if (nl == text.npos) break;
      start = nl + 1;
    }
  }
  ParseResult res;
  ActionSeq seq;
  bool started = false;
  bool fenced = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view l = trim(lines[i]);
    const int lineno = static_cast<int>(i) + 1;
    if (l.rfind("```", 0) == 0) {
      if (!fenced && !started) {
        fenced = true;
        continue;
      }
      if (fenced) {
        // Closing fence: anything after it must be blank.
        for (std::size_t j = i + 1; j < lines.size(); ++j)
          if (!trim(lines[j]).empty()) {
            res.failure = {static_cast<int>(j) + 1, R::Syntax, "text after closing fence"};
            return res;
          }
        break;
      }
      res.failure = {lineno, R::Syntax, "unexpected fence"};
      return res;
    }
    if (l.empty()) continue;
    if (!started && call_head(l).empty()) continue;  // leading prose
    LineResult lr = parse_line(l);
    if (!lr.action) {
      res.failure = {lineno, lr.reason, lr.detail};
      return res;
    }
    started = true;
    seq.actions.push_back(*lr.action);
    if (static_cast<int>(seq.actions.size()) > h_max) {
      res.failure = {lineno, R::TooLong, "more than " + std::to_string(h_max) + " actions"};
      return res;
    }
  }
  if (seq.actions.empty()) {
    res.failure = {0, R::NoActions, "no action lines"};
    return res;
  }
  res.seq = std::move(seq);
  return res;
}

// ---------------------------------------------------------------- prompt

std::string render_prompt(const TaskDef& task, const SceneDoc& scene) {
  std::ostringstream out;
  out << "## Task\n";
  out << (task.instruction.empty() ? "(no instruction)" : task.instruction) << "\n";
  out << "Goal conditions:\n";
  for (const auto& g : task.goals) out << "- " << to_string(g) << "\n";

  out << "\n## Agent capabilities\n";
  out << "You control a mobile robot with one gripper. Available skills:\n";
  for (const auto& s : skill_table()) {
    out << "- " << s.name << "(";
    for (int i = 0; i < s.arity; ++i) out << (i ? ", " : "") << param_key(s.params[i]);
    out << "): " << s.summary << "\n";
  }

  out << "\n## Scene\n";
  out << "Rooms:\n";
  for (const auto& r : scene.rooms) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.1f x %.1f m", r.rect.width(), r.rect.height());
    out << "- " << r.name << " (" << (r.function_tag.empty() ? "room" : r.function_tag) << ", " << buf << ")\n";
  }
  out << "Objects:\n";
  for (const auto& o : scene.objects) {
    out << "- [" << o.id << "] " << o.name << " (" << o.category << ") in " << o.room;
    if (o.parent) {
      const auto& p = scene.objects[static_cast<std::size_t>(o.parent->id)];
      out << ", " << relation_name(o.parent->relation) << " [" << p.id << "] " << p.name;
    }
    std::vector<std::string> st;
    if (o.flags.is_openable) st.push_back(o.states.open ? "open" : "closed");
    if (o.flags.is_toggleable) st.push_back(o.states.toggled_on ? "on" : "off");
    if (o.states.heated) st.push_back("heated");
    if (o.states.cooked) st.push_back("cooked");
    if (o.states.frozen) st.push_back("frozen");
    if (!st.empty()) {
      out << "; state:";
      for (const auto& s : st) out << " " << s;
    }
    out << "\n";
  }
  out << "Robot: in " << scene.robot.room << ", hand ";
  if (scene.robot.held)
    out << "holds [" << *scene.robot.held << "]\n";
  else
    out << "empty\n";

  out << "\n## Output format\n";
  out << "Reply with one action per line and nothing else, at most " << kDefaultHMax << " lines.\n";
  out << "Each line is skill(key=value, ...) using the keys listed above.\n";
  out << "object_index and source_index are object numbers from the scene list; relation is ontop or inside;\n";
  out << "yaw is in radians, distance in meters, room_name is a room from the scene list.\n";
  out << "Example:\nmove(object_index=0)\npick_up(object_index=0)\n";
  return out.str();
}

}  // namespace tg
