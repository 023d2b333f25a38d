#include "tg/grpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tg/factory.hpp"

namespace tg {

// ---------------------------------------------------------------- vocabulary

namespace {

int arg_count(Skill s, int m) {
  switch (s) {
    case Skill::Turn:
    case Skill::MoveForward: return Vocabulary::kHeadings;
    case Skill::GoToRoom: return Vocabulary::kRoomSlots;
    case Skill::Place: return 2 * m;
    case Skill::Heat:
    case Skill::Cook:
    case Skill::Froze: return m * m;
    default: return m;
  }
}

double heading(int k) { return normalize_yaw(k * kPi / 2.0); }

}  // namespace

Vocabulary::Vocabulary(int slots) : m_(slots) {
  if (slots < 1) throw std::invalid_argument("vocabulary needs at least one slot");
  int off = 0;
  for (int s = 0; s < kNumSkills; ++s) {
    offset_[s] = off;
    off += arg_count(static_cast<Skill>(s), m_);
  }
  size_ = off + 1;
  if (size_ != size_for(m_)) throw std::logic_error("vocabulary layout drifted");
}

Vocabulary::Token Vocabulary::decode(int token) const {
  if (token < 0 || token >= size_) throw std::out_of_range("token out of range");
  Token t;
  if (token == stop()) {
    t.stop = true;
    return t;
  }
  int s = kNumSkills - 1;
  while (offset_[s] > token) --s;
  t.skill = static_cast<Skill>(s);
  int k = token - offset_[s];
  switch (t.skill) {
    case Skill::Place:
      t.a = k / 2;
      t.rel = k % 2 ? Relation::Inside : Relation::OnTop;
      break;
    case Skill::Heat:
    case Skill::Cook:
    case Skill::Froze:
      t.a = k / m_;
      t.b = k % m_;
      break;
    default: t.a = k; break;
  }
  return t;
}

int Vocabulary::encode(const Token& t) const {
  if (t.stop) return stop();
  int s = static_cast<int>(t.skill);
  int n = arg_count(t.skill, m_);
  int k = 0;
  switch (t.skill) {
    case Skill::Place: k = 2 * t.a + (t.rel == Relation::Inside ? 1 : 0); break;
    case Skill::Heat:
    case Skill::Cook:
    case Skill::Froze:
      if (t.b < 0 || t.b >= m_) throw std::out_of_range("source slot out of range");
      k = t.a * m_ + t.b;
      break;
    default: k = t.a; break;
  }
  if (t.a < 0 || k < 0 || k >= n) throw std::out_of_range("token argument out of range");
  return offset_[s] + k;
}

namespace {

const ObjectInstance* slot_object(const SuiteEntry& e, int slot) {
  if (slot < 0 || slot >= static_cast<int>(e.symbols.size())) return nullptr;
  auto it = e.binding.find(e.symbols[slot]);
  if (it == e.binding.end() || it->second < 0 || it->second >= static_cast<int>(e.scene.objects.size())) return nullptr;
  return &e.scene.objects[it->second];
}

}  // namespace

std::vector<std::uint8_t> action_mask(const Vocabulary& v, const SuiteEntry& e) {
  std::vector<std::uint8_t> mask(v.size(), 0);
  for (int tok = 0; tok < v.size(); ++tok) {
    Vocabulary::Token t = v.decode(tok);
    bool ok = false;
    if (t.stop) {
      ok = true;
    } else {
      const ObjectInstance* a = slot_object(e, t.a);
      switch (t.skill) {
        case Skill::Turn:
        case Skill::MoveForward: ok = true; break;
        case Skill::GoToRoom: ok = t.a < static_cast<int>(e.scene.rooms.size()); break;
        case Skill::Move: ok = a != nullptr; break;
        case Skill::PickUp: ok = a && a->flags.is_grippable; break;
        case Skill::Place: ok = a && (t.rel == Relation::OnTop ? a->flags.is_surface : a->flags.is_container); break;
        case Skill::Open:
        case Skill::Close: ok = a && a->flags.is_openable; break;
        case Skill::ToggleOn:
        case Skill::ToggleOff: ok = a && a->flags.is_toggleable; break;
        case Skill::Heat:
        case Skill::Cook:
        case Skill::Froze: {
          const ObjectInstance* src = slot_object(e, t.b);
          if (!a || !src || t.a == t.b) break;
          ok = t.skill == Skill::Heat ? src->flags.is_heat_source
               : t.skill == Skill::Cook ? src->flags.is_cook_tool
                                        : src->flags.is_cold_source;
          break;
        }
      }
    }
    mask[tok] = ok ? 1 : 0;
  }
  return mask;
}

std::optional<Action> token_action(const Vocabulary& v, int token, const SuiteEntry& e) {
  Vocabulary::Token t = v.decode(token);
  if (t.stop) return std::nullopt;
  auto id = [&](int slot) {
    const ObjectInstance* o = slot_object(e, slot);
    if (!o) throw std::out_of_range("slot " + std::to_string(slot) + " is not bound");
    return o->id;
  };
  switch (t.skill) {
    case Skill::Move: return Action::move(id(t.a));
    case Skill::Turn: return Action::turn(heading(t.a));
    case Skill::PickUp: return Action::pick_up(id(t.a));
    case Skill::Place: return Action::place(id(t.a), t.rel);
    case Skill::MoveForward: return Action::move_forward(Vocabulary::kStride, heading(t.a));
    case Skill::Open: return Action::open(id(t.a));
    case Skill::Close: return Action::close(id(t.a));
    case Skill::ToggleOn: return Action::toggle_on(id(t.a));
    case Skill::ToggleOff: return Action::toggle_off(id(t.a));
    case Skill::Heat: return Action::heat(id(t.a), id(t.b));
    case Skill::Cook: return Action::cook(id(t.a), id(t.b));
    case Skill::Froze: return Action::froze(id(t.a), id(t.b));
    case Skill::GoToRoom:
      if (t.a >= static_cast<int>(e.scene.rooms.size())) throw std::out_of_range("room slot is not bound");
      return Action::go_to_room(e.scene.rooms[t.a].name);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- policy

std::uint32_t context_key(const PolicyShape& s, const Context& c) {
  std::uint32_t k = static_cast<std::uint32_t>(c.bucket);
  k = k * static_cast<std::uint32_t>(s.h_max) + static_cast<std::uint32_t>(c.step);
  k = k * 2 + (c.held ? 1 : 0);
  return k * static_cast<std::uint32_t>(Vocabulary::size_for(s.slots) + 1) + static_cast<std::uint32_t>(c.last);
}

int goal_bucket(const TaskDef& task, int buckets) {
  std::vector<std::string> kinds;
  for (const auto& g : task.goals) kinds.emplace_back(pred_name(g.kind));
  std::sort(kinds.begin(), kinds.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& k : kinds) {
    for (unsigned char c : k) h = (h ^ c) * 0x100000001b3ULL;
    h = (h ^ '|') * 0x100000001b3ULL;
  }
  return static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

const std::vector<double>& LogitTable::row(std::uint32_t ctx) const {
  auto it = rows_.find(ctx);
  if (it != rows_.end()) return it->second;
  if (static_cast<int>(zeros_.size()) != vocab_) const_cast<std::vector<double>&>(zeros_).assign(vocab_, 0.0);
  return zeros_;
}

std::vector<double>& LogitTable::mutable_row(std::uint32_t ctx) {
  auto it = rows_.find(ctx);
  if (it == rows_.end()) it = rows_.emplace(ctx, std::vector<double>(vocab_, 0.0)).first;
  return it->second;
}

void save_policy(const std::filesystem::path& path, const Policy& p) {
  nlohmann::ordered_json j;
  j["format"] = "tg-policy";
  j["version"] = 1;
  j["slots"] = p.shape.slots;
  j["h_max"] = p.shape.h_max;
  j["goal_buckets"] = p.shape.goal_buckets;
  j["vocab"] = p.vocab.size();
  nlohmann::ordered_json rows = nlohmann::ordered_json::object();
  for (const auto& [k, r] : p.theta.rows()) rows[std::to_string(k)] = r;
  j["rows"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << "\n";
}

Policy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "tg-policy") throw std::runtime_error(path.string() + " is not a policy checkpoint");
  PolicyShape s{j.at("slots").get<int>(), j.at("h_max").get<int>(), j.at("goal_buckets").get<int>()};
  Policy p(s);
  if (j.at("vocab").get<int>() != p.vocab.size()) throw std::runtime_error("checkpoint vocabulary does not match");
  for (const auto& [k, r] : j.at("rows").items()) {
    auto v = r.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != p.vocab.size()) throw std::runtime_error("checkpoint row has wrong width");
    p.theta.mutable_row(static_cast<std::uint32_t>(std::stoul(k))) = std::move(v);
  }
  return p;
}

// ---------------------------------------------------------------- sampling

namespace {

/// Masked log-softmax of one row.
void masked_log_softmax(const std::vector<double>& row, const std::vector<std::uint8_t>& mask, std::vector<double>& out) {
  double mx = -INFINITY;
  for (std::size_t v = 0; v < row.size(); ++v)
    if (mask[v]) mx = std::max(mx, row[v]);
  double sum = 0.0;
  for (std::size_t v = 0; v < row.size(); ++v)
    if (mask[v]) sum += std::exp(row[v] - mx);
  double lse = mx + std::log(sum);
  out.assign(row.size(), -INFINITY);
  for (std::size_t v = 0; v < row.size(); ++v)
    if (mask[v]) out[v] = row[v] - lse;
}

void log_softmax(const std::vector<double>& row, std::vector<double>& out) {
  double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double x : row) sum += std::exp(x - mx);
  double lse = mx + std::log(sum);
  out.resize(row.size());
  for (std::size_t v = 0; v < row.size(); ++v) out[v] = row[v] - lse;
}

Context advance(Context c, const Vocabulary& v, int token) {
  Vocabulary::Token t = v.decode(token);
  c.step += 1;
  if (!t.stop) {
    if (t.skill == Skill::PickUp) c.held = true;
    if (t.skill == Skill::Place) c.held = false;
    c.last = 1 + token;
  }
  return c;
}

std::string decode_text(const Policy& p, const std::vector<int>& tokens, const SuiteEntry& e) {
  ActionSeq seq;
  for (int t : tokens)
    if (auto a = token_action(p.vocab, t, e)) seq.actions.push_back(*a);
  return serialize_actions(seq);
}

template <class Pick>
SampledSeq decode_with(const Policy& p, const SuiteEntry& e, const std::vector<std::uint8_t>& mask, Pick pick) {
  SampledSeq s;
  Context c{goal_bucket(e.task, p.shape.goal_buckets), 0, false, 0};
  std::vector<double> lp;
  while (c.step < p.shape.h_max) {
    std::uint32_t key = context_key(p.shape, c);
    masked_log_softmax(p.theta.row(key), mask, lp);
    int tok = pick(lp);
    s.tokens.push_back(tok);
    s.contexts.push_back(key);
    s.logprob_old += lp[tok];
    if (tok == p.vocab.stop()) break;
    c = advance(c, p.vocab, tok);
  }
  s.text = decode_text(p, s.tokens, e);
  return s;
}

}  // namespace

double sequence_logprob(const LogitTable& theta, const std::vector<std::uint32_t>& ctx, const std::vector<int>& tokens,
                        const std::vector<std::uint8_t>& mask) {
  double total = 0.0;
  std::vector<double> lp;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    masked_log_softmax(theta.row(ctx[k]), mask, lp);
    total += lp[tokens[k]];
  }
  return total;
}

std::vector<SampledSeq> sample_group(const Policy& p, const SuiteEntry& e, int G, std::uint64_t seed) {
  if (G < 2) throw std::invalid_argument("group size must be at least 2");
  std::vector<std::uint8_t> mask = action_mask(p.vocab, e);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SampledSeq> out;
  for (int g = 0; g < G; ++g) {
    out.push_back(decode_with(p, e, mask, [&](const std::vector<double>& lp) {
      double r = u(rng), acc = 0.0;
      int last = -1;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (!mask[v]) continue;
        last = static_cast<int>(v);
        acc += std::exp(lp[v]);
        if (r < acc) return last;
      }
      return last;
    }));
  }
  return out;
}

SampledSeq greedy_decode(const Policy& p, const SuiteEntry& e) {
  std::vector<std::uint8_t> mask = action_mask(p.vocab, e);
  return decode_with(p, e, mask, [&](const std::vector<double>& lp) {
    int best = -1;
    for (std::size_t v = 0; v < lp.size(); ++v)
      if (mask[v] && (best < 0 || lp[v] > lp[best])) best = static_cast<int>(v);
    return best;
  });
}

// ---------------------------------------------------------------- objective

std::vector<double> group_advantages(const std::vector<double>& r) {
  const double n = static_cast<double>(r.size());
  std::vector<double> a(r.size(), 0.0);
  if (r.empty()) return a;
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : r) var += (x - mean) * (x - mean);
  double sigma = std::sqrt(var / n);
  if (sigma < 1e-8) return a;
  for (std::size_t i = 0; i < r.size(); ++i) a[i] = (r[i] - mean) / sigma;
  return a;
}

LossReport grpo_loss_and_grad(const LogitTable& theta, const LogitTable& theta_ref, const GroupBatch& batch,
                              double eps, double beta_kl) {
  const int V = theta.vocab();
  if (theta_ref.vocab() != V) throw ShapeMismatch("reference table width differs");
  LossReport rep;
  rep.grad = LogitTable(V);
  std::size_t n = 0;
  for (const auto& g : batch.groups) {
    if (static_cast<int>(g.mask.size()) != V) throw ShapeMismatch("mask width differs from vocabulary");
    if (g.advantages.size() != g.seqs.size()) throw ShapeMismatch("one advantage per sequence expected");
    for (const auto& s : g.seqs) {
      if (s.tokens.size() != s.contexts.size()) throw ShapeMismatch("one context per token expected");
      for (int t : s.tokens)
        if (t < 0 || t >= V || !g.mask[t]) throw ShapeMismatch("token outside the mask");
    }
    n += g.seqs.size();
  }
  if (n == 0) return rep;

  std::vector<double> lp;
  std::set<std::uint32_t> visited;
  std::size_t clipped = 0;
  for (const auto& g : batch.groups) {
    for (std::size_t i = 0; i < g.seqs.size(); ++i) {
      const SampledSeq& s = g.seqs[i];
      const double A = g.advantages[i];
      const double rho = std::exp(sequence_logprob(theta, s.contexts, s.tokens, g.mask) - s.logprob_old);
      const double plain = rho * A;
      const double clip = std::clamp(rho, 1.0 - eps, 1.0 + eps) * A;
      rep.surrogate += std::min(plain, clip);
      if (clip < plain) ++clipped;
      for (auto c : s.contexts) visited.insert(c);
      if (plain > clip) continue;  // the clipped branch is flat in theta
      const double coef = -A * rho / static_cast<double>(n);
      if (coef == 0.0) continue;
      for (std::size_t k = 0; k < s.tokens.size(); ++k) {
        masked_log_softmax(theta.row(s.contexts[k]), g.mask, lp);
        std::vector<double>& gr = rep.grad.mutable_row(s.contexts[k]);
        for (int v = 0; v < V; ++v)
          if (g.mask[v]) gr[v] -= coef * std::exp(lp[v]);
        gr[s.tokens[k]] += coef;
      }
    }
  }
  rep.surrogate /= static_cast<double>(n);
  rep.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);

  // Exact categorical KL over the full row, averaged over visited contexts.
  std::vector<double> lq;
  const double w = beta_kl / static_cast<double>(visited.size());
  for (auto c : visited) {
    log_softmax(theta.row(c), lp);
    log_softmax(theta_ref.row(c), lq);
    double kl = 0.0;
    for (int v = 0; v < V; ++v) kl += std::exp(lp[v]) * (lp[v] - lq[v]);
    kl = std::max(kl, 0.0);
    rep.kl += kl;
    if (beta_kl == 0.0) continue;
    std::vector<double>& gr = rep.grad.mutable_row(c);
    for (int v = 0; v < V; ++v) gr[v] += w * std::exp(lp[v]) * (lp[v] - lq[v] - kl);
  }
  rep.kl /= static_cast<double>(visited.size());
  rep.loss = -rep.surrogate + beta_kl * rep.kl;
  return rep;
}

void sgd_step(LogitTable& theta, const LogitTable& grad, double lr) {
  for (const auto& [ctx, g] : grad.rows()) {
    std::vector<double>& th = theta.mutable_row(ctx);
    for (std::size_t i = 0; i < g.size(); ++i) th[i] -= lr * g[i];
  }
}

void Adam::step(LogitTable& theta, const LogitTable& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (const auto& [ctx, g] : grad.rows()) {
    auto& m = m_[ctx];
    auto& v = v_[ctx];
    if (m.empty()) m.assign(g.size(), 0.0), v.assign(g.size(), 0.0);
    std::vector<double>& th = theta.mutable_row(ctx);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      th[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------- training

std::string log_csv_header() {
  return "iteration,r_f,r_r,r_g,total,success_fraction,kl,clip_fraction,eval_success,seconds";
}

std::string log_csv_row(const LogRow& r) {
  std::ostringstream o;
  o << r.iteration << std::setprecision(6) << ',' << r.r_f << ',' << r.r_r << ',' << r.r_g << ',' << r.total << ','
    << r.success_fraction << ',' << r.kl << ',' << r.clip_fraction << ',' << r.eval_success << ',' << r.seconds;
  return o.str();
}

void write_log_csv(const std::filesystem::path& path, const TrainingLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << log_csv_header() << "\n";
  for (const auto& r : log.rows) out << log_csv_row(r) << "\n";
}

double evaluate_policy(const Policy& p, const std::vector<SuiteEntry>& suite, RolloutBackend& backend,
                       std::vector<RolloutOutcome>* outcomes) {
  if (suite.empty()) return 0.0;
  std::vector<RolloutRequest> reqs;
  for (std::size_t j = 0; j < suite.size(); ++j)
    reqs.push_back({j, static_cast<int>(j), greedy_decode(p, suite[j]).text});
  auto res = backend.run_batch(reqs);
  int ok = 0;
  for (const auto& r : res) ok += r.success();
  if (outcomes) *outcomes = res;
  return static_cast<double>(ok) / static_cast<double>(suite.size());
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

TrainingLog train(const TrainConfig& cfg, const std::vector<SuiteEntry>& suite, RolloutBackend& backend,
                  std::optional<Policy> init, const RowCallback& on_row) {
  if (suite.empty()) throw std::invalid_argument("training suite is empty");
  if (cfg.group_size < 2) throw std::invalid_argument("group size must be at least 2");
  TrainingLog log{{}, init ? *init : Policy(cfg.shape), Policy(cfg.shape)};
  log.reference = log.policy;
  Policy& policy = log.policy;
  Adam opt(cfg.lr);
  std::vector<std::vector<std::uint8_t>> masks;
  for (const auto& e : suite) masks.push_back(action_mask(policy.vocab, e));
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t next_id = 1;

  for (int it = 0; it <= cfg.iterations; ++it) {
    GroupBatch batch;
    std::vector<RolloutRequest> reqs;
    for (std::size_t j = 0; j < suite.size(); ++j) {
      TaskGroup g;
      g.task = static_cast<int>(j);
      g.mask = masks[j];
      g.seqs = sample_group(policy, suite[j], cfg.group_size, splitmix(cfg.seed ^ splitmix(it * 100003ULL + j)));
      for (const auto& s : g.seqs) reqs.push_back({next_id++, g.task, s.text});
      batch.groups.push_back(std::move(g));
    }
    auto res = backend.run_batch(reqs);
    if (res.size() != reqs.size()) throw BackendUnavailable("backend returned a partial batch");

    LogRow row;
    row.iteration = it;
    std::size_t k = 0, counted = 0, successes = 0;
    for (auto& g : batch.groups) {
      std::vector<SampledSeq> kept;
      for (auto& s : g.seqs) {
        const RolloutOutcome& o = res[k++];
        if (o.status != RolloutStatus::Ok) continue;  // lost rollouts leave the group
        row.r_f += o.reward.r_f;
        row.r_r += o.reward.r_r;
        row.r_g += o.reward.r_g;
        row.total += o.reward.total;
        successes += o.success();
        ++counted;
        g.rewards.push_back(o.reward.total);
        kept.push_back(std::move(s));
      }
      g.seqs = std::move(kept);
      g.advantages = g.seqs.size() >= 2 ? group_advantages(g.rewards) : std::vector<double>(g.seqs.size(), 0.0);
    }
    if (counted) {
      const double c = static_cast<double>(counted);
      row.r_f /= c, row.r_r /= c, row.r_g /= c, row.total /= c;
      row.success_fraction = static_cast<double>(successes) / c;
    }
    if (it > 0) {
      for (int ep = 0; ep < cfg.epochs; ++ep) {
        LossReport rep = grpo_loss_and_grad(policy.theta, log.reference.theta, batch, cfg.clip_eps, cfg.beta_kl);
        row.kl = rep.kl;
        row.clip_fraction = rep.clip_fraction;
        if (cfg.optimizer == TrainConfig::Optimizer::Adam)
          opt.step(policy.theta, rep.grad);
        else
          sgd_step(policy.theta, rep.grad, cfg.lr);
      }
    }
    row.eval_success = evaluate_policy(policy, suite, backend);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.rows.push_back(row);
    if (on_row) on_row(row);
    if (cfg.stop_at_success && row.success_fraction >= *cfg.stop_at_success) break;
  }
  return log;
}

SampledEval evaluate_sampled(const Policy& p, const std::vector<SuiteEntry>& suite, RolloutBackend& backend,
                             int repeats, std::uint64_t seed) {
  if (repeats < 1) throw std::invalid_argument("need at least one sample per task");
  std::vector<RolloutRequest> reqs;
  std::uint64_t id = 0;
  for (std::size_t j = 0; j < suite.size(); ++j) {
    // sample_group wants two or more, so draw in pairs and keep `repeats`.
    auto seqs = sample_group(p, suite[j], std::max(repeats, 2), splitmix(seed ^ splitmix(j + 1)));
    for (int i = 0; i < repeats; ++i) reqs.push_back({id++, static_cast<int>(j), seqs[i].text});
  }
  std::vector<RolloutOutcome> res = reqs.empty() ? std::vector<RolloutOutcome>{} : backend.run_batch(reqs);

  SampledEval out;
  out.overall.family = "overall";
  for (const auto& f : kTaskFamilies) out.families.push_back({f});
  auto slot_of = [&](const std::string& f) -> FamilyScore& {
    for (auto& s : out.families)
      if (s.family == f) return s;
    out.families.push_back({f});
    return out.families.back();
  };
  for (std::size_t j = 0; j < suite.size(); ++j) ++slot_of(suite[j].family).tasks;
  for (std::size_t k = 0; k < reqs.size(); ++k) {
    FamilyScore& f = slot_of(suite[static_cast<std::size_t>(reqs[k].task)].family);
    ++f.samples;
    f.successes += res[k].success();
  }
  out.overall.tasks = static_cast<int>(suite.size());
  out.overall.samples = static_cast<int>(reqs.size());
  for (const auto& f : out.families) out.overall.successes += f.successes;
  return out;
}

std::string sampled_eval_csv(const SampledEval& e) {
  std::ostringstream os;
  os << "family,tasks,samples,successes,success_fraction\n" << std::setprecision(6);
  auto row = [&](const FamilyScore& f) {
    os << f.family << ',' << f.tasks << ',' << f.samples << ',' << f.successes << ',' << f.fraction() << '\n';
  };
  for (const auto& f : e.families) row(f);
  row(e.overall);
  return os.str();
}

}  // namespace tg
