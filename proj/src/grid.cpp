#include "tg/grid.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <deque>
#include <numeric>
#include <nlohmann/json.hpp>

namespace tg {

using json = nlohmann::json;

std::string_view slot_phase_name(SlotPhase p) {
  switch (p) {
    case SlotPhase::Cold: return "cold";
    case SlotPhase::Loading: return "loading";
    case SlotPhase::Warm: return "warm";
    case SlotPhase::Busy: return "busy";
  }
  return "?";
}

int WorkerInfo::busy() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const SlotState& s) { return s.phase == SlotPhase::Busy; }));
}

int WorkerInfo::load() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const SlotState& s) { return s.phase != SlotPhase::Cold; }));
}

// ---------------------------------------------------------------- decisions

namespace {

std::vector<std::string> window_of(const std::vector<std::string>& upcoming, int k) {
  std::vector<std::string> w;
  for (const auto& s : upcoming) {
    if (static_cast<int>(w.size()) >= k) break;
    if (std::find(w.begin(), w.end(), s) == w.end()) w.push_back(s);
  }
  return w;
}

}  // namespace

ScheduleDecision schedule_preloads(const Registry& reg, const std::vector<std::string>& upcoming, int k, int demand,
                                   const std::set<std::string>& pinned, bool count_busy) {
  ScheduleDecision d;
  const auto window = window_of(upcoming, k);
  if (window.empty() || demand <= 0) return d;
  std::set<std::string> keep(pinned);
  keep.insert(window.begin(), window.end());

  Registry r = reg;  // planned loads show up as Loading
  for (const auto& scene : window) {
    int have = 0;
    for (const auto& w : r)
      for (const auto& s : w.slots)
        if (s.scene == scene && (s.phase == SlotPhase::Warm || s.phase == SlotPhase::Loading ||
                                 (count_busy && s.phase == SlotPhase::Busy)))
          ++have;
    for (int need = demand - have; need > 0; --need) {
      SlotState* pick = nullptr;
      WorkerInfo* owner = nullptr;
      for (auto& w : r) {
        auto it = std::find_if(w.slots.begin(), w.slots.end(), [](const SlotState& s) { return s.phase == SlotPhase::Cold; });
        if (it != w.slots.end() && (!owner || w.load() < owner->load())) {
          owner = &w;
          pick = &*it;
        }
      }
      if (!pick) {
        for (auto& w : r)
          for (auto& s : w.slots)
            if (s.phase == SlotPhase::Warm && !keep.count(s.scene) && (!pick || s.last_used < pick->last_used)) {
              pick = &s;
              owner = &w;
            }
      }
      if (!pick) break;
      pick->phase = SlotPhase::Loading;
      pick->scene = scene;
      d.assignments.push_back({owner->worker_id, pick->slot_id, scene});
    }
  }
  return d;
}

std::optional<SlotChoice> choose_warm_slot(const Registry& reg, const std::string& scene,
                                           const std::set<std::string>& pinned) {
  const WorkerInfo* bw = nullptr;
  const SlotState* bs = nullptr;
  for (const auto& w : reg)
    for (const auto& s : w.slots)
      if (s.phase == SlotPhase::Warm && s.scene == scene && (!bw || w.busy() < bw->busy())) {
        bw = &w;
        bs = &s;
        break;
      }
  if (bs) return SlotChoice{bw->worker_id, bs->slot_id, false};

  for (const auto& w : reg)
    for (const auto& s : w.slots)
      if (s.phase == SlotPhase::Cold &&
          (!bw || w.busy() < bw->busy() || (w.busy() == bw->busy() && w.load() < bw->load()))) {
        bw = &w;
        bs = &s;
        break;
      }
  if (bs) return SlotChoice{bw->worker_id, bs->slot_id, true};

  for (int pass = 0; pass < 2 && !bs; ++pass)
    for (const auto& w : reg)
      for (const auto& s : w.slots)
        if (s.phase == SlotPhase::Warm && (pass == 1 || !pinned.count(s.scene)) && (!bs || s.last_used < bs->last_used)) {
          bw = &w;
          bs = &s;
        }
  if (bs) return SlotChoice{bw->worker_id, bs->slot_id, true};
  return std::nullopt;
}

std::optional<SlotChoice> choose_naive_slot(const WorkerInfo& w, const std::string& scene) {
  if (w.busy() > 0) return std::nullopt;
  for (const auto& s : w.slots)
    if (s.phase == SlotPhase::Warm && s.scene == scene) return SlotChoice{w.worker_id, s.slot_id, false};
  for (const auto& s : w.slots)
    if (s.phase == SlotPhase::Cold) return SlotChoice{w.worker_id, s.slot_id, true};
  const SlotState* lru = nullptr;
  for (const auto& s : w.slots)
    if (s.phase == SlotPhase::Warm && (!lru || s.last_used < lru->last_used)) lru = &s;
  if (lru) return SlotChoice{w.worker_id, lru->slot_id, true};
  return std::nullopt;
}

// ---------------------------------------------------------------- messages

namespace {

json cost_json(const CostModel& c) {
  return {{"per_step_ms", c.per_step_ms}, {"fast_action_ms", c.fast_action_ms}, {"scene_load_ms", c.scene_load_ms},
          {"step_length", c.step_length}, {"turn_step", c.turn_step},           {"settle_iterations", c.settle_iterations},
          {"spin", c.spin}};
}

CostModel cost_from(const json& j) {
  CostModel c;
  c.per_step_ms = j.value("per_step_ms", c.per_step_ms);
  c.fast_action_ms = j.value("fast_action_ms", c.fast_action_ms);
  c.scene_load_ms = j.value("scene_load_ms", c.scene_load_ms);
  c.step_length = j.value("step_length", c.step_length);
  c.turn_step = j.value("turn_step", c.turn_step);
  c.settle_iterations = j.value("settle_iterations", c.settle_iterations);
  c.spin = j.value("spin", c.spin);
  return c;
}

json reward_cfg_json(const RewardConfig& r) {
  return {{"parse_penalty", r.parse_penalty}, {"parse_base", r.parse_base}, {"beta_rel", r.beta_rel},
          {"rel_cap", r.rel_cap},             {"goal_total", r.goal_total}};
}

RewardConfig reward_cfg_from(const json& j) {
  RewardConfig r;
  r.parse_penalty = j.value("parse_penalty", r.parse_penalty);
  r.parse_base = j.value("parse_base", r.parse_base);
  r.beta_rel = j.value("beta_rel", r.beta_rel);
  r.rel_cap = j.value("rel_cap", r.rel_cap);
  r.goal_total = j.value("goal_total", r.goal_total);
  return r;
}

json breakdown_json(const RewardBreakdown& b) {
  return {{"r_f", b.r_f},     {"r_r", b.r_r},   {"r_g", b.r_g}, {"total", b.total}, {"satisfied", b.satisfied},
          {"o_goal", b.o_goal}, {"o_a", b.o_a}};
}

RewardBreakdown breakdown_from(const json& j) {
  RewardBreakdown b;
  b.r_f = j.value("r_f", 0.0);
  b.r_r = j.value("r_r", 0.0);
  b.r_g = j.value("r_g", 0.0);
  b.total = j.value("total", 0.0);
  b.satisfied = j.value("satisfied", SatisfiedSet{});
  b.o_goal = j.value("o_goal", std::vector<int>{});
  b.o_a = j.value("o_a", std::vector<int>{});
  return b;
}

double ms_since(Clock::time_point t0, Clock::time_point t1 = Clock::now()) {
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

}  // namespace

// ---------------------------------------------------------------- manager

struct Manager::Impl {
  ManagerConfig cfg;
  Socket listener;
  int wake_r = -1, wake_w = -1;
  std::thread loop;
  std::atomic<bool> running{false};

  // Everything below is guarded by `mu`; the loop holds it while handling events.
  mutable std::mutex mu;
  std::condition_variable changed;

  struct Conn {
    Socket sock;
    FrameDecoder dec;
    std::string worker;  // empty until registered
  };
  std::map<int, Conn> conns;

  struct WorkerRec {
    WorkerInfo info;
    int fd = -1;
    std::set<std::string> shipped;  // scenario payloads sent on this connection
  };
  std::vector<WorkerRec> workers;

  struct Scenario {
    std::string task, scene;
  };
  std::map<std::string, Scenario> scenarios;

  struct Pending {
    GridJob job;
    int attempts = 0;
    Clock::time_point enqueued;
    std::shared_ptr<ReportFn> sink;
  };
  std::deque<Pending> queue;

  struct Flight {
    Pending p;
    std::string worker;
    int slot = 0;
    Clock::time_point dispatched;
    bool reported = false;  // timed out; the slot stays busy until the worker answers
  };
  std::map<std::uint64_t, Flight> inflight;

  std::vector<std::string> upcoming;
  std::size_t rr = 0;
  std::uint64_t tick = 0;
  GridStats stats;
  std::optional<Clock::time_point> no_workers_since;

  // Reports are delivered after the lock is released.
  std::vector<std::pair<std::shared_ptr<ReportFn>, GridReport>> outbox;

  explicit Impl(ManagerConfig c) : cfg(std::move(c)) {}

  void wake() {
    char b = 1;
    [[maybe_unused]] auto n = ::write(wake_w, &b, 1);
  }

  WorkerRec* find_worker(const std::string& id) {
    for (auto& w : workers)
      if (w.info.worker_id == id) return &w;
    return nullptr;
  }

  static SlotState* find_slot(WorkerRec& w, int slot) {
    for (auto& s : w.info.slots)
      if (s.slot_id == slot) return &s;
    return nullptr;
  }

  bool send(int fd, const json& m) {
    if (send_frame(fd, m.dump())) return true;
    ::shutdown(fd, SHUT_RDWR);  // the next poll sees EOF and drops the worker
    return false;
  }

  void deliver(Pending& p, GridReport r) {
    r.outcome.rollout_id = p.job.rollout_id;
    r.attempts = p.attempts + 1;
    outbox.emplace_back(p.sink, std::move(r));
  }

  void fail(Pending& p, const std::string& why, double queue_ms = 0.0) {
    GridReport r;
    r.outcome.status = RolloutStatus::Failed;
    r.outcome.error = why;
    r.queue_ms = queue_ms;
    r.outcome.latency_ms = queue_ms;
    deliver(p, std::move(r));
  }

  void flush() {
    std::vector<std::pair<std::shared_ptr<ReportFn>, GridReport>> out;
    {
      std::lock_guard lk(mu);
      out.swap(outbox);
    }
    for (auto& [sink, r] : out) (*sink)(r);
  }

  // ---- connections

  void drop_conn(int fd) {
    auto it = conns.find(fd);
    if (it == conns.end()) return;
    std::string id = it->second.worker;
    conns.erase(it);
    if (!id.empty()) lose_worker(id);
  }

  void lose_worker(const std::string& id) {
    auto it = std::find_if(workers.begin(), workers.end(), [&](const WorkerRec& w) { return w.info.worker_id == id; });
    if (it == workers.end()) return;
    ++stats.lost_workers;
    int fd = it->fd;
    workers.erase(it);
    if (auto c = conns.find(fd); c != conns.end() && c->second.worker == id) conns.erase(c);
    for (auto f = inflight.begin(); f != inflight.end();) {
      if (f->second.worker != id) {
        ++f;
        continue;
      }
      Flight fl = std::move(f->second);
      f = inflight.erase(f);
      if (fl.reported) continue;
      if (fl.p.attempts + 1 < cfg.max_attempts) {
        ++fl.p.attempts;
        ++stats.requeued;
        queue.push_front(std::move(fl.p));
      } else {
        fail(fl.p, "worker " + id + " lost", ms_since(fl.p.enqueued));
      }
    }
    changed.notify_all();
  }

  void accept_all() {
    for (;;) {
      int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
      if (fd < 0) return;
      conns.emplace(fd, Conn{Socket(fd), {}, {}});
    }
  }

  void read_conn(int fd) {
    auto it = conns.find(fd);
    if (it == conns.end()) return;
    bool eof = false;
    char buf[65536];
    for (;;) {
      ssize_t n = ::recv(fd, buf, sizeof buf, MSG_DONTWAIT);
      if (n > 0) {
        it->second.dec.feed({buf, static_cast<std::size_t>(n)});
        continue;
      }
      if (n < 0 && errno == EINTR) continue;
      if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK)) eof = true;
      break;
    }
    for (;;) {
      it = conns.find(fd);
      if (it == conns.end()) return;
      std::optional<std::string> f;
      try {
        f = it->second.dec.next();
      } catch (const ProtocolError& e) {
        send(fd, {{"type", "ERROR"}, {"code", "Protocol"}, {"message", e.what()}});
        drop_conn(fd);
        return;
      }
      if (!f) break;
      handle(fd, *f);
    }
    if (eof) drop_conn(fd);
  }

  void refuse(int fd, const std::string& code, const std::string& msg) {
    send(fd, {{"type", "ERROR"}, {"code", code}, {"message", msg}});
    conns.erase(fd);
  }

  void handle(int fd, const std::string& payload) {
    Conn& c = conns.at(fd);
    json m;
    try {
      m = json::parse(payload);
      if (!m.is_object() || !m.contains("type") || !m["type"].is_string()) throw std::runtime_error("missing type");
    } catch (const std::exception& e) {
      if (c.worker.empty()) return refuse(fd, "MalformedRegister", e.what());
      send(fd, {{"type", "ERROR"}, {"code", "Malformed"}, {"message", e.what()}});
      return drop_conn(fd);
    }
    const std::string type = m["type"];
    if (c.worker.empty()) {
      if (type != "REGISTER") return refuse(fd, "NotRegistered", "expected REGISTER, got " + type);
      return on_register(fd, m);
    }
    WorkerRec* w = find_worker(c.worker);
    if (!w) return drop_conn(fd);
    w->info.last_heartbeat = Clock::now();
    try {
      if (type == "HEARTBEAT") return;
      if (type == "PRELOAD_DONE") return on_preload_done(*w, m);
      if (type == "RESULT") return on_result(*w, m);
      if (type == "REQUEUE") return on_requeue(*w, m);
      if (type == "ERROR") return drop_conn(fd);
      throw std::runtime_error("unexpected message " + type);
    } catch (const std::exception& e) {
      send(fd, {{"type", "ERROR"}, {"code", "Malformed"}, {"message", e.what()}});
      drop_conn(fd);
    }
  }

  void on_register(int fd, const json& m) {
    WorkerInfo info;
    try {
      info.worker_id = m.at("worker_id").get<std::string>();
      info.epoch = m.value("epoch", 0);
      int slots = m.at("slots").get<int>();
      if (info.worker_id.empty()) throw std::runtime_error("empty worker_id");
      if (slots < 1 || slots > 256) throw std::runtime_error("slots out of range");
      if (m.contains("resources")) {
        const json& r = m["resources"];
        info.resources.cpu_slots = r.value("cpu_slots", info.resources.cpu_slots);
        info.resources.mem_mb = r.value("mem_mb", info.resources.mem_mb);
        info.resources.accel_score = r.value("accel_score", info.resources.accel_score);
      }
      for (int i = 0; i < slots; ++i) info.slots.push_back({i, SlotPhase::Cold, {}, 0, 0});
    } catch (const std::exception& e) {
      return refuse(fd, "MalformedRegister", e.what());
    }
    if (WorkerRec* old = find_worker(info.worker_id)) {
      if (info.epoch <= old->info.epoch)
        return refuse(fd, "DuplicateRegistration",
                      "worker " + info.worker_id + " already registered at epoch " + std::to_string(old->info.epoch));
      lose_worker(info.worker_id);  // a restarted host supersedes the old record
    }
    info.last_heartbeat = Clock::now();
    conns.at(fd).worker = info.worker_id;
    const std::string id = info.worker_id;
    workers.push_back({std::move(info), fd, {}});
    send(fd, {{"type", "REGISTER_ACK"}, {"worker_id", id}, {"heartbeat_ms", cfg.heartbeat.count()}});
    changed.notify_all();
  }

  void settle_slot(WorkerRec& w, int slot, const json& m) {
    SlotState* s = find_slot(w, slot);
    if (!s) throw std::runtime_error("unknown slot " + std::to_string(slot));
    const std::string phase = m.value("slot_phase", "cold");
    const std::string scene = m.value("slot_scene", "");
    s->rollout = 0;
    s->last_used = ++tick;
    if (phase == "warm" && !scene.empty()) {
      s->phase = SlotPhase::Warm;
      s->scene = scene;
    } else {
      s->phase = SlotPhase::Cold;
      s->scene.clear();
    }
  }

  void on_preload_done(WorkerRec& w, const json& m) {
    SlotState* s = find_slot(w, m.at("slot").get<int>());
    if (!s) throw std::runtime_error("unknown slot");
    if (s->phase != SlotPhase::Loading) return;  // superseded by a dispatch
    settle_slot(w, s->slot_id, m);
  }

  Flight* match(WorkerRec& w, const json& m, std::map<std::uint64_t, Flight>::iterator* out) {
    auto it = inflight.find(m.at("rollout_id").get<std::uint64_t>());
    if (it == inflight.end() || it->second.worker != w.info.worker_id || it->second.slot != m.at("slot").get<int>())
      return nullptr;
    *out = it;
    return &it->second;
  }

  void on_result(WorkerRec& w, const json& m) {
    settle_slot(w, m.at("slot").get<int>(), m);
    std::map<std::uint64_t, Flight>::iterator it;
    Flight* f = match(w, m, &it);
    if (!f || f->reported) {
      ++stats.late_results;
      if (f) inflight.erase(it);
      return;
    }
    GridReport r;
    r.worker_id = w.info.worker_id;
    r.slot_id = f->slot;
    r.queue_ms = ms_since(f->p.enqueued, f->dispatched);
    r.load_ms = m.value("load_ms", 0.0);
    r.exec_ms = m.value("exec_ms", 0.0);
    r.executed_len = m.value("executed_len", 0);
    r.outcome.n_sub = m.value("n_sub", 0);
    if (m.value("status", "failed") == "ok") {
      r.outcome.reward = breakdown_from(m.at("reward"));
    } else {
      r.outcome.status = RolloutStatus::Failed;
      r.outcome.error = m.value("error", "rollout failed on worker");
    }
    r.outcome.latency_ms = r.queue_ms + r.load_ms + r.exec_ms;
    Pending p = std::move(f->p);
    inflight.erase(it);
    deliver(p, std::move(r));
  }

  void on_requeue(WorkerRec& w, const json& m) {
    std::map<std::uint64_t, Flight>::iterator it;
    Flight* f = match(w, m, &it);
    // A busy slot keeps its rollout; anything else reports where it stands.
    if (m.value("reason", "") != "SlotBusy") settle_slot(w, m.at("slot").get<int>(), m);
    if (!f) return;
    Pending p = std::move(f->p);
    bool reported = f->reported;
    inflight.erase(it);
    if (reported) return;
    ++stats.requeued;
    queue.push_front(std::move(p));
  }

  // ---- timers, dispatch, scheduling

  void check_timers() {
    const auto now = Clock::now();
    std::vector<std::string> dead;
    for (const auto& w : workers)
      if (now - w.info.last_heartbeat > cfg.heartbeat * cfg.missed_heartbeats) dead.push_back(w.info.worker_id);
    for (const auto& id : dead) {
      auto* w = find_worker(id);
      int fd = w ? w->fd : -1;
      lose_worker(id);
      conns.erase(fd);
    }
    for (auto& [id, f] : inflight)
      if (!f.reported && now - f.dispatched > cfg.rollout_timeout) {
        f.reported = true;
        fail(f.p, "rollout timed out after " + std::to_string(cfg.rollout_timeout.count()) + " ms", ms_since(f.p.enqueued));
      }
    if (!workers.empty() || queue.empty()) {
      no_workers_since.reset();
    } else if (!no_workers_since) {
      no_workers_since = now;
    } else if (now - *no_workers_since > cfg.rollout_timeout) {
      for (auto& p : queue) fail(p, "no workers registered", ms_since(p.enqueued));
      queue.clear();
      no_workers_since.reset();
    }
  }

  Registry view() const {
    Registry r;
    r.reserve(workers.size());
    for (const auto& w : workers) r.push_back(w.info);
    return r;
  }

  json payload_for(WorkerRec& w, const std::string& scene) {
    if (w.shipped.count(scene)) return nullptr;
    w.shipped.insert(scene);
    const Scenario& s = scenarios.at(scene);
    return {{"task", s.task}, {"scene", s.scene}};
  }

  void dispatch(Pending p, const SlotChoice& c) {
    WorkerRec* w = find_worker(c.worker_id);
    SlotState* s = find_slot(*w, c.slot_id);
    s->phase = SlotPhase::Busy;
    s->scene = p.job.scenario;
    s->rollout = p.job.rollout_id;
    s->last_used = ++tick;
    const GridMode& md = cfg.mode;
    json m = {{"type", "EXECUTE"},
              {"rollout_id", p.job.rollout_id},
              {"slot", c.slot_id},
              {"scenario", p.job.scenario},
              {"text", p.job.text},
              {"allow_load", c.needs_load},
              {"reuse", md.reuse()},
              {"path", md.path == ExecPath::Fast ? "fast" : "micro"},
              {"cost", cost_json(md.cost)},
              {"reward", reward_cfg_json(md.reward)},
              {"h_max", md.h_max}};
    json pl = payload_for(*w, p.job.scenario);
    if (!pl.is_null()) m["payload"] = std::move(pl);
    ++stats.dispatched;
    if (!c.needs_load) ++stats.warm_hits;
    const int fd = w->fd;
    const std::uint64_t id = p.job.rollout_id;
    inflight.emplace(id, Flight{std::move(p), c.worker_id, c.slot_id, Clock::now(), false});
    send(fd, m);
  }

  std::set<std::string> busy_scenes() const {
    std::set<std::string> s;
    for (const auto& [id, f] : inflight) s.insert(f.p.job.scenario);
    return s;
  }

  void pump() {
    if (cfg.mode.dispatcher == DispatchMode::WarmAware) {
      std::set<std::string> pinned = busy_scenes();
      for (const auto& p : queue) pinned.insert(p.job.scenario);
      for (const auto& s : window_of(upcoming, cfg.mode.lookahead)) pinned.insert(s);
      // Warm hits first so a cold job never takes a slot a later job could reuse.
      for (int pass = 0; pass < 2; ++pass) {
        for (auto it = queue.begin(); it != queue.end();) {
          auto c = choose_warm_slot(view(), it->job.scenario, pinned);
          if (!c || (pass == 0 && c->needs_load)) {
            ++it;
            continue;
          }
          Pending p = std::move(*it);
          it = queue.erase(it);
          dispatch(std::move(p), *c);
        }
      }
    } else {
      // Strict round robin, one rollout per worker at a time.
      while (!queue.empty() && !workers.empty()) {
        WorkerRec& w = workers[rr % workers.size()];
        auto c = choose_naive_slot(w.info, queue.front().job.scenario);
        if (!c) break;
        Pending p = std::move(queue.front());
        queue.pop_front();
        ++rr;
        dispatch(std::move(p), *c);
      }
    }
    if (cfg.mode.lookahead <= 0 || !queue.empty()) return;
    ScheduleDecision d =
        schedule_preloads(view(), upcoming, cfg.mode.lookahead, cfg.mode.demand, busy_scenes(), cfg.mode.reuse());
    for (const auto& a : d.assignments) {
      if (!scenarios.count(a.scene_id)) continue;
      WorkerRec* w = find_worker(a.worker_id);
      SlotState* s = find_slot(*w, a.slot_id);
      s->phase = SlotPhase::Loading;
      s->scene = a.scene_id;
      s->last_used = ++tick;
      json m = {{"type", "PRELOAD"}, {"slot", a.slot_id}, {"scenario", a.scene_id}, {"cost", cost_json(cfg.mode.cost)}};
      json pl = payload_for(*w, a.scene_id);
      if (!pl.is_null()) m["payload"] = std::move(pl);
      ++stats.preloads;
      send(w->fd, m);
    }
  }

  void run() {
    std::vector<pollfd> fds;
    while (running) {
      fds.clear();
      fds.push_back({wake_r, POLLIN, 0});
      fds.push_back({listener.fd(), POLLIN, 0});
      {
        std::lock_guard lk(mu);
        for (const auto& [fd, c] : conns) fds.push_back({fd, POLLIN, 0});
      }
      ::poll(fds.data(), fds.size(), 20);
      {
        std::lock_guard lk(mu);
        if (fds[0].revents) {
          char b[256];
          while (::read(wake_r, b, sizeof b) > 0) {
          }
        }
        if (fds[1].revents & POLLIN) accept_all();
        for (std::size_t i = 2; i < fds.size(); ++i)
          if (fds[i].revents) read_conn(fds[i].fd);
        check_timers();
        pump();
        changed.notify_all();
      }
      flush();
    }
  }
};

Manager::Manager(ManagerConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

Manager::~Manager() { stop(); }

void Manager::start() {
  if (impl_->running) return;
  impl_->cfg.mode.reward.validate();
  impl_->listener = listen_tcp(impl_->cfg.listen, &port_);
  set_nonblocking(impl_->listener.fd());
  int p[2];
  if (::pipe2(p, O_NONBLOCK | O_CLOEXEC) != 0) throw GridError("pipe failed");
  impl_->wake_r = p[0];
  impl_->wake_w = p[1];
  impl_->running = true;
  impl_->loop = std::thread([this] { impl_->run(); });
}

void Manager::stop() {
  if (!impl_->running) return;
  impl_->running = false;
  impl_->wake();
  impl_->loop.join();
  {
    std::lock_guard lk(impl_->mu);
    for (auto& p : impl_->queue) impl_->fail(p, "manager stopped");
    for (auto& [id, f] : impl_->inflight)
      if (!f.reported) impl_->fail(f.p, "manager stopped");
    impl_->queue.clear();
    impl_->inflight.clear();
    impl_->conns.clear();
    impl_->workers.clear();
    impl_->listener.close();
  }
  impl_->flush();
  ::close(impl_->wake_r);
  ::close(impl_->wake_w);
}

void Manager::add_scenario(const std::string& id, const TaskDef& task, const SceneDoc& scene) {
  std::lock_guard lk(impl_->mu);
  impl_->scenarios[id] = {serialize_task(task), scene_to_text(scene)};
}

void Manager::set_mode(const GridMode& mode) {
  mode.reward.validate();
  std::lock_guard lk(impl_->mu);
  impl_->cfg.mode = mode;
  if (impl_->running) impl_->wake();
}

void Manager::set_upcoming(std::vector<std::string> scenarios) {
  std::lock_guard lk(impl_->mu);
  impl_->upcoming = std::move(scenarios);
  if (impl_->running) impl_->wake();
}

void Manager::submit(std::vector<GridJob> jobs, ReportFn on_report) {
  auto sink = std::make_shared<ReportFn>(std::move(on_report));
  {
    std::lock_guard lk(impl_->mu);
    if (!impl_->running) throw GridError("manager is not running");
    if (jobs.empty()) throw GridError("empty batch");
    std::set<std::uint64_t> ids;
    for (const auto& p : impl_->queue) ids.insert(p.job.rollout_id);
    for (const auto& [id, f] : impl_->inflight) ids.insert(id);
    for (const auto& j : jobs)
      if (!ids.insert(j.rollout_id).second) throw GridError("rollout id " + std::to_string(j.rollout_id) + " is already pending");
    const auto now = Clock::now();
    for (auto& j : jobs) {
      Impl::Pending p{std::move(j), 0, now, sink};
      if (!impl_->scenarios.count(p.job.scenario))
        impl_->fail(p, "unknown scenario '" + p.job.scenario + "'");
      else
        impl_->queue.push_back(std::move(p));
    }
    impl_->wake();
  }
  impl_->flush();
}

std::vector<GridReport> Manager::run_batch(std::vector<GridJob> jobs) {
  struct State {
    std::mutex mu;
    std::condition_variable cv;
    std::map<std::uint64_t, std::size_t> index;
    std::vector<GridReport> out;
    std::vector<char> done;
    std::size_t left = 0;
  };
  auto st = std::make_shared<State>();
  st->out.resize(jobs.size());
  st->done.assign(jobs.size(), 0);
  st->left = jobs.size();
  for (std::size_t i = 0; i < jobs.size(); ++i) st->index[jobs[i].rollout_id] = i;
  submit(std::move(jobs), [st](const GridReport& r) {
    std::lock_guard lk(st->mu);
    auto it = st->index.find(r.outcome.rollout_id);
    if (it == st->index.end() || st->done[it->second]) return;
    st->out[it->second] = r;
    st->done[it->second] = 1;
    if (--st->left == 0) st->cv.notify_all();
  });
  std::unique_lock lk(st->mu);
  st->cv.wait(lk, [&] { return st->left == 0; });
  return std::move(st->out);
}

bool Manager::wait_for_workers(int n, std::chrono::milliseconds timeout) {
  std::unique_lock lk(impl_->mu);
  return impl_->changed.wait_for(lk, timeout, [&] { return static_cast<int>(impl_->workers.size()) >= n; });
}

bool Manager::wait_until_settled(std::chrono::milliseconds timeout) {
  std::unique_lock lk(impl_->mu);
  return impl_->changed.wait_for(lk, timeout, [&] {
    for (const auto& w : impl_->workers)
      for (const auto& s : w.info.slots)
        if (s.phase == SlotPhase::Loading) return false;
    return true;
  });
}

Registry Manager::registry() const {
  std::lock_guard lk(impl_->mu);
  return impl_->view();
}

GridStats Manager::stats() const {
  std::lock_guard lk(impl_->mu);
  return impl_->stats;
}

// ---------------------------------------------------------------- worker

struct Worker::Impl {
  WorkerConfig cfg;
  Socket sock;
  FrameDecoder dec;
  std::mutex send_mu;
  std::atomic<bool> crashed{false};
  std::atomic<bool> stopping{false};
  std::thread reader, heart;

  std::mutex life_mu;
  std::condition_variable life_cv;
  bool connected = false;

  struct Scenario {
    TaskDef task;
    SceneDoc scene;
    std::string error;  // payload that failed to parse
  };
  std::mutex sc_mu;
  std::map<std::string, std::shared_ptr<const Scenario>> scenarios;

  struct Slot {
    int id = 0;
    std::thread th;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<json> inbox;
    bool busy = false;
    // Owned by the slot thread.
    std::unique_ptr<World> world;
    std::string scene;
    std::shared_ptr<const Scenario> sc;
    Binding binding;
  };
  std::vector<std::unique_ptr<Slot>> slots;

  explicit Impl(WorkerConfig c) : cfg(std::move(c)) {}

  void send(const json& m) {
    if (crashed) return;
    std::lock_guard lk(send_mu);
    send_frame(sock.fd(), m.dump());
  }

  void remember(const std::string& id, const json& payload) {
    auto s = std::make_shared<Scenario>();
    try {
      s->task = parse_task(payload.at("task").get<std::string>());
      s->scene = scene_from_text(payload.at("scene").get<std::string>());
    } catch (const std::exception& e) {
      s->error = e.what();
    }
    std::lock_guard lk(sc_mu);
    scenarios[id] = std::move(s);
  }

  std::shared_ptr<const Scenario> lookup(const std::string& id) {
    std::lock_guard lk(sc_mu);
    auto it = scenarios.find(id);
    return it == scenarios.end() ? nullptr : it->second;
  }

  static json phase_fields(const Slot& s, json m) {
    m["slot_phase"] = s.world ? "warm" : "cold";
    m["slot_scene"] = s.world ? s.scene : "";
    return m;
  }

  // Returns an error, empty on success.
  std::string load(Slot& s, const std::string& id, const CostModel& cost, double* ms) {
    const auto t0 = Clock::now();
    s.world.reset();
    s.scene.clear();
    auto sc = lookup(id);
    if (!sc) return "scenario '" + id + "' was never shipped to this worker";
    if (!sc->error.empty()) return "scenario '" + id + "': " + sc->error;
    try {
      auto w = std::make_unique<World>(sc->scene);
      s.binding = bind_by_name(sc->task, w->state());
      if (cost.spin) busy_work(cost.scene_load_ms);
      s.world = std::move(w);
      s.scene = id;
      s.sc = std::move(sc);
    } catch (const std::exception& e) {
      return e.what();
    }
    *ms = ms_since(t0);
    return {};
  }

  json on_preload(Slot& s, const json& m) {
    const std::string id = m.at("scenario");
    double ms = 0.0;
    std::string err = (s.world && s.scene == id) ? std::string() : load(s, id, cost_from(m.value("cost", json::object())), &ms);
    return phase_fields(s, {{"type", "PRELOAD_DONE"}, {"slot", s.id}, {"scenario", id}, {"ok", err.empty()},
                            {"error", err}, {"load_ms", ms}});
  }

  json on_execute(Slot& s, const json& m) {
    const std::string id = m.at("scenario");
    const std::uint64_t rid = m.at("rollout_id");
    const CostModel cost = cost_from(m.value("cost", json::object()));
    json r = {{"type", "RESULT"}, {"rollout_id", rid}, {"slot", s.id}, {"scenario", id}};
    double load_ms = 0.0;
    if (!(s.world && s.scene == id)) {
      if (!m.value("allow_load", false))
        return phase_fields(s, {{"type", "REQUEUE"}, {"rollout_id", rid}, {"slot", s.id}, {"reason", "SlotNotWarm"}});
      std::string err = load(s, id, cost, &load_ms);
      if (!err.empty()) {
        r["status"] = "failed";
        r["error"] = err;
        return phase_fields(s, r);
      }
    } else {
      s.world->reset();
    }
    const auto t0 = Clock::now();
    try {
      const ExecPath path = m.value("path", "fast") == "micro" ? ExecPath::Micro : ExecPath::Fast;
      EpisodeResult ep = run_episode(*s.world, m.at("text").get<std::string>(), s.sc->task, s.binding, path, cost,
                                     reward_cfg_from(m.value("reward", json::object())), m.value("h_max", kDefaultHMax));
      r["status"] = "ok";
      r["reward"] = breakdown_json(ep.reward);
      r["n_sub"] = s.sc->task.n_sub();
      r["executed_len"] = ep.executed_len;
      r["halt_reason"] = fail_reason_name(ep.halt_reason);
      r["parsed"] = ep.parse.ok();
    } catch (const std::exception& e) {
      r["status"] = "failed";
      r["error"] = e.what();
      s.world.reset();
    }
    r["load_ms"] = load_ms;
    r["exec_ms"] = ms_since(t0);
    if (s.world && m.value("reuse", true)) {
      s.world->reset();
    } else {
      s.world.reset();
      s.scene.clear();
    }
    return phase_fields(s, r);
  }

  void slot_loop(Slot& s) {
    for (;;) {
      json m;
      {
        std::unique_lock lk(s.mu);
        s.cv.wait(lk, [&] { return stopping || !s.inbox.empty(); });
        if (stopping) return;
        m = std::move(s.inbox.front());
        s.inbox.pop_front();
      }
      json reply;
      try {
        reply = m["type"] == "PRELOAD" ? on_preload(s, m) : on_execute(s, m);
      } catch (const std::exception& e) {
        reply = {{"type", "ERROR"}, {"code", "Malformed"}, {"message", e.what()}};
      }
      {
        // Free the slot before answering: the manager may dispatch the moment it reads the reply.
        std::lock_guard lk(s.mu);
        s.busy = false;
      }
      send(reply);
    }
  }

  void route(const json& m) {
    const std::string type = m.at("type");
    if (type == "ERROR") throw GridError(m.value("message", "manager error"));
    if (type != "PRELOAD" && type != "EXECUTE") return;
    const std::string id = m.at("scenario");
    if (m.contains("payload")) remember(id, m["payload"]);
    const int slot = m.at("slot");
    if (slot < 0 || slot >= static_cast<int>(slots.size())) throw GridError("slot out of range");
    Slot& s = *slots[slot];
    std::lock_guard lk(s.mu);
    if (s.busy && type == "EXECUTE") {
      send({{"type", "REQUEUE"}, {"rollout_id", m.at("rollout_id")}, {"slot", slot}, {"reason", "SlotBusy"}});
      return;
    }
    s.busy = true;
    s.inbox.push_back(m);
    s.cv.notify_one();
  }

  void read_loop() {
    for (;;) {
      auto f = recv_frame(sock.fd(), dec);
      if (!f) break;
      try {
        route(json::parse(*f));
      } catch (const std::exception&) {
        break;
      }
    }
    sock.shutdown();
    std::lock_guard lk(life_mu);
    connected = false;
    stopping = true;
    life_cv.notify_all();
    for (auto& s : slots) {
      std::lock_guard sl(s->mu);
      s->cv.notify_all();
    }
  }

  void heartbeat_loop() {
    std::unique_lock lk(life_mu);
    while (connected) {
      if (life_cv.wait_for(lk, cfg.heartbeat, [&] { return !connected; })) break;
      lk.unlock();
      send({{"type", "HEARTBEAT"}, {"worker_id", cfg.worker_id}});
      lk.lock();
    }
  }

  void join() {
    if (reader.joinable()) reader.join();
    if (heart.joinable()) heart.join();
    for (auto& s : slots)
      if (s->th.joinable()) s->th.join();
  }
};

Worker::Worker(WorkerConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>(cfg_)) {}

Worker::~Worker() {
  stop();
  impl_->join();
}

void Worker::start() {
  Impl& I = *impl_;
  if (cfg_.slots < 1) throw GridError("a worker needs at least one slot");
  try {
    I.sock = connect_tcp(cfg_.manager, cfg_.connect_timeout);
  } catch (const std::exception& e) {
    throw GridError(e.what());
  }
  json reg = {{"type", "REGISTER"},
              {"worker_id", cfg_.worker_id},
              {"epoch", cfg_.epoch},
              {"slots", cfg_.slots},
              {"resources",
               {{"cpu_slots", cfg_.resources.cpu_slots},
                {"mem_mb", cfg_.resources.mem_mb},
                {"accel_score", cfg_.resources.accel_score}}}};
  if (!send_frame(I.sock.fd(), reg.dump())) throw GridError("manager closed the connection");
  pollfd p{I.sock.fd(), POLLIN, 0};
  if (::poll(&p, 1, static_cast<int>(cfg_.connect_timeout.count())) <= 0) throw GridError("no answer to REGISTER");
  auto f = recv_frame(I.sock.fd(), I.dec);
  if (!f) throw GridError("manager closed the connection during registration");
  json ack = json::parse(*f, nullptr, false);
  if (ack.is_discarded() || ack.value("type", "") != "REGISTER_ACK")
    throw GridError("registration refused: " + (ack.is_object() ? ack.value("message", ack.dump()) : *f));

  I.connected = true;
  running_ = true;
  for (int i = 0; i < cfg_.slots; ++i) {
    I.slots.push_back(std::make_unique<Impl::Slot>());
    I.slots.back()->id = i;
  }
  for (auto& s : I.slots) s->th = std::thread([&I, sp = s.get()] { I.slot_loop(*sp); });
  I.heart = std::thread([&I] { I.heartbeat_loop(); });
  I.reader = std::thread([this, &I] {
    I.read_loop();
    running_ = false;
  });
}

void Worker::wait() {
  std::unique_lock lk(impl_->life_mu);
  impl_->life_cv.wait(lk, [&] { return !impl_->connected; });
}

void Worker::stop() {
  impl_->sock.shutdown();
  wait();
}

void Worker::crash() {
  impl_->crashed = true;
  impl_->sock.shutdown();
  wait();
}

// ---------------------------------------------------------------- backend

GridBackend::GridBackend(Manager& m, const std::vector<SuiteEntry>& suite) : m_(m), suite_(suite) {
  for (const auto& e : suite_) m_.add_scenario(e.key, e.task, e.scene);
}

std::vector<RolloutOutcome> GridBackend::run_batch(const std::vector<RolloutRequest>& reqs) {
  std::vector<RolloutOutcome> out(reqs.size());
  std::vector<GridJob> jobs;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    out[i].rollout_id = reqs[i].rollout_id;
    if (reqs[i].task < 0 || reqs[i].task >= static_cast<int>(suite_.size())) {
      out[i].status = RolloutStatus::Failed;
      out[i].error = "unknown task index";
      continue;
    }
    jobs.push_back({next_id_++, suite_[reqs[i].task].key, reqs[i].text});
    where.push_back(i);
  }
  std::vector<GridReport> reps;
  if (jobs.empty()) return out;
  try {
    reps = m_.run_batch(std::move(jobs));
  } catch (const GridError& e) {
    throw BackendUnavailable(e.what());
  }
  for (std::size_t k = 0; k < reps.size(); ++k) {
    RolloutOutcome& o = out[where[k]];
    const std::uint64_t id = o.rollout_id;
    o = reps[k].outcome;
    o.rollout_id = id;
  }
  return out;
}

// ---------------------------------------------------------------- latency bench

std::vector<BenchToggles> ablation_configs() {
  return {{"naive", false, false, false},
          {"+cache", true, false, false},
          {"+scheduler", true, true, false},
          {"+dispatcher", true, true, true}};
}

LatencyStats bench_latency(const BenchToggles& t, const BenchWorkload& w, const std::vector<SuiteEntry>& scenarios,
                           const std::vector<std::string>& texts) {
  if (scenarios.empty() || texts.size() != scenarios.size()) throw std::invalid_argument("one text per scenario");
  if (w.group < 1 || w.rollouts < 1 || w.workers < 1 || w.slots < 1) throw std::invalid_argument("bad workload");

  ManagerConfig mc;
  mc.listen.port = 0;
  mc.mode.path = t.cache ? ExecPath::Fast : ExecPath::Micro;
  mc.mode.lookahead = t.scheduler ? w.lookahead : 0;
  mc.mode.demand = w.group;
  mc.mode.dispatcher = t.dispatcher ? DispatchMode::WarmAware : DispatchMode::NaiveRoundRobin;
  mc.mode.cost = w.cost;
  mc.mode.cost.scene_load_ms = w.load_ms;
  mc.mode.cost.spin = true;
  Manager m(mc);
  m.start();
  for (const auto& e : scenarios) m.add_scenario(e.key, e.task, e.scene);

  std::vector<std::unique_ptr<Worker>> ws;
  for (int i = 0; i < w.workers; ++i) {
    WorkerConfig wc;
    wc.worker_id = "bench-" + std::to_string(i);
    wc.slots = w.slots;
    wc.manager.port = m.port();
    ws.push_back(std::make_unique<Worker>(wc));
    ws.back()->start();
  }
  if (!m.wait_for_workers(w.workers, std::chrono::seconds(10))) throw GridError("bench workers did not register");

  const int steps = (w.rollouts + w.group - 1) / w.group;
  const int pool = static_cast<int>(scenarios.size());
  auto scene_at = [&](int step) { return scenarios[static_cast<std::size_t>(step % pool)].key; };
  auto window = [&](int from) {
    std::vector<std::string> v;
    for (int i = 0; i < std::max(w.lookahead, 1); ++i) v.push_back(scene_at(from + i));
    return v;
  };

  std::vector<GridReport> all;
  std::uint64_t next = 1;
  const auto t0 = Clock::now();
  for (int step = 0, left = w.rollouts; step < steps; ++step) {
    // While the policy generates step `step`, the dataloader already knows its scenario.
    // Without a scheduler nothing runs in the gap, so it is skipped rather than waited out.
    m.set_upcoming(window(step));
    if (t.scheduler) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(w.gap_ms));
    m.set_upcoming(window(step + 1));
    std::vector<GridJob> jobs;
    const int n = std::min(w.group, left);
    left -= n;
    for (int i = 0; i < n; ++i) jobs.push_back({next++, scene_at(step), texts[static_cast<std::size_t>(step % pool)]});
    auto reps = m.run_batch(std::move(jobs));
    all.insert(all.end(), reps.begin(), reps.end());
  }

  LatencyStats st;
  st.config = t;
  st.wall_s = ms_since(t0) / 1000.0;
  GridStats gs = m.stats();
  st.warm_hit_rate = gs.dispatched > 0 ? static_cast<double>(gs.warm_hits) / static_cast<double>(gs.dispatched) : 0.0;
  std::vector<double> lat;
  for (const auto& r : all) {
    ++st.n;
    if (r.outcome.status != RolloutStatus::Ok) ++st.failed;
    lat.push_back(r.outcome.latency_ms);
    st.queue_ms += r.queue_ms;
    st.load_ms += r.load_ms;
    st.exec_ms += r.exec_ms;
  }
  if (st.n > 0) {
    std::sort(lat.begin(), lat.end());
    st.mean_ms = std::accumulate(lat.begin(), lat.end(), 0.0) / st.n;
    auto rank = [&](double q) { return lat[static_cast<std::size_t>(std::max(0.0, std::ceil(q * st.n) - 1))]; };
    st.p50_ms = rank(0.5);
    st.p95_ms = rank(0.95);
    st.queue_ms /= st.n;
    st.load_ms /= st.n;
    st.exec_ms /= st.n;
  }
  for (auto& x : ws) x->stop();
  m.stop();
  return st;
}

std::string bench_csv_header() {
  return "config,cache,scheduler,dispatcher,n,failed,mean_ms,p50_ms,p95_ms,queue_ms,load_ms,exec_ms,warm_hit_rate,wall_s";
}

std::string bench_csv_row(const LatencyStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%d,%d,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%.4f,%.2f", s.config.name.c_str(),
                s.config.cache, s.config.scheduler, s.config.dispatcher, s.n, s.failed, s.mean_ms, s.p50_ms, s.p95_ms,
                s.queue_ms, s.load_ms, s.exec_ms, s.warm_hit_rate, s.wall_s);
  return buf;
}

}  // namespace tg
