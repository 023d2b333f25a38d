#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tg/rollout.hpp"
#include "tg/wire.hpp"

namespace tg {

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------- registry

struct Resources {
  int cpu_slots = 1;
  int mem_mb = 1024;
  int accel_score = 0;
};

enum class SlotPhase { Cold, Loading, Warm, Busy };
std::string_view slot_phase_name(SlotPhase p);

struct SlotState {
  int slot_id = 0;
  SlotPhase phase = SlotPhase::Cold;
  std::string scene;  // loaded or loading scenario; empty when cold
  std::uint64_t rollout = 0;  // in-flight rollout while busy
  std::uint64_t last_used = 0;  // logical clock, for LRU eviction
};

struct WorkerInfo {
  std::string worker_id;
  int epoch = 0;
  Resources resources;
  std::vector<SlotState> slots;
  Clock::time_point last_heartbeat{};

  int busy() const;
  int load() const;  // non-cold slots
};

/// Workers in registration order.
using Registry = std::vector<WorkerInfo>;

struct Assignment {
  std::string worker_id;
  int slot_id = 0;
  std::string scene_id;
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct ScheduleDecision {
  std::vector<Assignment> assignments;
};

/// Greedy preloading for the window `upcoming[0, k)`. Each scene wants
/// `demand` slots. Cold slots go first, spread by least-loaded worker; then
/// idle warm slots whose scene is neither in the window nor `pinned`, LRU
/// first. `count_busy` counts busy slots already holding the scene, which is
/// right when finished slots are reset and kept warm.
ScheduleDecision schedule_preloads(const Registry& reg, const std::vector<std::string>& upcoming, int k, int demand,
                                   const std::set<std::string>& pinned = {}, bool count_busy = true);

struct SlotChoice {
  std::string worker_id;
  int slot_id = 0;
  bool needs_load = false;
};

/// Warm-aware choice for one rollout: an idle warm slot with the scene (worker
/// with fewest busy slots first), else an idle cold slot, else an idle warm
/// slot of an unpinned scene (LRU), else any idle warm slot (LRU).
std::optional<SlotChoice> choose_warm_slot(const Registry& reg, const std::string& scene,
                                           const std::set<std::string>& pinned = {});

/// Slot a naive dispatcher uses on a given worker: the matching warm slot if a
/// preload left one, else cold, else LRU warm. Nothing while the worker is busy.
std::optional<SlotChoice> choose_naive_slot(const WorkerInfo& w, const std::string& scene);

// ---------------------------------------------------------------- modes

enum class DispatchMode { WarmAware, NaiveRoundRobin };

struct GridMode {
  ExecPath path = ExecPath::Fast;  // the outcome cache toggle: Fast = on
  int lookahead = 2;               // 0 disables the scheduler
  int demand = 8;  // warm slots wanted per upcoming scene
  DispatchMode dispatcher = DispatchMode::WarmAware;
  CostModel cost;
  RewardConfig reward;
  int h_max = kDefaultHMax;

  /// Finished slots reset from their snapshot and stay warm only with the
  /// warm-aware dispatcher; the naive one tears the scene down.
  bool reuse() const { return dispatcher == DispatchMode::WarmAware; }
};

struct ManagerConfig {
  HostPort listen;
  std::chrono::milliseconds heartbeat{1000};
  int missed_heartbeats = 3;
  std::chrono::milliseconds rollout_timeout{60000};
  int max_attempts = 2;  // a rollout lost with its worker is retried once
  GridMode mode;
};

struct GridJob {
  std::uint64_t rollout_id = 0;
  std::string scenario;
  std::string text;
};

struct GridReport {
  RolloutOutcome outcome;
  int executed_len = 0;
  double queue_ms = 0.0, load_ms = 0.0, exec_ms = 0.0;
  std::string worker_id;
  int slot_id = -1;
  int attempts = 0;
};

struct GridStats {
  long dispatched = 0;
  long warm_hits = 0;  // dispatches onto a slot already warm with the scene
  long preloads = 0;
  long requeued = 0;
  long lost_workers = 0;
  long late_results = 0;  // results for rollouts already reported
};

struct GridError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Coordinates self-registering workers. One event-loop thread owns the
/// registry; public methods post commands to it.
class Manager {
 public:
  explicit Manager(ManagerConfig cfg = {});
  ~Manager();
  Manager(const Manager&) = delete;
  Manager& operator=(const Manager&) = delete;

  void start();
  void stop();
  int port() const { return port_; }

  /// Scenario payloads are shipped to workers on first use.
  void add_scenario(const std::string& id, const TaskDef& task, const SceneDoc& scene);
  void set_mode(const GridMode& mode);
  /// Dataloader lookahead: scenarios of the next steps, in order.
  void set_upcoming(std::vector<std::string> scenarios);

  /// Streams one terminal report per job, from the event-loop thread.
  using ReportFn = std::function<void(const GridReport&)>;
  void submit(std::vector<GridJob> jobs, ReportFn on_report);
  /// Blocks until every job has its terminal report; order follows `jobs`.
  std::vector<GridReport> run_batch(std::vector<GridJob> jobs);

  bool wait_for_workers(int n, std::chrono::milliseconds timeout);
  bool wait_until_settled(std::chrono::milliseconds timeout);  // no preloads in flight
  Registry registry() const;
  GridStats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

struct WorkerConfig {
  std::string worker_id;
  int epoch = 0;
  int slots = 2;
  Resources resources;
  HostPort manager;
  std::chrono::milliseconds heartbeat{1000};
  std::chrono::milliseconds connect_timeout{5000};
};

/// A simulator host: one execution thread per slot.
class Worker {
 public:
  explicit Worker(WorkerConfig cfg);
  ~Worker();
  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  /// Connects and registers; throws GridError when refused.
  void start();
  /// Blocks until the connection ends.
  void wait();
  void stop();
  /// Drops the connection abruptly, as a crashed host would.
  void crash();
  bool running() const { return running_; }
  const std::string& id() const { return cfg_.worker_id; }

 private:
  struct Impl;
  WorkerConfig cfg_;
  std::unique_ptr<Impl> impl_;
  std::atomic<bool> running_{false};
};

/// Rollout backend over a manager; suite entries become scenarios by key.
class GridBackend : public RolloutBackend {
 public:
  GridBackend(Manager& m, const std::vector<SuiteEntry>& suite);
  std::vector<RolloutOutcome> run_batch(const std::vector<RolloutRequest>& reqs) override;

 private:
  Manager& m_;
  const std::vector<SuiteEntry>& suite_;
  std::uint64_t next_id_ = 1;  // trainer and eval ids repeat across batches
};

// ---------------------------------------------------------------- latency bench

struct BenchToggles {
  std::string name;
  bool cache = false;
  bool scheduler = false;
  bool dispatcher = false;
};

/// The four rows of the ablation, each adding one optimization.
std::vector<BenchToggles> ablation_configs();

struct BenchWorkload {
  int rollouts = 200;
  int group = 8;       // rollouts per step, all on one scenario
  double load_ms = 2000.0;             // synthetic scene-load cost L
  double gap_ms = 2100.0;              // policy generation time between steps
  int workers = 2;
  int slots = 2;
  int lookahead = 2;
  CostModel cost;                      // micro-step cost
  std::uint64_t seed = 1;
};

struct LatencyStats {
  BenchToggles config;
  int n = 0;
  int failed = 0;
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
  double queue_ms = 0, load_ms = 0, exec_ms = 0;  // means
  double warm_hit_rate = 0.0;
  double wall_s = 0.0;
};

/// Runs the workload on a fresh local manager with in-process workers.
/// `scenarios` cycle one per step; `texts[i]` is the action text for scenario i.
LatencyStats bench_latency(const BenchToggles& t, const BenchWorkload& w, const std::vector<SuiteEntry>& scenarios,
                           const std::vector<std::string>& texts);

std::string bench_csv_header();
std::string bench_csv_row(const LatencyStats& s);

}  // namespace tg
