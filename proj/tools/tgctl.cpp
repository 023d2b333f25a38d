// Operator entry point: generation, serving, training, benchmarks, evaluation.
// Exit codes: 0 ok, 1 usage, 2 domain failure, 3 infrastructure failure.
#include <signal.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tg/factory.hpp"
#include "tg/grid.hpp"
#include "tg/grpo.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tg;

namespace {

constexpr const char* kManagerEnv = "TG_MANAGER";
constexpr const char* kDefaultManager = "127.0.0.1:7070";

struct Exit : std::runtime_error {
  int code;
  Exit(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};
Exit usage(const std::string& m) { return {1, m}; }
Exit domain(const std::string& m) { return {2, m}; }
Exit infra(const std::string& m) { return {3, m}; }

int verbosity = 1;  // 0 quiet, 1 info, 2 debug

template <class... A>
void info(const char* fmt, A... a) {
  if (verbosity >= 1) {
    std::fprintf(stderr, fmt, a...);
    std::fputc('\n', stderr);
  }
}

std::string manager_default() {
  const char* e = std::getenv(kManagerEnv);
  return e && *e ? e : kDefaultManager;
}

HostPort address(const std::string& s) {
  try {
    return parse_host_port(s);
  } catch (const std::invalid_argument& e) {
    throw usage(e.what());
  }
}

std::vector<SuiteEntry> suite_from(const fs::path& manifest) {
  if (!fs::is_regular_file(manifest)) throw usage("manifest not found: " + manifest.string());
  std::vector<SuiteEntry> s;
  try {
    s = load_manifest(manifest);
  } catch (const ManifestError& e) {
    throw domain(e.what());
  }
  if (s.empty()) throw usage("manifest has no tasks: " + manifest.string());
  return s;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw usage("cannot write " + p.string());
  out << text;
}

/// Blocks SIGINT/SIGTERM for threads started afterwards; `arm` runs a callback
/// on the first one from a waiter thread.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }
  void arm(std::function<void()> on_signal) {
    th_ = std::thread([this, f = std::move(on_signal)] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (!done_) {
        got_ = true;
        f();
      }
    });
  }
  ~SignalWaiter() {
    done_ = true;
    if (th_.joinable()) {
      if (!got_) ::kill(::getpid(), SIGTERM);  // releases the waiter; the signal stays blocked
      th_.join();
    }
  }
  bool signalled() const { return got_; }

 private:
  sigset_t set_;
  std::thread th_;
  std::atomic<bool> done_{false}, got_{false};
};

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string base;
  int n = 10;
  std::string out = "generated";
  int max_distractors = 3;
};

int cmd_gen(const GenArgs& a, std::uint64_t seed) {
  if (a.n <= 0) throw usage("-n must be positive");
  if (!fs::is_regular_file(a.base)) throw usage("base scene not found: " + a.base);
  SceneDoc base;
  try {
    base = read_scene_file(a.base);
  } catch (const std::exception& e) {
    throw domain(std::string("base scene: ") + e.what());
  }
  TemplateGenerator gen(builtin_catalog(), a.max_distractors);
  std::vector<TaskDef> tasks;
  try {
    tasks = generate_task_batch(base, a.n, seed, gen);
  } catch (const FactoryError& e) {
    throw domain(e.what());
  }
  const fs::path out(a.out);
  fs::create_directories(out / "tasks");
  fs::create_directories(out / "scenes");
  fs::create_directories(out / "verify");
  std::ofstream manifest(out / "manifest.tsv");
  json summary = {{"base", base.id}, {"seed", seed}, {"requested", a.n}, {"tasks", json::array()}};
  int failed = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskDef& t = tasks[i];
    json rep = {{"task", t.id}, {"family", t.family}};
    try {
      Instantiated inst = instantiate_scene(t, base, seed + i);
      VerifyReport v = verify_scene(inst.doc, t, inst.binding);
      rep["pass"] = v.pass;
      rep["violations"] = v.violations;
      if (!v.pass) {
        ++failed;
      } else {
        write_task_file(out / "tasks" / (t.id + ".task"), t);
        write_scene_file(out / "scenes" / (t.id + ".json"), inst.doc);
        manifest << "tasks/" << t.id << ".task\tscenes/" << t.id << ".json\t" << t.family << '\n';
      }
    } catch (const FactoryError& e) {
      ++failed;
      rep["pass"] = false;
      rep["error"] = std::string(factory_error_name(e.kind())) + ": " + e.what();
      std::fprintf(stderr, "%s: %s\n", t.id.c_str(), rep["error"].get<std::string>().c_str());
    }
    write_text(out / "verify" / (t.id + ".json"), rep.dump(2) + "\n");
    summary["tasks"].push_back(rep);
  }
  summary["verified"] = static_cast<int>(tasks.size()) - failed;
  write_text(out / "verify" / "summary.json", summary.dump(2) + "\n");
  info("generated %d of %d tasks into %s", static_cast<int>(tasks.size()) - failed, a.n, out.c_str());
  return failed ? 2 : 0;
}

// ---------------------------------------------------------------- serve

struct ManagerArgs {
  std::string listen;
  int heartbeat_ms = 1000;
  int timeout_ms = 60000;
  std::string manifest;
  int workers = 1;
  bool once = false;
};

int cmd_serve_manager(const ManagerArgs& a) {
  ManagerConfig mc;
  mc.listen = address(a.listen);
  mc.heartbeat = std::chrono::milliseconds(a.heartbeat_ms);
  mc.rollout_timeout = std::chrono::milliseconds(a.timeout_ms);
  std::vector<SuiteEntry> suite;
  if (!a.manifest.empty()) suite = suite_from(a.manifest);
  if (a.once && suite.empty()) throw usage("--once needs --manifest");
  SignalWaiter sig;
  Manager m(mc);
  try {
    m.start();
  } catch (const std::exception& e) {
    throw infra(e.what());
  }
  info("manager listening on %s:%d", mc.listen.host.c_str(), m.port());

  if (a.once) {
    // Smoke batch: every task's reference plan, once workers have joined.
    if (!m.wait_for_workers(a.workers, std::chrono::seconds(30))) throw infra("workers did not register in time");
    GridBackend backend(m, suite);
    std::vector<RolloutRequest> reqs;
    for (std::size_t j = 0; j < suite.size(); ++j) {
      auto plan = reference_plan(suite[j].task, suite[j].scene, suite[j].binding);
      reqs.push_back({j, static_cast<int>(j), plan ? serialize_actions({*plan}) : std::string()});
    }
    auto res = backend.run_batch(reqs);
    std::cout << "task,status,total,success,error\n";
    int bad = 0;
    for (std::size_t j = 0; j < res.size(); ++j) {
      bad += !res[j].success();
      std::cout << suite[j].key << ',' << (res[j].status == RolloutStatus::Ok ? "ok" : "failed") << ','
                << res[j].reward.total << ',' << res[j].success() << ',' << res[j].error << '\n';
    }
    m.stop();
    return bad ? 2 : 0;
  }

  std::atomic<bool> stop{false};
  sig.arm([&] { stop = true; });
  std::size_t seen = 0;
  while (!stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    auto reg = m.registry();
    if (reg.size() != seen) {
      seen = reg.size();
      info("%zu worker(s) registered", seen);
    }
  }
  m.stop();
  return 0;
}

struct WorkerArgs {
  std::string manager;
  std::string id;
  int slots = 2;
  int epoch = 0;
  int heartbeat_ms = 1000;
  Resources resources;
};

int cmd_serve_worker(const WorkerArgs& a) {
  if (a.slots < 1) throw usage("--slots must be at least 1");
  WorkerConfig wc;
  wc.worker_id = a.id.empty() ? "worker-" + std::to_string(::getpid()) : a.id;
  wc.slots = a.slots;
  wc.epoch = a.epoch;
  wc.resources = a.resources;
  wc.resources.cpu_slots = std::max(wc.resources.cpu_slots, a.slots);
  wc.heartbeat = std::chrono::milliseconds(a.heartbeat_ms);
  wc.manager = address(a.manager);
  SignalWaiter sig;
  Worker w(wc);
  try {
    w.start();
  } catch (const GridError& e) {
    throw infra(e.what());
  }
  info("worker %s registered with %s:%d", wc.worker_id.c_str(), wc.manager.host.c_str(), wc.manager.port);
  sig.arm([&] { w.stop(); });
  w.wait();
  if (sig.signalled()) return 0;
  throw infra("manager closed the connection");
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  TrainConfig cfg;
  RewardConfig reward;
  std::string optimizer = "adam";
  double stop_at = -1.0;
  std::string log_path;
  std::string checkpoint;
  std::string init;
  std::string backend = "local";
  std::string listen;
  int workers = 1;
  int local_workers = 0;
  int wait_ms = 30000;
};

int cmd_train(TrainArgs a, std::uint64_t seed) {
  auto suite = suite_from(a.manifest);
  a.cfg.seed = seed;
  if (a.optimizer == "sgd")
    a.cfg.optimizer = TrainConfig::Optimizer::Sgd;
  else if (a.optimizer != "adam")
    throw usage("--optimizer must be adam or sgd");
  if (a.stop_at >= 0) a.cfg.stop_at_success = a.stop_at;
  try {
    a.reward.validate();
  } catch (const std::invalid_argument& e) {
    throw usage(e.what());
  }
  std::optional<Policy> init;
  if (!a.init.empty()) {
    if (!fs::is_regular_file(a.init)) throw usage("checkpoint not found: " + a.init);
    try {
      init = load_policy(a.init);
    } catch (const std::exception& e) {
      throw domain(e.what());
    }
    a.cfg.shape = init->shape;
  }

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log_path.empty()) {
    if (fs::path(a.log_path).has_parent_path()) fs::create_directories(fs::path(a.log_path).parent_path());
    log_file.open(a.log_path);
    if (!log_file) throw usage("cannot write " + a.log_path);
    log = &log_file;
  }
  *log << log_csv_header() << '\n';
  auto on_row = [&](const LogRow& r) {
    *log << log_csv_row(r) << '\n';
    log->flush();
    if (verbosity >= 2 || (verbosity >= 1 && r.iteration % 25 == 0))
      std::fprintf(stderr, "iter %d  success %.3f  total %.3f\n", r.iteration, r.success_fraction, r.total);
  };

  TrainingLog out;
  if (a.backend == "local") {
    LocalBackend backend(suite, a.reward);
    out = train(a.cfg, suite, backend, init, on_row);
  } else if (a.backend == "grid") {
    ManagerConfig mc;
    mc.listen = address(a.listen);
    mc.mode.reward = a.reward;
    mc.mode.cost.spin = false;
    mc.mode.h_max = a.cfg.shape.h_max;
    Manager m(mc);
    try {
      m.start();
    } catch (const std::exception& e) {
      throw infra(e.what());
    }
    std::vector<std::unique_ptr<Worker>> local;
    for (int i = 0; i < a.local_workers; ++i) {
      WorkerConfig wc;
      wc.worker_id = "local-" + std::to_string(i);
      wc.manager.port = m.port();
      local.push_back(std::make_unique<Worker>(wc));
      local.back()->start();
    }
    const int need = std::max(a.workers, a.local_workers);
    info("manager on port %d, waiting for %d worker(s)", m.port(), need);
    if (!m.wait_for_workers(need, std::chrono::milliseconds(a.wait_ms))) throw infra("workers did not register in time");
    GridBackend backend(m, suite);
    try {
      out = train(a.cfg, suite, backend, init, on_row);
    } catch (const BackendUnavailable& e) {
      throw infra(e.what());
    }
    for (auto& w : local) w->stop();
    m.stop();
  } else {
    throw usage("--backend must be local or grid");
  }
  if (!a.checkpoint.empty()) {
    save_policy(a.checkpoint, out.policy);
    save_policy(fs::path(a.checkpoint).replace_extension(".ref.json"), out.reference);
  }
  const LogRow& last = out.rows.back();
  info("finished after %d iteration(s): sampled success %.3f, greedy %.3f", last.iteration, last.success_fraction,
       last.eval_success);
  return 0;
}

// ---------------------------------------------------------------- bench-latency

struct BenchArgs {
  BenchWorkload w;
  std::string configs = "all";
  std::string manifest;
  int pool = 6;
  std::string out;
};

int cmd_bench(BenchArgs a, std::uint64_t seed) {
  a.w.seed = seed;
  std::vector<BenchToggles> rows;
  for (const auto& c : ablation_configs()) {
    if (a.configs == "all") {
      rows.push_back(c);
    } else if (a.configs == "full-only") {
      if (c.cache && c.scheduler && c.dispatcher) rows.push_back(c);
    } else {
      std::stringstream ss(a.configs);
      for (std::string name; std::getline(ss, name, ',');)
        if (name == c.name) rows.push_back(c);
    }
  }
  if (rows.empty()) throw usage("--configs: use all, full-only or names among naive,+cache,+scheduler,+dispatcher");
  if (a.w.rollouts < 200) std::fprintf(stderr, "warning: %d rollouts is below the 200-rollout floor for stable means\n", a.w.rollouts);
  if (a.pool < 1) throw usage("--pool must be positive");

  auto suite = suite_from(a.manifest);
  std::vector<SuiteEntry> scenarios;
  std::vector<std::string> texts;
  for (const auto& e : suite) {
    if (static_cast<int>(scenarios.size()) == a.pool) break;
    auto plan = reference_plan(e.task, e.scene, e.binding);
    if (!plan) continue;
    scenarios.push_back(e);
    texts.push_back(serialize_actions({*plan}));
  }
  if (scenarios.empty()) throw domain("no task in the manifest has a reference plan");

  std::vector<LatencyStats> stats;
  std::string csv = bench_csv_header() + "\n";
  std::cout << bench_csv_header() << '\n';
  for (const auto& t : rows) {
    info("running %s ...", t.name.c_str());
    try {
      stats.push_back(bench_latency(t, a.w, scenarios, texts));
    } catch (const std::exception& e) {
      throw infra(std::string("bench backend: ") + e.what());
    }
    std::cout << bench_csv_row(stats.back()) << std::endl;
    csv += bench_csv_row(stats.back()) + "\n";
  }
  if (!a.out.empty()) write_text(a.out, csv);

  std::fprintf(stderr, "\n%-12s %10s %10s %9s\n", "config", "mean_s", "p95_s", "speedup");
  for (const auto& s : stats)
    std::fprintf(stderr, "%-12s %10.3f %10.3f %8.1fx\n", s.config.name.c_str(), s.mean_ms / 1000.0, s.p95_ms / 1000.0,
                 stats.front().mean_ms / std::max(s.mean_ms, 1e-9));
  int failed = 0;
  for (const auto& s : stats) failed += s.failed;
  return failed ? 2 : 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  bool uniform = false;
  std::string manifest;
  int repeats = 10;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::uint64_t seed) {
  if (a.uniform == !a.checkpoint.empty()) throw usage("give exactly one of --checkpoint or --uniform");
  if (a.repeats < 1) throw usage("--repeats must be positive");
  Policy p;
  if (!a.uniform) {
    if (!fs::is_regular_file(a.checkpoint)) throw usage("checkpoint not found: " + a.checkpoint);
    try {
      p = load_policy(a.checkpoint);
    } catch (const std::exception& e) {
      throw domain(e.what());
    }
  }
  auto suite = suite_from(a.manifest);
  LocalBackend backend(suite);
  std::string csv = sampled_eval_csv(evaluate_sampled(p, suite, backend, a.repeats, seed));
  std::cout << csv;
  if (!a.out.empty()) write_text(a.out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trainground: task generation, simulation grid and GRPO training"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with flag values; flags on the command line win");
  std::uint64_t seed = 1;
  std::string data_dir = "data";
  std::string level = "info";
  app.add_option("--seed", seed, "Seed for every stochastic component")->capture_default_str();
  app.add_option("--data-dir", data_dir, "Bundled data directory")->capture_default_str();
  app.add_option("--log-level", level, "quiet, info or debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}))
      ->capture_default_str();

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate verified task/scene pairs from a base scene");
  g->add_option("--base", gen.base, "Base scene JSON")->required();
  g->add_option("-n", gen.n, "Number of tasks")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();
  g->add_option("--max-distractors", gen.max_distractors)->capture_default_str();

  ManagerArgs mgr;
  mgr.listen = manager_default();
  auto* sm = app.add_subcommand("serve-manager", "Run the rollout manager");
  sm->add_option("--listen", mgr.listen, "host:port")->envname(kManagerEnv)->capture_default_str();
  sm->add_option("--heartbeat-ms", mgr.heartbeat_ms)->capture_default_str();
  sm->add_option("--timeout-ms", mgr.timeout_ms, "Per-rollout timeout")->capture_default_str();
  sm->add_option("--manifest", mgr.manifest, "Suite whose scenarios are served");
  sm->add_option("--workers", mgr.workers, "Workers to wait for with --once")->capture_default_str();
  sm->add_flag("--once", mgr.once, "Run every reference plan of --manifest once, print outcomes, exit");

  WorkerArgs wk;
  wk.manager = manager_default();
  auto* sw = app.add_subcommand("serve-worker", "Run a simulator worker");
  sw->add_option("--manager", wk.manager, "host:port")->envname(kManagerEnv)->capture_default_str();
  sw->add_option("--id", wk.id, "Worker id (default worker-<pid>)");
  sw->add_option("--slots", wk.slots)->capture_default_str();
  sw->add_option("--epoch", wk.epoch, "Bump after a restart to replace the old record")->capture_default_str();
  sw->add_option("--heartbeat-ms", wk.heartbeat_ms)->capture_default_str();
  sw->add_option("--mem-mb", wk.resources.mem_mb)->capture_default_str();
  sw->add_option("--accel-score", wk.resources.accel_score)->capture_default_str();

  TrainArgs tr;
  tr.listen = manager_default();
  auto* t = app.add_subcommand("train", "GRPO training over a task manifest");
  t->add_option("--manifest", tr.manifest)->required();
  t->add_option("--iterations", tr.cfg.iterations)->capture_default_str();
  t->add_option("--group", tr.cfg.group_size, "Rollouts per task per iteration")->capture_default_str();
  t->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  t->add_option("--lr", tr.cfg.lr)->capture_default_str();
  t->add_option("--clip", tr.cfg.clip_eps)->capture_default_str();
  t->add_option("--beta-kl", tr.cfg.beta_kl)->capture_default_str();
  t->add_option("--beta-rel", tr.reward.beta_rel, "Relevance coefficient; 0 ablates the tier")->capture_default_str();
  t->add_option("--optimizer", tr.optimizer, "adam or sgd")->capture_default_str();
  t->add_option("--slots", tr.cfg.shape.slots, "Object slots in the vocabulary")->capture_default_str();
  t->add_option("--h-max", tr.cfg.shape.h_max)->capture_default_str();
  t->add_option("--stop-at", tr.stop_at, "Stop once sampled success reaches this");
  t->add_option("--log", tr.log_path, "CSV log (default stdout)");
  t->add_option("--checkpoint", tr.checkpoint, "Final policy; the reference goes next to it as .ref.json");
  t->add_option("--init", tr.init, "Start from this checkpoint");
  t->add_option("--backend", tr.backend, "local or grid")->capture_default_str();
  t->add_option("--listen", tr.listen, "Manager address for --backend grid")->envname(kManagerEnv)->capture_default_str();
  t->add_option("--workers", tr.workers, "External workers to wait for")->capture_default_str();
  t->add_option("--local-workers", tr.local_workers, "In-process workers to start")->capture_default_str();
  t->add_option("--wait-ms", tr.wait_ms)->capture_default_str();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench-latency", "Four-row latency ablation on local workers");
  b->add_option("--rollouts", bench.w.rollouts)->capture_default_str();
  b->add_option("--group", bench.w.group, "Rollouts per step")->capture_default_str();
  b->add_option("--load-ms", bench.w.load_ms, "Synthetic scene load L")->capture_default_str();
  b->add_option("--gap-ms", bench.w.gap_ms, "Generation time between steps")->capture_default_str();
  b->add_option("--workers", bench.w.workers)->capture_default_str();
  b->add_option("--slots", bench.w.slots)->capture_default_str();
  b->add_option("--lookahead", bench.w.lookahead)->capture_default_str();
  b->add_option("--configs", bench.configs, "all, full-only, or a comma list of row names")->capture_default_str();
  b->add_option("--manifest", bench.manifest, "Scenario pool (default: the toy suite)");
  b->add_option("--pool", bench.pool, "Scenarios to cycle through")->capture_default_str();
  b->add_option("--out", bench.out, "Also write the CSV here");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Sampled success per task family");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_flag("--uniform", ev.uniform, "Evaluate the all-zero policy instead");
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--repeats", ev.repeats, "Samples per task")->capture_default_str();
  e->add_option("--out", ev.out, "Also write the CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int rc = app.exit(err);
    return rc == 0 ? 0 : 1;
  }
  verbosity = level == "quiet" ? 0 : level == "debug" ? 2 : 1;
  if (bench.manifest.empty()) bench.manifest = (fs::path(data_dir) / "suites" / "toy_pickplace" / "manifest.tsv").string();

  try {
    if (*g) return cmd_gen(gen, seed);
    if (*sm) return cmd_serve_manager(mgr);
    if (*sw) return cmd_serve_worker(wk);
    if (*t) return cmd_train(tr, seed);
    if (*b) return cmd_bench(bench, seed);
    if (*e) return cmd_eval(ev, seed);
  } catch (const Exit& x) {
    std::fprintf(stderr, "error: %s\n", x.what());
    return x.code;
  } catch (const std::exception& x) {
    std::fprintf(stderr, "error: %s\n", x.what());
    return 2;
  }
  return 1;
}
