#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <poll.h>
#include <sys/socket.h>

#include "fixtures.hpp"
#include "tg/grid.hpp"

using namespace tg;
using namespace tgtest;
using namespace std::chrono_literals;
using json = nlohmann::json;

namespace {

WorkerInfo worker(std::string id, int slots) {
  WorkerInfo w;
  w.worker_id = std::move(id);
  for (int i = 0; i < slots; ++i) w.slots.push_back({i, SlotPhase::Cold, {}, 0, 0});
  return w;
}

SlotState& slot(Registry& r, int w, int s) { return r[static_cast<std::size_t>(w)].slots[static_cast<std::size_t>(s)]; }

void warm(SlotState& s, std::string scene, std::uint64_t used) {
  s.phase = SlotPhase::Warm;
  s.scene = std::move(scene);
  s.last_used = used;
}

std::string heat_text() { return serialize_actions({heat_chicken_plan()}); }

ManagerConfig quiet_manager() {
  ManagerConfig c;
  c.heartbeat = 100ms;
  c.mode.cost = no_spin();
  c.mode.lookahead = 0;
  return c;
}

json read_json(int fd, FrameDecoder& dec, int timeout_ms = 2000) {
  pollfd p{fd, POLLIN, 0};
  if (dec.buffered() == 0 && ::poll(&p, 1, timeout_ms) <= 0) return nullptr;
  auto f = recv_frame(fd, dec);
  return f ? json::parse(*f) : json(nullptr);
}

json register_msg(const std::string& id, int slots = 2) {
  return {{"type", "REGISTER"}, {"worker_id", id}, {"epoch", 0}, {"slots", slots}};
}

// A manager plus in-process workers on an ephemeral port.
struct Grid {
  Manager m;
  std::vector<std::unique_ptr<Worker>> ws;

  explicit Grid(ManagerConfig c, int workers = 2, int slots = 2) : m(std::move(c)) {
    m.start();
    m.add_scenario("heat", parse_task(kHeatChickenTask), heat_chicken_kitchen());
    for (int i = 0; i < workers; ++i) add("w" + std::to_string(i), slots);
    EXPECT_TRUE(m.wait_for_workers(workers, 5s));
  }
  Worker& add(const std::string& id, int slots = 2, int epoch = 0) {
    WorkerConfig wc;
    wc.worker_id = id;
    wc.epoch = epoch;
    wc.slots = slots;
    wc.heartbeat = 50ms;
    wc.manager.port = m.port();
    ws.push_back(std::make_unique<Worker>(wc));
    ws.back()->start();
    return *ws.back();
  }
  std::vector<GridJob> jobs(int n, std::uint64_t first = 1) {
    std::vector<GridJob> v;
    for (int i = 0; i < n; ++i) v.push_back({first + static_cast<std::uint64_t>(i), "heat", heat_text()});
    return v;
  }
};

}  // namespace

// ---------------------------------------------------------------- framing

TEST(Wire, FramesSurviveArbitrarySplits) {
  std::string stream = encode_frame("{\"a\":1}") + encode_frame("") + encode_frame(std::string(70000, 'x'));
  FrameDecoder d;
  std::vector<std::string> got;
  for (std::size_t i = 0; i < stream.size(); i += 7) {
    d.feed(std::string_view(stream).substr(i, 7));
    while (auto f = d.next()) got.push_back(*f);
  }
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], "{\"a\":1}");
  EXPECT_EQ(got[1], "");
  EXPECT_EQ(got[2].size(), 70000u);
  EXPECT_EQ(d.buffered(), 0u);
}

TEST(Wire, HeaderIsBigEndianAndOversizeIsRejected) {
  std::string f = encode_frame("abc");
  EXPECT_EQ(f.substr(0, 4), std::string("\0\0\0\3", 4));
  FrameDecoder d;
  d.feed(std::string("\xff\xff\xff\xff", 4));
  EXPECT_THROW(d.next(), ProtocolError);
}

TEST(Wire, HostPortParsing) {
  auto hp = parse_host_port("10.0.0.2:7000");
  EXPECT_EQ(hp.host, "10.0.0.2");
  EXPECT_EQ(hp.port, 7000);
  EXPECT_EQ(parse_host_port(":9").host, "127.0.0.1");
  EXPECT_THROW(parse_host_port("nohost"), std::invalid_argument);
  EXPECT_THROW(parse_host_port("h:70000"), std::invalid_argument);
  EXPECT_THROW(parse_host_port("h:12x"), std::invalid_argument);
}

// ---------------------------------------------------------------- scheduler

TEST(Scheduler, TwoColdWorkersTwoScenes) {
  Registry r{worker("w0", 2), worker("w1", 2)};
  auto d = schedule_preloads(r, {"s1", "s2"}, 2, 2);
  std::vector<Assignment> want{{"w0", 0, "s1"}, {"w1", 0, "s1"}, {"w0", 1, "s2"}, {"w1", 1, "s2"}};
  EXPECT_EQ(d.assignments, want);
}

TEST(Scheduler, NothingToDo) {
  Registry r{worker("w0", 2), worker("w1", 2)};
  EXPECT_TRUE(schedule_preloads(r, {"s1"}, 0, 2).assignments.empty());
  EXPECT_TRUE(schedule_preloads(r, {}, 2, 2).assignments.empty());
  warm(slot(r, 0, 0), "s1", 1);
  warm(slot(r, 0, 1), "s2", 2);
  warm(slot(r, 1, 0), "s1", 3);
  warm(slot(r, 1, 1), "s2", 4);
  EXPECT_TRUE(schedule_preloads(r, {"s1", "s2"}, 2, 2).assignments.empty());
}

TEST(Scheduler, EvictsLeastRecentlyUsedOutsideWindow) {
  Registry r{worker("w0", 2)};
  warm(slot(r, 0, 0), "old_a", 5);
  warm(slot(r, 0, 1), "old_b", 2);
  auto d = schedule_preloads(r, {"s1"}, 1, 1);
  ASSERT_EQ(d.assignments.size(), 1u);
  EXPECT_EQ(d.assignments[0], (Assignment{"w0", 1, "s1"}));
  // Pinned scenes and window scenes are never evicted.
  EXPECT_TRUE(schedule_preloads(r, {"s1"}, 1, 1, {"old_a", "old_b"}).assignments.empty());
  EXPECT_TRUE(schedule_preloads(r, {"old_a", "s1"}, 2, 2, {"old_b"}).assignments.empty());
}

TEST(Scheduler, BusySlotsCountOnlyWhenKeptWarm) {
  Registry r{worker("w0", 2)};
  slot(r, 0, 0).phase = SlotPhase::Busy;
  slot(r, 0, 0).scene = "s1";
  EXPECT_TRUE(schedule_preloads(r, {"s1"}, 1, 1, {}, true).assignments.empty());
  auto d = schedule_preloads(r, {"s1"}, 1, 1, {}, false);
  ASSERT_EQ(d.assignments.size(), 1u);
  EXPECT_EQ(d.assignments[0].slot_id, 1);
}

TEST(Scheduler, SpreadsByLeastLoadedWorker) {
  Registry r{worker("w0", 3), worker("w1", 3)};
  warm(slot(r, 0, 0), "x", 1);
  warm(slot(r, 0, 1), "y", 1);
  auto d = schedule_preloads(r, {"s1"}, 1, 3, {"x", "y"});
  std::vector<Assignment> want{{"w1", 0, "s1"}, {"w1", 1, "s1"}, {"w0", 2, "s1"}};
  EXPECT_EQ(d.assignments, want);
}

// ---------------------------------------------------------------- slot choice

TEST(Dispatch, WarmAwarePreference) {
  Registry r{worker("w0", 2), worker("w1", 2)};
  warm(slot(r, 0, 0), "s", 1);
  slot(r, 0, 1).phase = SlotPhase::Busy;
  warm(slot(r, 1, 1), "s", 2);
  auto c = choose_warm_slot(r, "s");
  ASSERT_TRUE(c);
  // Both workers have a warm match; w1 has fewer busy slots.
  EXPECT_EQ(c->worker_id, "w1");
  EXPECT_EQ(c->slot_id, 1);
  EXPECT_FALSE(c->needs_load);

  c = choose_warm_slot(r, "t");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->worker_id, "w1");
  EXPECT_EQ(c->slot_id, 0);
  EXPECT_TRUE(c->needs_load);

  slot(r, 1, 0).phase = SlotPhase::Loading;
  c = choose_warm_slot(r, "t", {"s"});
  ASSERT_TRUE(c);  // every remaining idle slot is pinned, so the oldest one goes
  EXPECT_EQ(c->worker_id, "w0");
  EXPECT_TRUE(c->needs_load);

  for (auto& w : r)
    for (auto& s : w.slots) s.phase = SlotPhase::Busy;
  EXPECT_FALSE(choose_warm_slot(r, "s"));
}

TEST(Dispatch, NaiveSlotWaitsForAnIdleWorker) {
  WorkerInfo w = worker("w0", 2);
  warm(w.slots[1], "s", 1);
  auto c = choose_naive_slot(w, "s");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->slot_id, 1);
  EXPECT_FALSE(c->needs_load);
  c = choose_naive_slot(w, "t");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->slot_id, 0);
  EXPECT_TRUE(c->needs_load);
  w.slots[0].phase = SlotPhase::Busy;
  EXPECT_FALSE(choose_naive_slot(w, "s"));
}

// ---------------------------------------------------------------- live grid

TEST(Grid, HeatChickenRolloutScoresThroughTheWire) {
  Grid g(quiet_manager(), 1, 1);
  auto reps = g.m.run_batch(g.jobs(1, 42));
  ASSERT_EQ(reps.size(), 1u);
  const auto& o = reps[0].outcome;
  EXPECT_EQ(o.rollout_id, 42u);
  ASSERT_EQ(o.status, RolloutStatus::Ok) << o.error;
  EXPECT_DOUBLE_EQ(o.reward.total, 30.9);
  EXPECT_EQ(o.n_sub, 2);
  EXPECT_TRUE(o.success());
  EXPECT_EQ(reps[0].executed_len, 9);
  EXPECT_EQ(reps[0].worker_id, "w0");
}

TEST(Grid, RegistrationRecordsSlotsAndRejectsDuplicates) {
  Grid g(quiet_manager(), 1, 3);
  Registry r = g.m.registry();
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].worker_id, "w0");
  ASSERT_EQ(r[0].slots.size(), 3u);
  for (const auto& s : r[0].slots) EXPECT_EQ(s.phase, SlotPhase::Cold);

  WorkerConfig dup;
  dup.worker_id = "w0";
  dup.manager.port = g.m.port();
  Worker twin(dup);
  EXPECT_THROW(twin.start(), GridError);
  EXPECT_EQ(g.m.registry().size(), 1u);
  EXPECT_TRUE(g.ws[0]->running());

  // A restarted host with a newer epoch supersedes the old record.
  Worker& again = g.add("w0", 1, 1);
  g.ws[0]->wait();
  EXPECT_FALSE(g.ws[0]->running());
  EXPECT_TRUE(again.running());
  r = g.m.registry();
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].epoch, 1);
  EXPECT_EQ(r[0].slots.size(), 1u);
}

TEST(Grid, MalformedRegisterIsRefused) {
  Grid g(quiet_manager(), 0);
  for (std::string bad : {std::string("not json"), std::string(R"({"type":"REGISTER"})"),
                          std::string(R"({"type":"REGISTER","worker_id":"x","slots":0})"),
                          std::string(R"({"type":"HEARTBEAT","worker_id":"x"})")}) {
    Socket s = connect_tcp({"127.0.0.1", g.m.port()}, 2s);
    ASSERT_TRUE(send_frame(s.fd(), bad));
    FrameDecoder dec;
    json reply = read_json(s.fd(), dec);
    ASSERT_TRUE(reply.is_object()) << bad;
    EXPECT_EQ(reply["type"], "ERROR") << bad;
    EXPECT_TRUE(read_json(s.fd(), dec).is_null()) << "connection stays open after " << bad;
  }
  EXPECT_TRUE(g.m.registry().empty());
}

TEST(Grid, EightRolloutsOnFourWarmSlotsRunInTwoWaves) {
  ManagerConfig c = quiet_manager();
  c.mode.cost.spin = true;
  c.mode.cost.scene_load_ms = 50;
  c.mode.lookahead = 1;
  c.mode.demand = 4;
  Grid g(c);
  g.m.set_upcoming({"heat"});
  std::this_thread::sleep_for(50ms);
  ASSERT_TRUE(g.m.wait_until_settled(5s));
  for (const auto& w : g.m.registry())
    for (const auto& s : w.slots) {
      EXPECT_EQ(s.phase, SlotPhase::Warm);
      EXPECT_EQ(s.scene, "heat");
    }
  auto reps = g.m.run_batch(g.jobs(8));
  std::map<std::pair<std::string, int>, int> uses;
  for (const auto& r : reps) {
    ASSERT_EQ(r.outcome.status, RolloutStatus::Ok) << r.outcome.error;
    EXPECT_EQ(r.load_ms, 0.0);
    ++uses[{r.worker_id, r.slot_id}];
  }
  EXPECT_EQ(uses.size(), 4u);
  for (const auto& [k, n] : uses) EXPECT_EQ(n, 2);
  GridStats st = g.m.stats();
  EXPECT_EQ(st.dispatched, 8);
  EXPECT_EQ(st.warm_hits, 8);
  EXPECT_EQ(st.preloads, 4);
}

TEST(Grid, NaiveDispatchLoadsEveryRolloutAndTearsDown) {
  ManagerConfig c = quiet_manager();
  c.mode.dispatcher = DispatchMode::NaiveRoundRobin;
  c.mode.cost.spin = true;
  c.mode.cost.scene_load_ms = 30;
  Grid g(c);
  auto reps = g.m.run_batch(g.jobs(4));
  std::map<std::string, int> per_worker;
  for (const auto& r : reps) {
    ASSERT_EQ(r.outcome.status, RolloutStatus::Ok) << r.outcome.error;
    EXPECT_GE(r.load_ms, 30.0);
    ++per_worker[r.worker_id];
  }
  EXPECT_EQ(per_worker["w0"], 2);
  EXPECT_EQ(per_worker["w1"], 2);
  EXPECT_EQ(g.m.stats().warm_hits, 0);
  for (const auto& w : g.m.registry())
    for (const auto& s : w.slots) EXPECT_EQ(s.phase, SlotPhase::Cold);
}

TEST(Grid, LostWorkerRolloutsAreRequeuedOnce) {
  ManagerConfig c = quiet_manager();
  c.mode.cost.spin = true;
  c.mode.cost.scene_load_ms = 400;
  Grid g(c);
  std::vector<GridReport> reps;
  std::thread run([&] { reps = g.m.run_batch(g.jobs(4)); });
  std::this_thread::sleep_for(100ms);
  g.ws[0]->crash();
  run.join();
  ASSERT_EQ(reps.size(), 4u);
  int retried = 0;
  for (const auto& r : reps) {
    ASSERT_EQ(r.outcome.status, RolloutStatus::Ok) << r.outcome.error;
    EXPECT_EQ(r.worker_id, "w1");
    EXPECT_DOUBLE_EQ(r.outcome.reward.total, 30.9);
    retried += r.attempts == 2;
  }
  EXPECT_EQ(retried, 2);
  GridStats st = g.m.stats();
  EXPECT_EQ(st.lost_workers, 1);
  EXPECT_EQ(st.requeued, 2);
  EXPECT_EQ(g.m.registry().size(), 1u);
}

TEST(Grid, SecondLossReportsFailure) {
  ManagerConfig c = quiet_manager();
  c.mode.cost.spin = true;
  c.mode.cost.scene_load_ms = 400;
  Grid g(c, 1, 1);
  std::vector<GridReport> reps;
  std::thread run([&] { reps = g.m.run_batch(g.jobs(1)); });
  std::this_thread::sleep_for(100ms);
  g.ws[0]->crash();
  g.add("w1", 1);
  std::this_thread::sleep_for(100ms);
  g.ws[1]->crash();
  run.join();
  ASSERT_EQ(reps.size(), 1u);
  EXPECT_EQ(reps[0].outcome.status, RolloutStatus::Failed);
  EXPECT_NE(reps[0].outcome.error.find("lost"), std::string::npos);
  EXPECT_EQ(reps[0].attempts, 2);
}

TEST(Grid, SilentWorkerIsDroppedAfterMissedHeartbeats) {
  Grid g(quiet_manager(), 0);
  Socket s = connect_tcp({"127.0.0.1", g.m.port()}, 2s);
  ASSERT_TRUE(send_frame(s.fd(), register_msg("mute").dump()));
  FrameDecoder dec;
  EXPECT_EQ(read_json(s.fd(), dec)["type"], "REGISTER_ACK");
  EXPECT_EQ(g.m.registry().size(), 1u);
  std::this_thread::sleep_for(600ms);
  EXPECT_TRUE(g.m.registry().empty());
  EXPECT_EQ(g.m.stats().lost_workers, 1);
}

TEST(Grid, TimedOutRolloutFailsAndLateResultIsDropped) {
  ManagerConfig c = quiet_manager();
  c.rollout_timeout = 100ms;
  c.mode.cost.spin = true;
  c.mode.cost.scene_load_ms = 400;
  Grid g(c, 1, 1);
  auto reps = g.m.run_batch(g.jobs(1));
  ASSERT_EQ(reps.size(), 1u);
  EXPECT_EQ(reps[0].outcome.status, RolloutStatus::Failed);
  EXPECT_NE(reps[0].outcome.error.find("timed out"), std::string::npos);
  for (int i = 0; i < 100 && g.m.stats().late_results == 0; ++i) std::this_thread::sleep_for(20ms);
  EXPECT_EQ(g.m.stats().late_results, 1);
  // The late result left the slot warm, so the next rollout skips the load and beats the limit.
  auto again = g.m.run_batch(g.jobs(1, 2));
  EXPECT_EQ(again[0].outcome.status, RolloutStatus::Ok) << again[0].outcome.error;
  EXPECT_EQ(again[0].load_ms, 0.0);
}

TEST(Grid, BadJobsFailFast) {
  Grid g(quiet_manager(), 1, 1);
  auto reps = g.m.run_batch({{7, "nowhere", "move(object_index=0)"}});
  EXPECT_EQ(reps[0].outcome.status, RolloutStatus::Failed);
  EXPECT_NE(reps[0].outcome.error.find("unknown scenario"), std::string::npos);
  std::vector<GridJob> twice{{1, "heat", "x"}, {1, "heat", "y"}};
  EXPECT_THROW(g.m.run_batch(twice), GridError);
  auto junk = g.m.run_batch({{9, "heat", "fly(object_index=1)"}});
  ASSERT_EQ(junk[0].outcome.status, RolloutStatus::Ok);
  EXPECT_EQ(junk[0].outcome.reward.total, -1.0);
}

TEST(Grid, WorkerRefusesColdExecuteWithoutLoadPermission) {
  int port = 0;
  Socket ls = listen_tcp({"127.0.0.1", 0}, &port);
  WorkerConfig wc;
  wc.worker_id = "probe";
  wc.slots = 1;
  wc.manager.port = port;
  Worker w(wc);
  std::thread t([&] { w.start(); });
  int fd = ::accept(ls.fd(), nullptr, nullptr);
  ASSERT_GE(fd, 0);
  Socket conn(fd);
  FrameDecoder dec;
  json reg = read_json(fd, dec);
  EXPECT_EQ(reg["type"], "REGISTER");
  EXPECT_EQ(reg["slots"], 1);
  send_frame(fd, json{{"type", "REGISTER_ACK"}, {"worker_id", "probe"}}.dump());
  t.join();

  json exec = {{"type", "EXECUTE"}, {"rollout_id", 5}, {"slot", 0}, {"scenario", "heat"}, {"text", heat_text()},
               {"allow_load", false}, {"payload", {{"task", kHeatChickenTask}, {"scene", scene_to_text(heat_chicken_kitchen())}}},
               {"cost", {{"spin", false}}}};
  send_frame(fd, exec.dump());
  json m;
  do m = read_json(fd, dec);
  while (m.is_object() && m["type"] == "HEARTBEAT");
  ASSERT_TRUE(m.is_object());
  EXPECT_EQ(m["type"], "REQUEUE");
  EXPECT_EQ(m["reason"], "SlotNotWarm");
  EXPECT_EQ(m["slot_phase"], "cold");

  exec["allow_load"] = true;
  send_frame(fd, exec.dump());
  do m = read_json(fd, dec);
  while (m.is_object() && m["type"] == "HEARTBEAT");
  ASSERT_TRUE(m.is_object());
  EXPECT_EQ(m["type"], "RESULT");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_DOUBLE_EQ(m["reward"]["total"].get<double>(), 30.9);
  EXPECT_EQ(m["slot_phase"], "warm");
  conn.close();
  w.wait();
}

TEST(Grid, BackendMatchesLocalExecution) {
  auto suite = load_manifest(TG_DATA_DIR "/suites/toy_pickplace/manifest.tsv");
  Grid g(quiet_manager());
  GridBackend grid(g.m, suite);
  LocalBackend local(suite);
  std::vector<RolloutRequest> reqs;
  const char* texts[] = {"move(object_index=0)", "nonsense", "move(object_index=1)\npick_up(object_index=1)", ""};
  for (int i = 0; i < 12; ++i) reqs.push_back({static_cast<std::uint64_t>(i % 3), i % static_cast<int>(suite.size()), texts[i % 4]});
  reqs.push_back({99, 1000, "move(object_index=0)"});
  auto a = grid.run_batch(reqs);
  auto b = local.run_batch(reqs);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rollout_id, b[i].rollout_id);
    EXPECT_EQ(a[i].status, b[i].status) << a[i].error;
    EXPECT_DOUBLE_EQ(a[i].reward.total, b[i].reward.total);
    EXPECT_EQ(a[i].reward.satisfied, b[i].reward.satisfied);
    EXPECT_EQ(a[i].n_sub, b[i].n_sub);
  }
}
