#include "tg/rollout.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace tg {

SuiteEntry make_entry(TaskDef task, SceneDoc scene, std::string family) {
  SuiteEntry e;
  e.key = task.id;
  e.family = family.empty() ? task.family : std::move(family);
  e.binding = bind_by_name(task, load_scene(scene));
  e.symbols = task_symbols(task);
  e.task = std::move(task);
  e.scene = std::move(scene);
  return e;
}

std::vector<SuiteEntry> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ManifestError("cannot read manifest " + manifest.string());
  const auto dir = manifest.parent_path();
  std::vector<SuiteEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (cols.size() < 2) throw ManifestError(manifest.string() + ":" + std::to_string(lineno) + ": expected task<TAB>scene[<TAB>family]");
    try {
      out.push_back(make_entry(read_task_file(dir / cols[0]), read_scene_file(dir / cols[1]),
                               cols.size() > 2 ? cols[2] : std::string()));
    } catch (const std::exception& e) {
      throw ManifestError(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

LocalBackend::LocalBackend(const std::vector<SuiteEntry>& suite, RewardConfig reward, ExecPath path, CostModel cost)
    : suite_(suite), reward_(reward), path_(path), cost_(cost), worlds_(suite.size()) {
  reward_.validate();
}

std::vector<RolloutOutcome> LocalBackend::run_batch(const std::vector<RolloutRequest>& reqs) {
  std::vector<RolloutOutcome> out;
  out.reserve(reqs.size());
  for (const auto& r : reqs) {
    RolloutOutcome o;
    o.rollout_id = r.rollout_id;
    auto t0 = std::chrono::steady_clock::now();
    if (r.task < 0 || r.task >= static_cast<int>(suite_.size())) {
      o.status = RolloutStatus::Failed;
      o.error = "unknown task index";
    } else {
      const SuiteEntry& e = suite_[r.task];
      auto& w = worlds_[r.task];
      if (!w) w = std::make_unique<World>(e.scene);
      w->reset();
      EpisodeResult ep = run_episode(*w, r.text, e.task, e.binding, path_, cost_, reward_);
      o.reward = ep.reward;
      o.n_sub = static_cast<int>(e.task.n_sub());
    }
    o.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace tg
