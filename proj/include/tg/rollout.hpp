#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tg/reward.hpp"
#include "tg/task.hpp"
#include "tg/world.hpp"

namespace tg {

/// One (task, scene) pair of a training or evaluation suite.
struct SuiteEntry {
  std::string key;  // stable identifier, the task id
  std::string family;
  TaskDef task;
  SceneDoc scene;
  Binding binding;
  std::vector<std::string> symbols;  // task_symbols order, the policy's slots
};

struct ManifestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Lines of `task_path<TAB>scene_path<TAB>family`, paths relative to the
/// manifest; blank lines and `#` comments are skipped.
std::vector<SuiteEntry> load_manifest(const std::filesystem::path& manifest);
SuiteEntry make_entry(TaskDef task, SceneDoc scene, std::string family = {});

struct RolloutRequest {
  std::uint64_t rollout_id = 0;
  int task = 0;  // index into the suite
  std::string text;
};

enum class RolloutStatus { Ok, Failed };

struct RolloutOutcome {
  std::uint64_t rollout_id = 0;
  RolloutStatus status = RolloutStatus::Ok;
  RewardBreakdown reward;
  int n_sub = 0;
  std::string error;
  double latency_ms = 0.0;

  bool success() const { return status == RolloutStatus::Ok && n_sub > 0 && static_cast<int>(reward.satisfied.size()) == n_sub; }
};

struct BackendUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class RolloutBackend {
 public:
  virtual ~RolloutBackend() = default;
  /// One outcome per request, in request order.
  virtual std::vector<RolloutOutcome> run_batch(const std::vector<RolloutRequest>& reqs) = 0;
};

/// Runs every rollout in the calling thread against cached worlds.
class LocalBackend : public RolloutBackend {
 public:
  LocalBackend(const std::vector<SuiteEntry>& suite, RewardConfig reward = {}, ExecPath path = ExecPath::Fast,
               CostModel cost = quiet_cost());
  std::vector<RolloutOutcome> run_batch(const std::vector<RolloutRequest>& reqs) override;

  static CostModel quiet_cost() {
    CostModel c;
    c.spin = false;
    return c;
  }

 private:
  const std::vector<SuiteEntry>& suite_;
  RewardConfig reward_;
  ExecPath path_;
  CostModel cost_;
  std::vector<std::unique_ptr<World>> worlds_;
};

}  // namespace tg
