#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tg/rollout.hpp"

namespace tg {

// ---------------------------------------------------------------- tokens

/// Flattened action vocabulary over M object slots. Slots index the task's
/// symbol list (task_symbols order).
class Vocabulary {
 public:
  static constexpr int kHeadings = 4;      // turn / move_forward directions
  static constexpr int kRoomSlots = 4;
  static constexpr double kStride = 0.5;   // move_forward distance

  explicit Vocabulary(int slots = 12);

  int slots() const { return m_; }
  int size() const { return size_; }
  static constexpr int size_for(int m) { return 8 * m + 3 * m * m + 13; }
  int stop() const { return size_ - 1; }

  struct Token {
    Skill skill = Skill::Move;
    int a = -1;  // object slot, heading or room slot
    int b = -1;  // source slot
    Relation rel = Relation::OnTop;
    bool stop = false;
  };
  Token decode(int token) const;
  int encode(const Token& t) const;  // throws std::out_of_range

 private:
  int m_;
  int size_;
  std::array<int, kNumSkills> offset_{};
};

/// Static affordance mask of one task: slots that exist and whose objects have
/// the capability a skill needs. STOP is always allowed.
std::vector<std::uint8_t> action_mask(const Vocabulary& v, const SuiteEntry& e);

/// Action for a token, or nothing for STOP. Throws std::out_of_range for a
/// slot past the task's symbols.
std::optional<Action> token_action(const Vocabulary& v, int token, const SuiteEntry& e);

// ---------------------------------------------------------------- policy

struct PolicyShape {
  int slots = 12;
  int h_max = kDefaultHMax;
  int goal_buckets = 64;
};

/// Context of one decoding step. The held flag and last skill are read off
/// the token prefix, so logprobs never need the simulator.
struct Context {
  int bucket = 0;
  int step = 0;
  bool held = false;
  int last = 0;  // 0 before the first token, else 1 + token
};

std::uint32_t context_key(const PolicyShape& s, const Context& c);
int goal_bucket(const TaskDef& task, int buckets);

/// Sparse logit table theta[context][token]; absent rows read as zeros.
/// Context space: goal_buckets x h_max x 2 x (V + 1), about 2.2M keys with
/// defaults; only visited rows are stored.
class LogitTable {
 public:
  explicit LogitTable(int vocab = 0) : vocab_(vocab) {}
  int vocab() const { return vocab_; }
  const std::vector<double>& row(std::uint32_t ctx) const;
  std::vector<double>& mutable_row(std::uint32_t ctx);
  const std::map<std::uint32_t, std::vector<double>>& rows() const { return rows_; }
  friend bool operator==(const LogitTable& a, const LogitTable& b) { return a.vocab_ == b.vocab_ && a.rows_ == b.rows_; }

 private:
  int vocab_;
  std::map<std::uint32_t, std::vector<double>> rows_;
  std::vector<double> zeros_;
};

struct Policy {
  PolicyShape shape;
  Vocabulary vocab;
  LogitTable theta;

  explicit Policy(PolicyShape s = {}) : shape(s), vocab(s.slots), theta(vocab.size()) {}
};

void save_policy(const std::filesystem::path& path, const Policy& p);
Policy load_policy(const std::filesystem::path& path);

// ---------------------------------------------------------------- sampling

struct SampledSeq {
  std::vector<int> tokens;             // includes STOP when emitted
  std::vector<std::uint32_t> contexts;  // one per token
  double logprob_old = 0.0;
  std::string text;  // decoded action text
};

struct TaskGroup {
  int task = 0;
  std::vector<std::uint8_t> mask;
  std::vector<SampledSeq> seqs;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct GroupBatch {
  std::vector<TaskGroup> groups;
};

/// Masked log-softmax logprob of a token path.
double sequence_logprob(const LogitTable& theta, const std::vector<std::uint32_t>& ctx, const std::vector<int>& tokens,
                        const std::vector<std::uint8_t>& mask);

std::vector<SampledSeq> sample_group(const Policy& p, const SuiteEntry& e, int G, std::uint64_t seed);

/// Highest-logit token at every step, ties to the lowest index.
SampledSeq greedy_decode(const Policy& p, const SuiteEntry& e);

// ---------------------------------------------------------------- objective

/// Population z-scores; all zeros when sigma < 1e-8.
std::vector<double> group_advantages(const std::vector<double>& rewards);

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LossReport {
  double loss = 0.0;  // negated objective
  double surrogate = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  LogitTable grad;  // d loss / d theta, rows for touched contexts
};

/// Clipped sequence-level surrogate minus beta_kl times the mean exact KL to
/// the reference over the contexts the batch visits.
LossReport grpo_loss_and_grad(const LogitTable& theta, const LogitTable& theta_ref, const GroupBatch& batch,
                              double eps, double beta_kl);

/// theta -= lr * grad over the rows the gradient touches.
void sgd_step(LogitTable& theta, const LogitTable& grad, double lr);

/// Adam on the sparse table; rows appear as gradients first touch them.
class Adam {
 public:
  explicit Adam(double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}
  /// Descends `grad` (a loss gradient).
  void step(LogitTable& theta, const LogitTable& grad);

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::map<std::uint32_t, std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------- training

struct TrainConfig {
  int iterations = 500;
  int group_size = 8;
  int epochs = 2;
  double clip_eps = 0.2;
  double beta_kl = 0.01;
  double lr = 0.05;
  std::uint64_t seed = 1;
  enum class Optimizer { Sgd, Adam } optimizer = Optimizer::Adam;
  PolicyShape shape;
  /// Stop once the sampled goal-success fraction reaches this value.
  std::optional<double> stop_at_success;
};

struct LogRow {
  int iteration = 0;
  double r_f = 0.0, r_r = 0.0, r_g = 0.0, total = 0.0;
  double success_fraction = 0.0;  // sampled rollouts that satisfy every goal
  double kl = 0.0;
  double clip_fraction = 0.0;
  double eval_success = 0.0;  // greedy decoding over the suite
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
  Policy policy;
  Policy reference;
};

std::string log_csv_header();
std::string log_csv_row(const LogRow& r);
void write_log_csv(const std::filesystem::path& path, const TrainingLog& log);

/// Greedy success fraction of `p` over the suite.
double evaluate_policy(const Policy& p, const std::vector<SuiteEntry>& suite, RolloutBackend& backend,
                       std::vector<RolloutOutcome>* outcomes = nullptr);

struct FamilyScore {
  std::string family;
  int tasks = 0;
  int samples = 0;
  int successes = 0;
  double fraction() const { return samples > 0 ? static_cast<double>(successes) / samples : 0.0; }
};

struct SampledEval {
  std::vector<FamilyScore> families;  // the four task families first, then any others
  FamilyScore overall;
};

/// `repeats` sampled rollouts per task, success averaged per family.
SampledEval evaluate_sampled(const Policy& p, const std::vector<SuiteEntry>& suite, RolloutBackend& backend,
                             int repeats, std::uint64_t seed);
std::string sampled_eval_csv(const SampledEval& e);

using RowCallback = std::function<void(const LogRow&)>;

/// Row 0 is the evaluation of the initial policy; every further row is one
/// iteration of sample -> score -> advantages -> `epochs` Adam steps.
TrainingLog train(const TrainConfig& cfg, const std::vector<SuiteEntry>& suite, RolloutBackend& backend,
                  std::optional<Policy> init = std::nullopt, const RowCallback& on_row = nullptr);

}  // namespace tg
