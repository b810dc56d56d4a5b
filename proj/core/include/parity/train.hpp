// Training loops and measurement protocols: one-pass SGD/Adam over fresh
// batches, multi-pass training over a fixed dataset, the staged schedule for
// the simplified model, evaluation (teacher-forced and autoregressive), the
// sample-complexity counter, and the (k, chain) x learning-rate sweep.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parity/construction.hpp"
#include "parity/data.hpp"
#include "parity/gpt.hpp"
#include "parity/metrics.hpp"
#include "parity/simplified.hpp"

namespace parity {

// Staged learning rates and batch size for the simplified model, evaluated
// from (n, k, m, delta, eps) and shrunk by `scale` (the literal batch formula
// is astronomically large); the scaled batch is floored at 64.
struct TheorySchedule {
  double delta = 0.1;
  double eps = 0.1;
  double scale = 1.0;
  double batch_formula = 0;  // unscaled value
  std::uint64_t batch = 0;   // scaled, floored at 64
  double lr0 = 0, lr1 = 0, lr2 = 0;
};

// scale <= 0 picks the default: the value that makes batch = 4096 at n = 30
// for the same (delta, eps).
TheorySchedule compute_theory_schedule(int n, int k, int m, double delta, double eps,
                                       double scale);

enum class ModelKind { kSimplified, kStandard };
enum class Optimizer { kSgd, kAdam };
enum class LrSchedule { kConstant, kLinearDecay };

struct TrainConfig {
  ModelKind model = ModelKind::kSimplified;
  int n = 10;
  int k = 2;
  bool random_order = false;
  bool cot = true;

  // simplified model
  int d = 64;
  int m = 8;
  double eps = 0.1;

  // standard model
  int layers = 1;
  int heads = 1;
  int d_model = 128;
  int d_ff = 512;
  bool tie_output = false;
  bool loss_all_positions = false;

  int batch = 512;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  std::uint64_t budget = 100000;   // one-pass: total fresh samples
  int passes = 1;                  // > 1: epochs over a fixed dataset
  std::uint64_t dataset_size = 0;  // multi-pass only
  int eval_every = 10;             // evaluations happen every eval_every steps
  int val_size = 2048;
  int attn_every = 0;  // 0 = no attention snapshots
  std::uint64_t seed = 1;
  int threads = 1;

  int sequence_length() const;  // layout length for (n, k, cot)
  void validate() const;
};

struct RunRecord {
  struct Row {
    std::uint64_t step = 0;
    std::uint64_t samples_seen = 0;
    double loss = 0;
    double tf_acc = 0;
    double ar_acc = 0;
    double min_entropy = 0;
    std::vector<double> head_entropy;  // one per (layer, head), layer-major
  };
  std::vector<Row> rows;
  std::string halt_reason;  // "perfect" | "budget-exceeded" | "diverged"
  std::optional<std::uint64_t> samples_at_perfect;
  // (label, pattern) snapshots taken every attn_every steps, label step_<s>_L<l>H<h>
  std::vector<std::pair<std::string, Matrix>> attention_snapshots;

  const Row& last() const { return rows.back(); }
};

struct TrainResult {
  ParityTask task;
  RunRecord record;
  // exactly one of these is populated, per TrainConfig::model
  std::optional<SimplifiedParams> simplified;
  std::optional<EmbeddingTable> emb;
  std::optional<GptParams> gpt;
};

// One-pass training: every step draws a fresh batch from the training stream.
TrainResult run_online_sgd(const TrainConfig& config);

// Multi-pass training over `dataset` (epoch 1 in file order, later epochs
// reshuffled from a per-epoch derived seed). Config passes/dataset_size must
// match the dataset.
TrainResult run_multipass(const TrainConfig& config, const std::vector<BitSequence>& dataset);
// Convenience: generates the dataset from the task stream, then trains.
TrainResult run_multipass(const TrainConfig& config);

struct EvalSummary {
  double tf_acc = 0;  // fraction of scored positions predicted right, ground-truth prefixes
  double ar_acc = 0;  // fraction of inputs whose generated answer equals the parity
  std::vector<double> head_entropy;
  double min_entropy = 1.0;
};

EvalSummary evaluate_simplified(const SimplifiedParams& params, const EmbeddingTable& emb,
                                const ParityTask& task, bool cot, int val_size, RngStream rng,
                                int threads);
EvalSummary evaluate_gpt(const GptParams& params, const ParityTask& task, bool cot, int val_size,
                         bool loss_all_positions, RngStream rng, int threads);

// Samples consumed at the first evaluation with autoregressive accuracy 1.
struct SampleComplexity {
  std::optional<std::uint64_t> samples;  // nullopt when the budget ran out
  std::string halt_reason;
  RunRecord record;
};
SampleComplexity measure_sample_complexity(const TrainConfig& config);

// Staged run for the simplified model. Strict mode is exactly three full-batch
// SGD steps at (lr0, lr1, lr2); relaxed mode spends many smaller steps per
// stage with the same rate structure, which is what actually trains at desk
// scale batches.
struct ThreeStepConfig {
  int n = 20;
  int k = 5;
  int d = 256;
  int m = 32;
  double eps = 0.1;
  double delta = 0.1;
  double scale = -1.0;  // forwarded to compute_theory_schedule
  bool relaxed = false;
  std::uint64_t batch_override = 0;  // 0 = schedule batch
  // relaxed stage layout; lr < 0 derives from the schedule ratio structure
  int steps1 = 200, steps2 = 2200, steps3 = 600;
  double lr0 = -1, lr1 = -1, lr2 = -1;
  int eval_every = 50;
  int val_size = 2048;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct ThreeStepResult {
  TheorySchedule schedule;
  bool relaxed = false;
  std::uint64_t batch = 0;
  double lr0 = 0, lr1 = 0, lr2 = 0;
  double max_abs_attn_grad_step0 = 0;  // attention gradient of the very first batch
  int stage1_argmax_hits = 0;          // chain slots whose strongest delta sits on the right key
  int stage1_slots = 0;
  VerificationReport one_hot;  // after stage 2
  EvalSummary final_eval;      // after stage 3
  RunRecord record;
  ParityTask task;
  SimplifiedParams params;
  EmbeddingTable emb;
};

ThreeStepResult run_three_step_theory(const ThreeStepConfig& config);

// Sweep over (k, chain flag, learning rate, seed index) cells. Each cell seeds
// its own streams from mix(seed, k, cot, lr index, seed index), so cells are
// order independent.
struct SweepCell {
  int n = 0;
  int k = 0;
  bool cot = false;
  double lr = 0;
  int seed_index = 0;
  std::optional<std::uint64_t> samples;
  std::string halt_reason;
};

struct SweepSummaryRow {
  int k = 0;
  bool cot = false;
  std::optional<std::uint64_t> best_median;  // min over lr of median over seeds
  double best_lr = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // fixed order: k-major, then cot, lr, seed
  std::vector<SweepSummaryRow> summary;
};

SweepResult sweep(const TrainConfig& base, std::span<const int> k_values,
                  std::span<const double> lr_grid, int n_seeds, bool cot_both, int threads);

}  // namespace parity
