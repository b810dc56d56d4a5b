#include "parity/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "parity/parallel.hpp"
#include "parity/simplified_kernel.hpp"

namespace parity {

namespace {
// Stream ids carved out of the run seed. Everything a run draws comes from
// (seed, one of these), so runs are reproducible byte for byte.
constexpr std::uint64_t kStreamTask = 1;
constexpr std::uint64_t kStreamEmb = 2;
constexpr std::uint64_t kStreamInit = 3;
constexpr std::uint64_t kStreamTrain = 4;
constexpr std::uint64_t kStreamVal = 5;
constexpr std::uint64_t kStreamEpoch = 6;
}  // namespace

TheorySchedule compute_theory_schedule(int n, int k, int m, double delta, double eps,
                                       double scale) {
  if (n < 2 || k < 1 || m < 1 || delta <= 0 || eps <= 0)
    throw std::invalid_argument("compute_theory_schedule: bad arguments");
  const double c2 = 1.28e7 / (eps * eps);
  auto batch_formula = [&](double nn) {
    return c2 * nn * std::pow(std::log(nn / delta), 20.0);
  };
  TheorySchedule s;
  s.delta = delta;
  s.eps = eps;
  s.batch_formula = batch_formula(n);
  s.scale = scale > 0 ? scale : 4096.0 / batch_formula(30.0);
  s.batch = std::max<std::uint64_t>(64, static_cast<std::uint64_t>(s.batch_formula * s.scale));
  s.lr0 = m * eps * std::sqrt(static_cast<double>(s.batch)) / (100.0 * std::log(n / delta));
  s.lr1 = s.lr0;
  s.lr2 = 4.0 * k * eps / 3.0;
  return s;
}

int TrainConfig::sequence_length() const {
  return expected_length(cot ? Layout::kCot : Layout::kNoCot, n, k);
}

void TrainConfig::validate() const {
  if (n < 1 || k < 1 || k > n) throw std::invalid_argument("train config: need 1 <= k <= n");
  if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
  if (lr <= 0) throw std::invalid_argument("train config: lr must be positive");
  if (eval_every < 1) throw std::invalid_argument("train config: eval_every must be >= 1");
  if (val_size < 1) throw std::invalid_argument("train config: val_size must be >= 1");
  if (passes < 1) throw std::invalid_argument("train config: passes must be >= 1");
  if (passes > 1 && dataset_size < 1)
    throw std::invalid_argument("train config: multi-pass needs dataset_size");
  if (model == ModelKind::kSimplified) {
    if (d < 1 || m < 1 || eps <= 0)
      throw std::invalid_argument("train config: bad simplified model shape");
  }
}

namespace {

struct ValData {
  std::vector<BitSequence> gt;                       // ground-truth full sequences
  std::vector<std::vector<std::uint8_t>> gt_tokens;  // same, as flat token lists
  std::vector<std::vector<std::uint8_t>> inputs;     // input prefixes
  std::vector<int> parity;
};

ValData make_val_data(const ParityTask& task, bool cot, int val_size, RngStream rng) {
  ValData val;
  val.gt.reserve(val_size);
  for (int i = 0; i < val_size; ++i) {
    BitSequence seq = gen_sequence(task, cot, rng);
    val.gt_tokens.emplace_back(seq.bits.begin() + 1, seq.bits.end());
    val.inputs.emplace_back(seq.bits.begin() + 1, seq.bits.begin() + 1 + task.n);
    val.parity.push_back(parity_eval(task, val.inputs.back()));
    val.gt.push_back(std::move(seq));
  }
  return val;
}

double entropy_from_columns(const std::function<std::vector<double>(int)>& column, int t) {
  double best = 1.0;
  for (int i = 2; i <= t; ++i) {
    const std::vector<double> col = column(i);
    best = std::min(best, shannon_entropy(col) / std::log(static_cast<double>(i)));
  }
  return best;
}

EvalSummary eval_simplified_impl(const SimplifiedTableKernel& kernel, const ParityTask& task,
                                 bool cot, const ValData& val, int threads) {
  const auto positions = scored_positions(task.n, task.k, cot);
  const int t = expected_length(cot ? Layout::kCot : Layout::kNoCot, task.n, task.k);

  struct Partial {
    std::uint64_t tf_hits = 0, tf_total = 0, ar_hits = 0;
    double entropy_sum = 0;
  };
  constexpr std::size_t kChunk = 64;
  const std::size_t n = val.gt.size();
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<Partial> partials(n_chunks);

  for_each_chunk(n, kChunk, threads, [&](const ChunkRange& r) {
    Partial& acc = partials[r.index];
    std::vector<double> outs(positions.size());
    std::vector<std::uint8_t> work;
    for (std::size_t s = r.begin; s < r.end; ++s) {
      const auto& tokens = val.gt_tokens[s];
      kernel.outputs_at(tokens, positions, outs);
      for (std::size_t pi = 0; pi < positions.size(); ++pi) {
        const int want = val.gt[s].at(positions[pi] + 1);
        acc.tf_hits += (outs[pi] > 0.0 ? 1 : 0) == want;
        acc.tf_total += 1;
      }
      // greedy completion
      work.assign(val.inputs[s].begin(), val.inputs[s].end());
      work.push_back(0);
      const int steps = cot ? task.k : 1;
      double y = 0;
      for (int st = 0; st < steps; ++st) {
        const int pos = static_cast<int>(work.size());
        kernel.outputs_at(work, std::span<const int>(&pos, 1), std::span<double>(&y, 1));
        work.push_back(y > 0.0 ? 1 : 0);
      }
      acc.ar_hits += work.back() == val.parity[s];
      acc.entropy_sum += entropy_from_columns(
          [&](int i) { return kernel.pattern_column(tokens, i); }, t);
    }
  });

  Partial total;
  for (const auto& p : partials) {
    total.tf_hits += p.tf_hits;
    total.tf_total += p.tf_total;
    total.ar_hits += p.ar_hits;
    total.entropy_sum += p.entropy_sum;
  }
  EvalSummary out;
  out.tf_acc = static_cast<double>(total.tf_hits) / static_cast<double>(total.tf_total);
  out.ar_acc = static_cast<double>(total.ar_hits) / static_cast<double>(n);
  out.head_entropy = {total.entropy_sum / static_cast<double>(n)};
  out.min_entropy = out.head_entropy[0];
  return out;
}

int gpt_predict_bit(const Matrix& logits, int pos) {  // 1-based position; ties to 0
  return logits(1, pos - 1) > logits(0, pos - 1) ? 1 : 0;
}

EvalSummary eval_gpt_impl(const GptParams& params, const ParityTask& task, bool cot,
                          const ValData& val, std::span<const int> positions, int threads) {
  const std::size_t n_heads =
      static_cast<std::size_t>(params.config.layers) * params.config.heads;

  struct Partial {
    std::uint64_t tf_hits = 0, tf_total = 0, ar_hits = 0;
    std::vector<double> entropy_sum;
  };
  constexpr std::size_t kChunk = 32;
  const std::size_t n = val.gt.size();
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<Partial> partials(n_chunks);

  for_each_chunk(n, kChunk, threads, [&](const ChunkRange& r) {
    Partial& acc = partials[r.index];
    acc.entropy_sum.assign(n_heads, 0.0);
    std::vector<std::uint8_t> work;
    for (std::size_t s = r.begin; s < r.end; ++s) {
      const GptForward f = gpt_forward(params, val.gt_tokens[s]);
      for (int p : positions) {
        acc.tf_hits += gpt_predict_bit(f.logits, p) == val.gt[s].at(p + 1);
        acc.tf_total += 1;
      }
      for (std::size_t h = 0; h < n_heads; ++h)
        acc.entropy_sum[h] += normalized_attention_entropy(f.attention[h]);

      work.assign(val.inputs[s].begin(), val.inputs[s].end());
      work.push_back(0);
      const int steps = cot ? task.k : 1;
      for (int st = 0; st < steps; ++st) {
        const GptForward g = gpt_forward(params, work);
        work.push_back(
            static_cast<std::uint8_t>(gpt_predict_bit(g.logits, static_cast<int>(work.size()))));
      }
      acc.ar_hits += work.back() == val.parity[s];
    }
  });

  Partial total;
  total.entropy_sum.assign(n_heads, 0.0);
  for (const auto& p : partials) {
    total.tf_hits += p.tf_hits;
    total.tf_total += p.tf_total;
    total.ar_hits += p.ar_hits;
    for (std::size_t h = 0; h < n_heads; ++h) total.entropy_sum[h] += p.entropy_sum[h];
  }
  EvalSummary out;
  out.tf_acc = static_cast<double>(total.tf_hits) / static_cast<double>(total.tf_total);
  out.ar_acc = static_cast<double>(total.ar_hits) / static_cast<double>(n);
  out.head_entropy.resize(n_heads);
  out.min_entropy = 1.0;
  for (std::size_t h = 0; h < n_heads; ++h) {
    out.head_entropy[h] = total.entropy_sum[h] / static_cast<double>(n);
    out.min_entropy = std::min(out.min_entropy, out.head_entropy[h]);
  }
  return out;
}

// Batch source shared by one-pass (fresh draws) and multi-pass (epoch
// permutations of a fixed dataset, epoch 1 in file order).
class BatchSource {
 public:
  // one-pass
  BatchSource(const ParityTask& task, bool cot, RngStream stream, std::uint64_t budget,
              int batch)
      : task_(&task), cot_(cot), stream_(stream), batch_(batch), online_(true) {
    total_steps_ = static_cast<std::uint64_t>(budget / static_cast<std::uint64_t>(batch));
  }
  // multi-pass
  BatchSource(const std::vector<BitSequence>& dataset, RngStream epoch_seed, int passes,
              int batch)
      : stream_(epoch_seed), batch_(batch), online_(false), dataset_(&dataset), passes_(passes) {
    steps_per_epoch_ = (dataset.size() + batch_ - 1) / batch_;
    total_steps_ = steps_per_epoch_ * static_cast<std::uint64_t>(passes);
  }

  std::uint64_t total_steps() const { return total_steps_; }

  std::vector<BitSequence> next_batch() {
    std::vector<BitSequence> out;
    if (online_) {
      out.reserve(batch_);
      for (int i = 0; i < batch_; ++i) out.push_back(gen_sequence(*task_, cot_, stream_));
      return out;
    }
    if (step_in_epoch_ == 0) shuffle_epoch();
    const std::size_t begin = step_in_epoch_ * batch_;
    const std::size_t end = std::min(dataset_->size(), begin + batch_);
    for (std::size_t i = begin; i < end; ++i) out.push_back((*dataset_)[perm_[i]]);
    if (++step_in_epoch_ == steps_per_epoch_) {
      step_in_epoch_ = 0;
      ++epoch_;
    }
    return out;
  }

 private:
  void shuffle_epoch() {
    perm_.resize(dataset_->size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
    if (epoch_ == 0) return;  // first epoch keeps file order
    RngStream r = stream_.derive(static_cast<std::uint64_t>(epoch_));
    for (std::size_t i = perm_.size(); i > 1; --i)
      std::swap(perm_[i - 1], perm_[r.next_index(i)]);
  }

  const ParityTask* task_ = nullptr;
  bool cot_ = true;
  RngStream stream_{0, 0};
  int batch_ = 1;
  bool online_ = true;
  std::uint64_t total_steps_ = 0;
  // multi-pass state
  const std::vector<BitSequence>* dataset_ = nullptr;
  int passes_ = 1;
  std::size_t steps_per_epoch_ = 0;
  std::size_t step_in_epoch_ = 0;
  int epoch_ = 0;
  std::vector<std::size_t> perm_;
};

double lr_at_step(const TrainConfig& cfg, std::uint64_t step, std::uint64_t total_steps) {
  if (cfg.lr_schedule == LrSchedule::kConstant || total_steps == 0) return cfg.lr;
  // linear decay from the peak to 0 across the budget
  return cfg.lr * static_cast<double>(total_steps - (step - 1)) / static_cast<double>(total_steps);
}

class SimplifiedTrainer {
 public:
  SimplifiedTrainer(const TrainConfig& cfg, const ParityTask& task, EmbeddingTable emb)
      : cfg_(cfg),
        task_(task),
        emb_(std::move(emb)),
        kernel_(emb_, cfg.sequence_length()) {
    RngStream init_rng(cfg.seed, kStreamInit);
    params_ = init_params(task, emb_, cfg.m, cfg.eps, init_rng);
    if (cfg.optimizer == Optimizer::kAdam) {
      adam_a_ = AdamState::for_size(params_.A.size());
      adam_w_ = AdamState::for_size(params_.W.size());
    }
    kernel_.refresh(params_);
  }

  double step(const std::vector<BitSequence>& batch, double lr) {
    const double mean_loss = accumulate_batch(batch);
    apply_update(lr, batch.size());
    return mean_loss;
  }

  // Computes the batch-mean loss/grads into pending state; callers may inspect
  // pending_grads() before apply_update.
  double accumulate_batch(const std::vector<BitSequence>& batch) {
    constexpr std::size_t kChunk = 32;
    const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
    std::vector<SimplifiedTableKernel::GradAccum> partials(n_chunks);
    for_each_chunk(batch.size(), kChunk, cfg_.threads, [&](const ChunkRange& r) {
      auto& acc = partials[r.index];
      acc.init(2 * kernel_.t_max(), 2 * params_.m);
      for (std::size_t s = r.begin; s < r.end; ++s)
        kernel_.accumulate(batch[s], cfg_.cot, acc);
    });
    for (std::size_t c = 1; c < n_chunks; ++c) partials[0].merge_from(partials[c]);
    pending_ = kernel_.finalize(partials[0]);
    return partials[0].loss / static_cast<double>(batch.size());
  }

  void apply_update(double lr, std::size_t batch_size) {
    const double inv = 1.0 / static_cast<double>(batch_size);
    if (cfg_.optimizer == Optimizer::kSgd) {
      axpy(params_.A, pending_.dA, -lr * inv);
      axpy(params_.W, pending_.dW, -lr * inv);
    } else {
      AdamHyper h;
      h.lr = lr;
      for (std::size_t i = 0; i < pending_.dA.size(); ++i) pending_.dA.data()[i] *= inv;
      for (std::size_t i = 0; i < pending_.dW.size(); ++i) pending_.dW.data()[i] *= inv;
      adam_step({params_.A.data(), params_.A.size()}, {pending_.dA.data(), pending_.dA.size()},
                adam_a_, h);
      adam_step({params_.W.data(), params_.W.size()}, {pending_.dW.data(), pending_.dW.size()},
                adam_w_, h);
    }
    kernel_.refresh(params_);
  }

  const SimplifiedGrads& pending_grads() const { return pending_; }

  EvalSummary eval(const ValData& val) const {
    return eval_simplified_impl(kernel_, task_, cfg_.cot, val, cfg_.threads);
  }

  void snapshot(const std::vector<std::uint8_t>& probe, std::uint64_t step,
                RunRecord& record) const {
    const int t = static_cast<int>(probe.size());
    Matrix pattern(t, t);
    for (int i = 1; i <= t; ++i) {
      const auto col = kernel_.pattern_column(probe, i);
      for (int j = 0; j < i; ++j) pattern(j, i - 1) = col[j];
    }
    record.attention_snapshots.emplace_back("step_" + std::to_string(step) + "_L1H1",
                                            std::move(pattern));
  }

  const SimplifiedParams& params() const { return params_; }
  const EmbeddingTable& emb() const { return emb_; }
  SimplifiedParams& mutable_params() { return params_; }
  SimplifiedTableKernel& kernel() { return kernel_; }

 private:
  TrainConfig cfg_;
  ParityTask task_;
  EmbeddingTable emb_;
  SimplifiedParams params_;
  SimplifiedTableKernel kernel_;
  SimplifiedGrads pending_;
  AdamState adam_a_, adam_w_;
};

class GptTrainer {
 public:
  GptTrainer(const TrainConfig& cfg, const ParityTask& task) : cfg_(cfg), task_(task) {
    GptConfig gc;
    gc.layers = cfg.layers;
    gc.heads = cfg.heads;
    gc.d_model = cfg.d_model;
    gc.d_ff = cfg.d_ff;
    gc.tie_output = cfg.tie_output;
    gc.t_max = cfg.sequence_length();
    RngStream init_rng(cfg.seed, kStreamInit);
    params_ = gpt_init(gc, init_rng);
    adam_ = AdamState::for_size(params_.flat.size());
    positions_ = cfg.loss_all_positions
                     ? [&] {
                         std::vector<int> all;
                         for (int i = 1; i < cfg.sequence_length(); ++i) all.push_back(i);
                         return all;
                       }()
                     : scored_positions(cfg.n, cfg.k, cfg.cot);
  }

  double step(const std::vector<BitSequence>& batch, double lr) {
    tokens_.resize(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s)
      tokens_[s].assign(batch[s].bits.begin() + 1, batch[s].bits.end());
    GptGradsResult res = gpt_batch_loss_backward(params_, tokens_, positions_, cfg_.threads);
    if (cfg_.optimizer == Optimizer::kSgd) {
      for (std::size_t i = 0; i < params_.flat.size(); ++i)
        params_.flat[i] -= lr * res.grads[i];
    } else {
      AdamHyper h;
      h.lr = lr;
      adam_step(params_.flat, res.grads, adam_, h);
    }
    return res.loss;
  }

  EvalSummary eval(const ValData& val) const {
    return eval_gpt_impl(params_, task_, cfg_.cot, val,
                         scored_positions(cfg_.n, cfg_.k, cfg_.cot), cfg_.threads);
  }

  void snapshot(const std::vector<std::uint8_t>& probe, std::uint64_t step,
                RunRecord& record) const {
    const GptForward f = gpt_forward(params_, probe);
    for (int l = 0; l < cfg_.layers; ++l)
      for (int h = 0; h < cfg_.heads; ++h)
        record.attention_snapshots.emplace_back(
            "step_" + std::to_string(step) + "_L" + std::to_string(l + 1) + "H" +
                std::to_string(h + 1),
            f.pattern(l, h, cfg_.heads));
  }

  const GptParams& params() const { return params_; }

 private:
  TrainConfig cfg_;
  ParityTask task_;
  GptParams params_;
  AdamState adam_;
  std::vector<int> positions_;
  std::vector<std::vector<std::uint8_t>> tokens_;
};

template <typename Trainer>
RunRecord train_loop(const TrainConfig& cfg, Trainer& trainer, BatchSource& source,
                     const ValData& val) {
  RunRecord record;
  const std::uint64_t total_steps = source.total_steps();
  std::uint64_t samples_seen = 0;

  auto push_eval = [&](std::uint64_t step, double loss) {
    const EvalSummary ev = trainer.eval(val);
    RunRecord::Row row;
    row.step = step;
    row.samples_seen = samples_seen;
    row.loss = loss;
    row.tf_acc = ev.tf_acc;
    row.ar_acc = ev.ar_acc;
    row.min_entropy = ev.min_entropy;
    row.head_entropy = ev.head_entropy;
    record.rows.push_back(std::move(row));
    return ev.ar_acc == 1.0;
  };

  if (push_eval(0, 0.0)) {
    record.halt_reason = "perfect";
    record.samples_at_perfect = 0;
    return record;
  }
  if (cfg.attn_every > 0) trainer.snapshot(val.gt_tokens.front(), 0, record);

  for (std::uint64_t step = 1; step <= total_steps; ++step) {
    const std::vector<BitSequence> batch = source.next_batch();
    const double loss = trainer.step(batch, lr_at_step(cfg, step, total_steps));
    samples_seen += batch.size();
    if (!std::isfinite(loss)) {
      push_eval(step, loss);
      record.halt_reason = "diverged";
      return record;
    }
    const bool eval_now = step % static_cast<std::uint64_t>(cfg.eval_every) == 0 ||
                          step == total_steps;
    if (!eval_now) continue;
    if (cfg.attn_every > 0 && step % static_cast<std::uint64_t>(cfg.attn_every) == 0)
      trainer.snapshot(val.gt_tokens.front(), step, record);
    if (push_eval(step, loss)) {
      record.halt_reason = "perfect";
      record.samples_at_perfect = samples_seen;
      return record;
    }
  }
  record.halt_reason = "budget-exceeded";
  return record;
}

TrainResult run_config(const TrainConfig& cfg, const std::vector<BitSequence>* dataset) {
  cfg.validate();
  RngStream task_rng(cfg.seed, kStreamTask);
  TrainResult result;
  result.task = sample_secret_set(cfg.n, cfg.k, task_rng, cfg.random_order);
  const ValData val = make_val_data(result.task, cfg.cot, cfg.val_size,
                                    RngStream(cfg.seed, kStreamVal));

  std::vector<BitSequence> generated;
  std::optional<BatchSource> source;
  if (cfg.passes > 1 || dataset != nullptr) {
    if (dataset == nullptr) {
      RngStream data_rng(cfg.seed, kStreamTrain);
      generated.reserve(cfg.dataset_size);
      for (std::uint64_t i = 0; i < cfg.dataset_size; ++i)
        generated.push_back(gen_sequence(result.task, cfg.cot, data_rng));
      dataset = &generated;
    }
    source.emplace(*dataset, RngStream(cfg.seed, kStreamEpoch), cfg.passes, cfg.batch);
  } else {
    source.emplace(result.task, cfg.cot, RngStream(cfg.seed, kStreamTrain), cfg.budget,
                   cfg.batch);
  }

  if (cfg.model == ModelKind::kSimplified) {
    RngStream emb_rng(cfg.seed, kStreamEmb);
    EmbeddingTable emb = init_embeddings(cfg.sequence_length(), cfg.d, emb_rng);
    SimplifiedTrainer trainer(cfg, result.task, std::move(emb));
    result.record = train_loop(cfg, trainer, *source, val);
    result.simplified = trainer.params();
    result.emb = trainer.emb();
  } else {
    GptTrainer trainer(cfg, result.task);
    result.record = train_loop(cfg, trainer, *source, val);
    result.gpt = trainer.params();
  }
  return result;
}

}  // namespace

TrainResult run_online_sgd(const TrainConfig& config) {
  TrainConfig cfg = config;
  cfg.passes = 1;
  return run_config(cfg, nullptr);
}

TrainResult run_multipass(const TrainConfig& config, const std::vector<BitSequence>& dataset) {
  TrainConfig cfg = config;
  cfg.dataset_size = dataset.size();
  if (cfg.dataset_size == 0) throw std::invalid_argument("run_multipass: empty dataset");
  return run_config(cfg, &dataset);
}

TrainResult run_multipass(const TrainConfig& config) { return run_config(config, nullptr); }

EvalSummary evaluate_simplified(const SimplifiedParams& params, const EmbeddingTable& emb,
                                const ParityTask& task, bool cot, int val_size, RngStream rng,
                                int threads) {
  const ValData val = make_val_data(task, cot, val_size, rng);
  SimplifiedTableKernel kernel(emb, expected_length(cot ? Layout::kCot : Layout::kNoCot, task.n,
                                                    task.k));
  kernel.refresh(params);
  return eval_simplified_impl(kernel, task, cot, val, threads);
}

EvalSummary evaluate_gpt(const GptParams& params, const ParityTask& task, bool cot, int val_size,
                         bool loss_all_positions, RngStream rng, int threads) {
  (void)loss_all_positions;
  const ValData val = make_val_data(task, cot, val_size, rng);
  return eval_gpt_impl(params, task, cot, val, scored_positions(task.n, task.k, cot), threads);
}

SampleComplexity measure_sample_complexity(const TrainConfig& config) {
  if (config.passes != 1)
    throw std::invalid_argument("measure_sample_complexity: one-pass configs only");
  TrainResult res = run_online_sgd(config);
  SampleComplexity out;
  out.samples = res.record.samples_at_perfect;
  out.halt_reason = res.record.halt_reason;
  out.record = std::move(res.record);
  return out;
}

ThreeStepResult run_three_step_theory(const ThreeStepConfig& cfg) {
  if (cfg.n < 2 || cfg.k < 1 || cfg.k > cfg.n || cfg.d < 1 || cfg.m < 1)
    throw std::invalid_argument("run_three_step_theory: bad shape");
  ThreeStepResult out;
  out.relaxed = cfg.relaxed;
  out.schedule = compute_theory_schedule(cfg.n, cfg.k, cfg.m, cfg.delta, cfg.eps, cfg.scale);
  out.batch = cfg.batch_override ? cfg.batch_override : out.schedule.batch;
  out.lr0 = cfg.lr0 >= 0 ? cfg.lr0 : out.schedule.lr0;
  out.lr1 = cfg.lr1 >= 0 ? cfg.lr1 : out.schedule.lr1;
  out.lr2 = cfg.lr2 >= 0 ? cfg.lr2 : out.schedule.lr2;

  RngStream task_rng(cfg.seed, kStreamTask);
  out.task = sample_secret_set(cfg.n, cfg.k, task_rng, /*random_order=*/false);
  const int t = cfg.n + cfg.k + 1;
  RngStream emb_rng(cfg.seed, kStreamEmb);
  out.emb = init_embeddings(t, cfg.d, emb_rng);

  TrainConfig inner;
  inner.model = ModelKind::kSimplified;
  inner.n = cfg.n;
  inner.k = cfg.k;
  inner.cot = true;
  inner.d = cfg.d;
  inner.m = cfg.m;
  inner.eps = cfg.eps;
  inner.batch = static_cast<int>(out.batch);
  inner.optimizer = Optimizer::kSgd;
  inner.seed = cfg.seed;
  inner.threads = cfg.threads;
  inner.val_size = cfg.val_size;

  SimplifiedTrainer trainer(inner, out.task, out.emb);
  const ValData val = make_val_data(out.task, true, cfg.val_size, RngStream(cfg.seed, kStreamVal));
  BatchSource source(out.task, true, RngStream(cfg.seed, kStreamTrain),
                     /*budget=*/~0ull, inner.batch);

  RunRecord& record = out.record;
  std::uint64_t samples_seen = 0;
  std::uint64_t step = 0;

  auto push_eval = [&](double loss) {
    const EvalSummary ev = trainer.eval(val);
    RunRecord::Row row;
    row.step = step;
    row.samples_seen = samples_seen;
    row.loss = loss;
    row.tf_acc = ev.tf_acc;
    row.ar_acc = ev.ar_acc;
    row.min_entropy = ev.min_entropy;
    row.head_entropy = ev.head_entropy;
    record.rows.push_back(std::move(row));
    return ev.ar_acc == 1.0;
  };

  push_eval(0.0);

  const int stage_steps[3] = {cfg.relaxed ? cfg.steps1 : 1, cfg.relaxed ? cfg.steps2 : 1,
                              cfg.relaxed ? cfg.steps3 : 1};
  const double stage_lr[3] = {out.lr0, out.lr1, out.lr2};

  bool perfect = false;
  for (int stage = 0; stage < 3 && !perfect; ++stage) {
    for (int s = 0; s < stage_steps[stage]; ++s) {
      const std::vector<BitSequence> batch = source.next_batch();
      const double loss = trainer.accumulate_batch(batch);
      if (step == 0) {
        // the attention half of W starts at zero, so the first batch cannot
        // move A; record the measured gradient magnitude
        double mx = 0.0;
        const Matrix& da = trainer.pending_grads().dA;
        for (std::size_t i = 0; i < da.size(); ++i)
          mx = std::max(mx, std::abs(da.data()[i]));
        out.max_abs_attn_grad_step0 = mx;
      }
      trainer.apply_update(stage_lr[stage], batch.size());
      samples_seen += batch.size();
      ++step;
      if (!std::isfinite(loss)) {
        push_eval(loss);
        record.halt_reason = "diverged";
        out.params = trainer.params();
        return out;
      }
      const bool eval_now = step % static_cast<std::uint64_t>(cfg.eval_every) == 0 ||
                            s + 1 == stage_steps[stage];
      if (eval_now && push_eval(loss) && stage == 2) {
        perfect = true;
        break;
      }
    }
    if (stage == 0) {
      const PhaseDiagnostics diag =
          phase_diagnostics(trainer.params(), trainer.emb(), out.task);
      out.stage1_slots = 2 * cfg.k;
      out.stage1_argmax_hits = 0;
      for (int pos = cfg.n + 1; pos <= cfg.n + cfg.k; ++pos)
        for (int b = 0; b < 2; ++b)
          out.stage1_argmax_hits +=
              diag.strongest_key(pos, b) == out.task.order[pos - cfg.n - 1];
    } else if (stage == 1) {
      trainer.snapshot(val.gt_tokens.front(), step, record);
      RngStream check_rng(cfg.seed, mix_keys({kStreamVal, 77}));
      out.one_hot = check_one_hot_attention(trainer.params(), trainer.emb(), out.task, 0.1,
                                            std::min<std::uint64_t>(cfg.val_size, 512), check_rng,
                                            cfg.threads);
    }
  }

  record.halt_reason = perfect ? "perfect" : "budget-exceeded";
  if (perfect) record.samples_at_perfect = samples_seen;
  out.final_eval = trainer.eval(val);
  out.params = trainer.params();
  return out;
}

SweepResult sweep(const TrainConfig& base, std::span<const int> k_values,
                  std::span<const double> lr_grid, int n_seeds, bool cot_both, int threads) {
  if (k_values.empty() || lr_grid.empty() || n_seeds < 1)
    throw std::invalid_argument("sweep: empty grid");
  std::vector<bool> cots = cot_both ? std::vector<bool>{true, false}
                                    : std::vector<bool>{base.cot};

  struct CellKey {
    int k;
    bool cot;
    int lr_index;
    int seed_index;
  };
  std::vector<CellKey> keys;
  for (int k : k_values)
    for (bool cot : cots)
      for (int li = 0; li < static_cast<int>(lr_grid.size()); ++li)
        for (int si = 0; si < n_seeds; ++si) keys.push_back({k, cot, li, si});

  SweepResult result;
  result.cells.resize(keys.size());
  for_each_chunk(keys.size(), 1, threads, [&](const ChunkRange& r) {
    const CellKey& key = keys[r.begin];
    TrainConfig cfg = base;
    cfg.k = key.k;
    cfg.cot = key.cot;
    cfg.lr = lr_grid[key.lr_index];
    cfg.threads = 1;  // cells own the parallelism
    cfg.seed = mix_keys({base.seed, static_cast<std::uint64_t>(key.k),
                         static_cast<std::uint64_t>(key.cot),
                         static_cast<std::uint64_t>(key.lr_index),
                         static_cast<std::uint64_t>(key.seed_index)});
    SweepCell cell;
    cell.n = cfg.n;
    cell.k = key.k;
    cell.cot = key.cot;
    cell.lr = cfg.lr;
    cell.seed_index = key.seed_index;
    try {
      SampleComplexity sc = measure_sample_complexity(cfg);
      cell.samples = sc.samples;
      cell.halt_reason = sc.halt_reason;
    } catch (const std::exception& e) {
      cell.halt_reason = std::string("error: ") + e.what();
    }
    result.cells[r.begin] = std::move(cell);
  });

  // best over lr of the median over seeds; runs that never reached perfect
  // count as larger than any finite value
  for (int k : k_values) {
    for (bool cot : cots) {
      SweepSummaryRow row;
      row.k = k;
      row.cot = cot;
      for (int li = 0; li < static_cast<int>(lr_grid.size()); ++li) {
        std::vector<std::optional<std::uint64_t>> vals;
        for (const auto& cell : result.cells)
          if (cell.k == k && cell.cot == cot && cell.lr == lr_grid[li])
            vals.push_back(cell.samples);
        std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) {
          if (a.has_value() != b.has_value()) return a.has_value();
          if (!a.has_value()) return false;
          return *a < *b;
        });
        const auto median = vals[(vals.size() - 1) / 2];
        if (median.has_value() && (!row.best_median.has_value() || *median < *row.best_median)) {
          row.best_median = median;
          row.best_lr = lr_grid[li];
        }
      }
      result.summary.push_back(row);
    }
  }
  return result;
}

}  // namespace parity
