// Small trainable decoder-only transformer over the {0,1} vocabulary:
// pre-layernorm residual blocks, multi-head causal self attention with
// trainable position embeddings, GELU FFN, full manual backpropagation and
// Adam. Parameters live in one flat vector with a named-tensor registry so the
// optimizer, finite differencing and checkpointing all walk the same storage.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "parity/matrix.hpp"
#include "parity/rng.hpp"

namespace parity {

struct GptConfig {
  int layers = 1;
  int heads = 1;
  int d_model = 128;
  int d_ff = 512;
  int t_max = 128;
  double ln_eps = 1e-5;
  double init_std = 0.02;
  bool tie_output = false;  // reuse the token embedding as the output projection

  int head_dim() const { return d_model / heads; }
  void validate() const;
};

struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  bool is_weight = false;  // scaled-normal init (vs zeros / ln-gain ones)
  std::size_t size() const { return rows * cols; }
};

std::vector<TensorSpec> gpt_tensor_layout(const GptConfig& config);

struct GptParams {
  GptConfig config;
  std::vector<double> flat;
  std::vector<TensorSpec> layout;

  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
  const TensorSpec& spec(const std::string& name) const;
};

GptParams gpt_init(const GptConfig& config, RngStream& rng);

struct GptForward {
  Matrix logits;                   // 2 x T, logits(v, i) for position i+1
  std::vector<Matrix> attention;   // layers*heads matrices, T x T column-stochastic
                                   // (column i = distribution of query i over keys j <= i)
  const Matrix& pattern(int layer, int head, int heads) const {
    return attention[static_cast<std::size_t>(layer) * heads + head];
  }
};

// tokens[j] in {0,1} is the token at position j+1; tokens.size() <= t_max.
GptForward gpt_forward(const GptParams& params, std::span<const std::uint8_t> tokens);

struct GptGradsResult {
  double loss = 0.0;
  std::vector<double> grads;  // same layout as params.flat
};

// Mean cross entropy over the scored positions (1-based; position i predicts
// the token at i+1), with exact gradients for every parameter.
GptGradsResult gpt_loss_and_backward(const GptParams& params, std::span<const std::uint8_t> tokens,
                                     std::span<const int> scored_positions);

// Batched form of the above: mean over (sequence, scored position) pairs.
// Chunked deterministically; results do not depend on the worker count.
GptGradsResult gpt_batch_loss_backward(const GptParams& params,
                                       std::span<const std::vector<std::uint8_t>> batch,
                                       std::span<const int> scored_positions, int threads);

struct AdamState {
  std::vector<double> m;  // first moments
  std::vector<double> v;  // second moments
  std::int64_t step = 0;

  static AdamState for_size(std::size_t n) { return {std::vector<double>(n), std::vector<double>(n), 0}; }
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Standard bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hyper);

void save_gpt(const std::filesystem::path& path, const GptParams& params, std::uint64_t seed);
GptParams load_gpt(const std::filesystem::path& path, std::uint64_t* seed_out = nullptr);

}  // namespace parity
