// The simplified one-block transformer: frozen hypercube token/position
// embeddings, a single full-matrix attention layer with causal mask, and a
// ReLU FFN applied to [embedding; attention output], read out through a frozen
// vector h. Forward keeps a full trace so the analytic gradients for A and W
// can be computed without recomputation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "parity/data.hpp"
#include "parity/matrix.hpp"
#include "parity/rng.hpp"

namespace parity {

// 2T vectors in {+1/sqrt(d), -1/sqrt(d)}^d, one per (position, bit). Frozen:
// there is no mutating access after construction.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int t, int d, std::vector<double> data);

  int t() const { return t_; }
  int d() const { return d_; }
  // pos is 1-based, bit in {0, 1}
  std::span<const double> vec(int pos, int bit) const {
    return {data_.data() + (static_cast<std::size_t>(pos - 1) * 2 + bit) * d_,
            static_cast<std::size_t>(d_)};
  }
  std::span<const double> raw() const { return data_; }

 private:
  int t_ = 0;
  int d_ = 0;
  std::vector<double> data_;
};

EmbeddingTable init_embeddings(int t, int d, RngStream& rng);

struct SimplifiedParams {
  int n = 0;
  int k = 0;
  int d = 0;
  int m = 0;       // FFN width is 2m
  double eps = 0;  // init coefficient scale
  Matrix A;        // d x d, trainable
  Matrix W;        // 2m x 2d, trainable; columns [0,d) act on the embedding,
                   // [d,2d) on the attention output
  std::vector<double> h;   // 2m, frozen readout
  std::vector<double> nu;  // 2m*k*2 drawn +-eps coefficients, kept for diagnostics;
                           // empty for hand-built weight configurations

  double nu_at(int r, int pos, int bit) const {  // pos in [n+1, n+k]
    return nu[(static_cast<std::size_t>(r) * k + (pos - n - 1)) * 2 + bit];
  }
  bool has_nu() const { return !nu.empty(); }
};

// Initialization used for training runs: A = 0, the attention-output half of W
// zero, and each FFN row seeded on the chain-position embeddings with
// independent +-eps coefficients; h is the fixed +-1/(2m) split readout.
SimplifiedParams init_params(const ParityTask& task, const EmbeddingTable& emb, int m, double eps,
                             RngStream& rng);

struct ForwardTrace {
  int t = 0;                       // sequence length
  Matrix embedded;                 // d x t, column c = embedding of position c+1
  Matrix scores;                   // t x t raw attention scores
  Matrix pattern;                  // t x t, column-stochastic with causal zeros
  Matrix attn_out;                 // d x t
  Matrix ffn_in;                   // 2d x t
  Matrix preact;                   // 2m x t
  std::vector<std::uint8_t> gate;  // 2m*t, 1 exactly where preact > 0
  std::vector<double> outputs;     // t

  double y_at(int pos) const { return outputs[static_cast<std::size_t>(pos - 1)]; }
  bool gate_at(int r, int pos) const {
    return gate[static_cast<std::size_t>(r) * t + (pos - 1)] != 0;
  }
};

struct SimplifiedGrads {
  Matrix dA;  // d x d
  Matrix dW;  // 2m x 2d
};

// tokens[j] is the token at position j+1; tokens.size() <= emb.t().
ForwardTrace forward(const SimplifiedParams& params, const EmbeddingTable& emb,
                     std::span<const std::uint8_t> tokens);
ForwardTrace forward(const SimplifiedParams& params, const EmbeddingTable& emb,
                     const BitSequence& seq);

struct HingeResult {
  double loss;
  double dyhat;  // subgradient in yhat; 0 at the kink
};
// max{(-1)^y yhat + 1, 0}
HingeResult hinge_loss(double yhat, int y);

// Positions whose outputs are scored: n+1..n+k with the chain, n+1 without.
std::vector<int> scored_positions(int n, int k, bool cot);

double sequence_loss(const ForwardTrace& trace, const BitSequence& seq, bool cot);

// Exact analytic gradients of sequence_loss w.r.t. A and W, holding h and the
// embeddings fixed. ReLU gates are taken from the trace.
SimplifiedGrads backward(const SimplifiedParams& params, const EmbeddingTable& emb,
                         const ForwardTrace& trace, const BitSequence& seq, bool cot);

// 1 if the output at the position is > 0, else 0 (exact zero predicts 0).
int predict(const ForwardTrace& trace, int position);

struct Completion {
  BitSequence seq;
  int answer = 0;
};

// Greedy decoding: separator appended to the prefix, then k chain tokens (cot)
// or the single answer token, re-running forward at every step.
Completion autoregressive_complete(const SimplifiedParams& params, const EmbeddingTable& emb,
                                   const ParityTask& task,
                                   std::span<const std::uint8_t> input_bits, bool cot);

// Checkpoint: JSON header with the scalar fields, then raw tensors. Exact
// round trip (load(save(p)) is bit identical).
void save_simplified(const std::filesystem::path& path, const SimplifiedParams& params,
                     const EmbeddingTable& emb, std::uint64_t seed);
struct SimplifiedCheckpoint {
  SimplifiedParams params;
  EmbeddingTable emb;
  std::uint64_t seed = 0;
};
SimplifiedCheckpoint load_simplified(const std::filesystem::path& path);

}  // namespace parity
