// Batch kernel for the simplified model. The embedding table is frozen and a
// sequence position only ever holds one of two vectors, so per update step all
// pairwise attention scores and all W projections of table vectors can be
// precomputed once (2T x 2T / 2T x 2m tables); per-sequence work then reduces
// to table lookups. Produces the same forward outputs and exact batch-summed
// gradients as the reference path, up to floating point reassociation.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "parity/data.hpp"
#include "parity/matrix.hpp"
#include "parity/simplified.hpp"

namespace parity {

class SimplifiedTableKernel {
 public:
  SimplifiedTableKernel(const EmbeddingTable& emb, int t_max);

  // Rebuild the score/projection tables for the current parameters. Must be
  // called after every parameter update and before any other member.
  void refresh(const SimplifiedParams& params);

  // Model outputs at the given 1-based positions for a token prefix
  // (tokens[j] sits at position j+1). positions must be <= tokens.size().
  void outputs_at(std::span<const std::uint8_t> tokens, std::span<const int> positions,
                  std::span<double> y_out) const;

  // Attention distribution of 1-based column `col` (length col).
  std::vector<double> pattern_column(std::span<const std::uint8_t> tokens, int col) const;

  struct GradAccum {
    double loss = 0.0;
    std::uint64_t scored = 0;
    Matrix cl, ca;  // 2T x 2m coefficient tables for the two halves of W
    Matrix dz;      // 2T x 2T score-gradient table, row = key id, col = query id
    void init(int two_t, int width);
    void merge_from(const GradAccum& other);

    // scratch, valid between accumulate calls on the same accumulator
    std::vector<double> z, p, pre, q, s;
  };

  // Adds the loss and gradient contributions of one sequence (sum over its
  // scored positions) into acc.
  void accumulate(const BitSequence& seq, bool cot, GradAccum& acc) const;

  // Collapses an accumulator into parameter-space gradients (batch sum).
  SimplifiedGrads finalize(const GradAccum& acc) const;

  int t_max() const { return t_max_; }

 private:
  int cid(int pos, int bit) const { return 2 * (pos - 1) + bit; }

  const EmbeddingTable* emb_;
  const SimplifiedParams* params_ = nullptr;
  int t_max_;
  int d_;
  int width_ = 0;
  Matrix etab_;     // d x 2T
  Matrix etab_t_;   // 2T x d
  Matrix score_q_;  // 2T x 2T, row = query id, col = key id
  Matrix wl_t_;     // 2T x 2m, <W[r, 0:d), e_cid>
  Matrix wa_t_;     // 2T x 2m, <W[r, d:2d), e_cid>
};

}  // namespace parity
