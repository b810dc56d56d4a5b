// Hand-built weight configuration that solves the no-chain parity task
// exactly: indicator vectors recovered from the secret-index embeddings place
// uniform attention mass on the secret set at the answer column, and a
// triangle-wave ReLU readout maps the resulting bit count to the parity sign.
// Also the post-training one-hot attention check.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parity/data.hpp"
#include "parity/matrix.hpp"
#include "parity/simplified.hpp"

namespace parity {

// Readout offsets a_r for width 2m, m = k+1 (1-based r):
//   r <= m:        -4*ceil(r/2) + 4
//   r == m+1:       1
//   m+2 <= r <= 2m: -4*floor((r-m)/2) + 2
std::vector<double> triangle_coeffs(int k);

// sum_{r<=m} relu(a_r + 2s) - sum_{r>m} relu(a_r + 2s); equals (-1)^(s+1) for
// every 0 <= s <= k.
double triangle_readout(int s, int k);

struct ConstructionSpec {
  int k = 0;
  int d = 0;
  int m = 0;         // k + 1
  double margin = 0; // attention score placed on secret keys at the answer column
  Matrix m_embed;    // 2k x d, row 2i+b = embedding of (i-th secret index, bit b)
  Matrix u;          // 2k x d indicator rows: <u[p], m_embed[p']> = 1(p == p')
  std::vector<double> big_u;  // sum of the bit-1 indicator rows
  std::vector<double> big_v;  // sum over secrets of (u_{j,0} + u_{j,1})
  std::vector<double> a;      // 2m readout offsets
  double b_coef = 0;          // 2k
  double cond = 0;            // condition estimate of m_embed * m_embed^T
};

inline double default_margin(int n) { return 40.0 * std::log(static_cast<double>(n)); }

// Throws std::runtime_error when m_embed*m_embed^T is ill conditioned
// (estimate >= 1e8); the message advises a larger d or a new embedding seed.
ConstructionSpec build_construction_spec(const ParityTask& task, const EmbeddingTable& emb,
                                         double margin);

// The full weight configuration: A = margin * V e_{n+1,0}^T,
// W[r, 0:d) = a_r e_{n+1,0}, W[r, d:2d) = 2k * U, h = +-1 per half.
SimplifiedParams build_exact_weights(const ParityTask& task, const EmbeddingTable& emb,
                                     double margin = -1.0);  // margin < 0 -> default_margin(n)

enum class VerifyMode { kExhaustive, kSampled };

struct VerificationReport {
  std::uint64_t inputs_tested = 0;
  bool exhaustive = false;
  double accuracy = 0.0;
  double min_margin = 0.0;         // min |y[n+1]| over inputs
  double max_leak = 0.0;           // max attention mass outside the secret set at column n+1
  double max_deviation = 0.0;      // one-hot check only
  bool passed = false;
  std::string note;
};

// Runs the model over every input (mode exhaustive, n <= 20) or `samples`
// random inputs, comparing the answer-column prediction with the parity.
VerificationReport verify_perfect_accuracy(const SimplifiedParams& params,
                                           const EmbeddingTable& emb, const ParityTask& task,
                                           VerifyMode mode, std::uint64_t samples, RngStream& rng,
                                           int threads);

// Over a batch of chain-layout validation sequences: max over chain columns i
// and keys j <= i of |P[j,i] - 1(j = key processed at step i)|; passes iff
// the max deviation is <= tol.
VerificationReport check_one_hot_attention(const SimplifiedParams& params,
                                           const EmbeddingTable& emb, const ParityTask& task,
                                           double tol, std::uint64_t batch, RngStream& rng,
                                           int threads);

}  // namespace parity
