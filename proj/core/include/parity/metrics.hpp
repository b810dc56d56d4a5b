// Attention sparsity measurement (normalized entropy), attention export, and
// the effective-linear-weight diagnostics of the simplified model.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "parity/data.hpp"
#include "parity/gpt.hpp"
#include "parity/matrix.hpp"
#include "parity/simplified.hpp"

namespace parity {

struct AttentionRecord {
  int layer = 1;  // 1-based
  int head = 1;
  std::uint64_t input_id = 0;
  Matrix pattern;  // T x T, column i = distribution of query i over keys j <= i
};

// min over columns i >= 2 of H(column i) / log i, in [0, 1]. 1 on uniform
// causal patterns, 0 as soon as any column (i >= 2) is one-hot. No smoothing:
// exact zeros contribute nothing via 0 log 0 = 0.
double normalized_attention_entropy(const Matrix& pattern);

struct EntropyReport {
  struct Row {
    int layer;
    int head;
    double mean_normalized_entropy;
  };
  std::vector<Row> rows;
  double min_value() const;
};

// Per-head means over teacher-forced full sequences.
EntropyReport average_entropy(const GptParams& params,
                              std::span<const std::vector<std::uint8_t>> inputs, int threads);
EntropyReport average_entropy(const SimplifiedParams& params, const EmbeddingTable& emb,
                              std::span<const std::vector<std::uint8_t>> inputs, int threads);

void save_entropy_csv(const EntropyReport& report, const std::filesystem::path& path);

// kappa[i][b] = -sum_r 1(nu_{r,i,b} > 0) h_r W[r, d:2d): the linear map the FFN
// applies to the attention output at chain position i with token value b.
// delta[i][b][j][b1] = <kappa[i][b], e_{j,b1}>.
struct PhaseDiagnostics {
  int n = 0, k = 0, d = 0;
  Matrix kappa;  // 2k x d, row 2*(i-n-1)+b
  Matrix delta;  // 2k x 2(n+k), column 2*(j-1)+b1

  std::span<const double> kappa_at(int pos, int bit) const {
    return kappa.row_span(2 * (pos - n - 1) + bit);
  }
  double delta_at(int pos, int bit, int j, int b1) const {
    return delta(2 * (pos - n - 1) + bit, 2 * (j - 1) + b1);
  }
  // argmax_j max_b1 |delta[i][b][j][b1]| over j in [1, n+k]
  int strongest_key(int pos, int bit) const;
};

// Requires params built with the retained +-eps draws; throws
// std::invalid_argument for hand-constructed weights without them.
PhaseDiagnostics phase_diagnostics(const SimplifiedParams& params, const EmbeddingTable& emb,
                                   const ParityTask& task);

// Pattern CSV plus a sidecar JSON marking the secret rows.
void export_attention(const AttentionRecord& record, std::span<const int> secret_rows,
                      const std::filesystem::path& path);

}  // namespace parity
