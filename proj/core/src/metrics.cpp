#include "parity/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "parity/parallel.hpp"

namespace parity {

double normalized_attention_entropy(const Matrix& pattern) {
  if (pattern.rows() != pattern.cols())
    throw std::invalid_argument("normalized_attention_entropy: pattern must be square");
  const std::size_t t = pattern.rows();
  if (t < 2) throw std::invalid_argument("normalized_attention_entropy: need T >= 2");
  double best = 1.0;
  std::vector<double> col;
  for (std::size_t i = 1; i < t; ++i) {  // column index i = position i+1, so i >= 2
    col.assign(i + 1, 0.0);
    for (std::size_t j = 0; j <= i; ++j) col[j] = pattern(j, i);
    const double h = shannon_entropy(col) / std::log(static_cast<double>(i + 1));
    best = std::min(best, h);
  }
  return best;
}

double EntropyReport::min_value() const {
  double v = 1.0;
  for (const auto& r : rows) v = std::min(v, r.mean_normalized_entropy);
  return v;
}

namespace {
// Ordered mean of per-input, per-head entropies. pattern_fn fills `values`
// (one entry per head) for one input.
EntropyReport averaged(std::size_t n_inputs, std::size_t n_heads, int threads,
                       const std::function<void(std::size_t, std::vector<double>&)>& per_input,
                       const std::function<EntropyReport::Row(std::size_t, double)>& row_of) {
  if (n_inputs == 0) throw std::invalid_argument("average_entropy: empty dataset");
  constexpr std::size_t kChunk = 64;
  const std::size_t n_chunks = (n_inputs + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(n_chunks);
  for_each_chunk(n_inputs, kChunk, threads, [&](const ChunkRange& r) {
    auto& acc = partial[r.index];
    acc.assign(n_heads, 0.0);
    std::vector<double> values(n_heads);
    for (std::size_t s = r.begin; s < r.end; ++s) {
      per_input(s, values);
      for (std::size_t h = 0; h < n_heads; ++h) acc[h] += values[h];
    }
  });
  std::vector<double> sums(n_heads, 0.0);
  for (const auto& acc : partial)
    for (std::size_t h = 0; h < n_heads; ++h) sums[h] += acc[h];
  EntropyReport report;
  for (std::size_t h = 0; h < n_heads; ++h)
    report.rows.push_back(row_of(h, sums[h] / static_cast<double>(n_inputs)));
  return report;
}
}  // namespace

EntropyReport average_entropy(const GptParams& params,
                              std::span<const std::vector<std::uint8_t>> inputs, int threads) {
  const std::size_t n_heads =
      static_cast<std::size_t>(params.config.layers) * params.config.heads;
  return averaged(
      inputs.size(), n_heads, threads,
      [&](std::size_t s, std::vector<double>& values) {
        const GptForward f = gpt_forward(params, inputs[s]);
        for (std::size_t h = 0; h < n_heads; ++h)
          values[h] = normalized_attention_entropy(f.attention[h]);
      },
      [&](std::size_t h, double mean) {
        return EntropyReport::Row{static_cast<int>(h) / params.config.heads + 1,
                                  static_cast<int>(h) % params.config.heads + 1, mean};
      });
}

EntropyReport average_entropy(const SimplifiedParams& params, const EmbeddingTable& emb,
                              std::span<const std::vector<std::uint8_t>> inputs, int threads) {
  return averaged(
      inputs.size(), 1, threads,
      [&](std::size_t s, std::vector<double>& values) {
        const ForwardTrace tr = forward(params, emb, inputs[s]);
        values[0] = normalized_attention_entropy(tr.pattern);
      },
      [](std::size_t, double mean) { return EntropyReport::Row{1, 1, mean}; });
}

void save_entropy_csv(const EntropyReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "layer,head,mean_normalized_entropy\n";
  for (const auto& r : report.rows)
    out << r.layer << ',' << r.head << ',' << format_double(r.mean_normalized_entropy) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

int PhaseDiagnostics::strongest_key(int pos, int bit) const {
  const double* row = delta.row(2 * (pos - n - 1) + bit);
  int best_j = 1;
  double best = -1.0;
  for (int j = 1; j <= n + k; ++j) {
    const double v = std::max(std::abs(row[2 * (j - 1)]), std::abs(row[2 * (j - 1) + 1]));
    if (v > best) {
      best = v;
      best_j = j;
    }
  }
  return best_j;
}

PhaseDiagnostics phase_diagnostics(const SimplifiedParams& params, const EmbeddingTable& emb,
                                   const ParityTask& task) {
  if (!params.has_nu())
    throw std::invalid_argument(
        "phase_diagnostics: model has no retained init coefficients (hand-built weights?)");
  if (params.n != task.n || params.k != task.k)
    throw std::invalid_argument("phase_diagnostics: task does not match params");
  PhaseDiagnostics diag;
  diag.n = params.n;
  diag.k = params.k;
  diag.d = params.d;
  diag.kappa = Matrix(2 * params.k, params.d);
  for (int pos = params.n + 1; pos <= params.n + params.k; ++pos) {
    for (int b = 0; b < 2; ++b) {
      double* row = diag.kappa.row(2 * (pos - params.n - 1) + b);
      for (int r = 0; r < 2 * params.m; ++r) {
        if (params.nu_at(r, pos, b) <= 0) continue;
        const double coef = -params.h[r];
        const double* wright = params.W.row(r) + params.d;
        for (int l = 0; l < params.d; ++l) row[l] += coef * wright[l];
      }
    }
  }
  const int nk = params.n + params.k;
  Matrix etab(params.d, 2 * nk);
  for (int j = 1; j <= nk; ++j)
    for (int b = 0; b < 2; ++b) {
      const auto e = emb.vec(j, b);
      for (int l = 0; l < params.d; ++l) etab(l, 2 * (j - 1) + b) = e[l];
    }
  diag.delta = matmul(diag.kappa, etab);
  return diag;
}

void export_attention(const AttentionRecord& record, std::span<const int> secret_rows,
                      const std::filesystem::path& path) {
  save_matrix_csv(record.pattern, path);
  nlohmann::json j;
  j["layer"] = record.layer;
  j["head"] = record.head;
  j["input_id"] = record.input_id;
  j["secret_rows"] = std::vector<int>(secret_rows.begin(), secret_rows.end());
  j["t"] = record.pattern.rows();
  auto side = path;
  side += ".meta.json";
  std::ofstream out(side);
  if (!out) throw std::runtime_error("cannot open for writing: " + side.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + side.string());
}

}  // namespace parity
