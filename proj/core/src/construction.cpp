#include "parity/construction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "parity/parallel.hpp"

namespace parity {

std::vector<double> triangle_coeffs(int k) {
  if (k < 1) throw std::invalid_argument("triangle_coeffs: k must be positive");
  const int m = k + 1;
  std::vector<double> a(2 * m);
  for (int r = 1; r <= 2 * m; ++r) {
    double v;
    if (r <= m)
      v = -4.0 * ((r + 1) / 2) + 4.0;  // ceil(r/2) for integer r
    else if (r == m + 1)
      v = 1.0;
    else
      v = -4.0 * ((r - m) / 2) + 2.0;  // floor((r-m)/2)
    a[r - 1] = v;
  }
  return a;
}

double triangle_readout(int s, int k) {
  if (s < 0 || s > k)
    throw std::invalid_argument("triangle_readout: need 0 <= s <= k, got s=" + std::to_string(s));
  const int m = k + 1;
  const auto a = triangle_coeffs(k);
  double acc = 0.0;
  for (int r = 1; r <= 2 * m; ++r) {
    const double pre = a[r - 1] + 2.0 * s;
    if (pre > 0.0) acc += (r <= m ? pre : -pre);
  }
  return acc;
}

namespace {
// Solve g * x = rhs (g square, destroyed) by partial-pivot LU; x overwrites
// rhs. Returns max|u_ii| / min|u_ii| as a cheap condition estimate.
double lu_solve(Matrix& g, Matrix& rhs) {
  const std::size_t n = g.rows();
  if (g.cols() != n || rhs.rows() != n) throw std::invalid_argument("lu_solve: bad shapes");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  double max_piv = 0.0, min_piv = 1e300;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t best = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(g(r, col)) > std::abs(g(best, col))) best = r;
    if (best != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(g(col, c), g(best, c));
      for (std::size_t c = 0; c < rhs.cols(); ++c) std::swap(rhs(col, c), rhs(best, c));
    }
    const double piv = g(col, col);
    if (piv == 0.0) return 1e300;
    max_piv = std::max(max_piv, std::abs(piv));
    min_piv = std::min(min_piv, std::abs(piv));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = g(r, col) / piv;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) g(r, c) -= f * g(col, c);
      for (std::size_t c = 0; c < rhs.cols(); ++c) rhs(r, c) -= f * rhs(col, c);
    }
  }
  for (std::size_t col = n; col-- > 0;) {
    const double inv = 1.0 / g(col, col);
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
      double acc = rhs(col, c);
      for (std::size_t k2 = col + 1; k2 < n; ++k2) acc -= g(col, k2) * rhs(k2, c);
      rhs(col, c) = acc * inv;
    }
  }
  return max_piv / min_piv;
}
}  // namespace

ConstructionSpec build_construction_spec(const ParityTask& task, const EmbeddingTable& emb,
                                         double margin) {
  task.validate();
  if (emb.t() < task.n + 1)
    throw std::invalid_argument("build_construction_spec: embedding table shorter than n+1");
  ConstructionSpec spec;
  spec.k = task.k;
  spec.d = emb.d();
  spec.m = task.k + 1;
  spec.margin = margin;
  spec.b_coef = 2.0 * task.k;
  spec.a = triangle_coeffs(task.k);

  const int rows = 2 * task.k;
  spec.m_embed = Matrix(rows, spec.d);
  for (int i = 0; i < task.k; ++i)
    for (int b = 0; b < 2; ++b) {
      const auto e = emb.vec(task.secret[i], b);
      std::copy(e.begin(), e.end(), spec.m_embed.row(2 * i + b));
    }

  // u rows solve (M M^T) Y = M; then <u[p], m_embed[p']> = 1(p = p').
  Matrix gram = matmul(spec.m_embed, transpose(spec.m_embed));
  Matrix y = spec.m_embed;
  spec.cond = lu_solve(gram, y);
  if (!(spec.cond < 1e8))
    throw std::runtime_error(
        "construction: secret-embedding Gram matrix is ill conditioned (estimate " +
        std::to_string(spec.cond) + "); increase d or redraw the embeddings with a new seed");
  spec.u = std::move(y);

  spec.big_u.assign(spec.d, 0.0);
  spec.big_v.assign(spec.d, 0.0);
  for (int i = 0; i < task.k; ++i) {
    const double* u0 = spec.u.row(2 * i);
    const double* u1 = spec.u.row(2 * i + 1);
    for (int l = 0; l < spec.d; ++l) {
      spec.big_u[l] += u1[l];
      spec.big_v[l] += u0[l] + u1[l];
    }
  }
  return spec;
}

SimplifiedParams build_exact_weights(const ParityTask& task, const EmbeddingTable& emb,
                                     double margin) {
  if (margin < 0) margin = default_margin(task.n);
  const ConstructionSpec spec = build_construction_spec(task, emb, margin);
  const int d = emb.d();
  const int m = spec.m;

  SimplifiedParams p;
  p.n = task.n;
  p.k = task.k;
  p.d = d;
  p.m = m;
  p.eps = 0.0;

  const auto sep = emb.vec(task.n + 1, 0);
  p.A = Matrix(d, d);
  for (int a = 0; a < d; ++a) {
    const double va = margin * spec.big_v[a];
    double* row = p.A.row(a);
    for (int b = 0; b < d; ++b) row[b] = va * sep[b];
  }

  p.W = Matrix(2 * m, 2 * d);
  for (int r = 0; r < 2 * m; ++r) {
    double* row = p.W.row(r);
    const double ar = spec.a[r];
    for (int l = 0; l < d; ++l) {
      row[l] = ar * sep[l];
      row[d + l] = spec.b_coef * spec.big_u[l];
    }
  }

  p.h.assign(2 * m, 0.0);
  for (int r = 0; r < m; ++r) p.h[r] = 1.0;
  for (int r = m; r < 2 * m; ++r) p.h[r] = -1.0;
  return p;
}

VerificationReport verify_perfect_accuracy(const SimplifiedParams& params,
                                           const EmbeddingTable& emb, const ParityTask& task,
                                           VerifyMode mode, std::uint64_t samples, RngStream& rng,
                                           int threads) {
  task.validate();
  const int n = task.n;
  if (mode == VerifyMode::kExhaustive && n > 20)
    throw std::invalid_argument("verify_perfect_accuracy: exhaustive mode limited to n <= 20");
  const std::uint64_t total = mode == VerifyMode::kExhaustive ? (1ull << n) : samples;
  if (total == 0) throw std::invalid_argument("verify_perfect_accuracy: nothing to test");

  std::vector<bool> is_secret(static_cast<std::size_t>(n) + 2, false);
  for (int j : task.secret) is_secret[static_cast<std::size_t>(j)] = true;

  struct Partial {
    std::uint64_t correct = 0;
    double min_margin = 1e300;
    double max_leak = 0.0;
  };
  constexpr std::size_t kChunk = 512;
  const std::size_t n_chunks = (total + kChunk - 1) / kChunk;
  std::vector<Partial> partials(n_chunks);

  for_each_chunk(total, kChunk, threads, [&](const ChunkRange& r) {
    Partial& acc = partials[r.index];
    RngStream chunk_rng = rng.derive(r.index);
    std::vector<std::uint8_t> tokens(static_cast<std::size_t>(n) + 1, 0);
    for (std::uint64_t x = r.begin; x < r.end; ++x) {
      if (mode == VerifyMode::kExhaustive) {
        for (int i = 0; i < n; ++i)
          tokens[i] = static_cast<std::uint8_t>((x >> (n - 1 - i)) & 1);
      } else {
        for (int i = 0; i < n; ++i) tokens[i] = static_cast<std::uint8_t>(chunk_rng.next_bit());
      }
      tokens[n] = 0;
      const ForwardTrace tr = forward(params, emb, tokens);
      const int want = parity_eval(task, {tokens.data(), static_cast<std::size_t>(n)});
      if (predict(tr, n + 1) == want) acc.correct += 1;
      acc.min_margin = std::min(acc.min_margin, std::abs(tr.y_at(n + 1)));
      double leak = 0.0;
      for (int j = 1; j <= n + 1; ++j)
        if (!is_secret[static_cast<std::size_t>(j)]) leak += tr.pattern(j - 1, n);
      acc.max_leak = std::max(acc.max_leak, leak);
    }
  });

  VerificationReport report;
  report.inputs_tested = total;
  report.exhaustive = mode == VerifyMode::kExhaustive;
  std::uint64_t correct = 0;
  double min_margin = 1e300, max_leak = 0.0;
  for (const auto& p : partials) {
    correct += p.correct;
    min_margin = std::min(min_margin, p.min_margin);
    max_leak = std::max(max_leak, p.max_leak);
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  report.min_margin = min_margin;
  report.max_leak = max_leak;
  report.passed = correct == total;
  return report;
}

VerificationReport check_one_hot_attention(const SimplifiedParams& params,
                                           const EmbeddingTable& emb, const ParityTask& task,
                                           double tol, std::uint64_t batch, RngStream& rng,
                                           int threads) {
  task.validate();
  if (batch == 0) throw std::invalid_argument("check_one_hot_attention: empty batch");
  constexpr std::size_t kChunk = 128;
  const std::size_t n_chunks = (batch + kChunk - 1) / kChunk;
  std::vector<double> partial(n_chunks, 0.0);

  for_each_chunk(batch, kChunk, threads, [&](const ChunkRange& r) {
    RngStream chunk_rng = rng.derive(r.index);
    double worst = 0.0;
    for (std::uint64_t s = r.begin; s < r.end; ++s) {
      const BitSequence seq = gen_sequence(task, /*cot=*/true, chunk_rng);
      const ForwardTrace tr = forward(params, emb, seq);
      for (int i = task.n + 1; i <= task.n + task.k; ++i) {
        const int target = task.order[i - task.n - 1];
        for (int j = 1; j <= i; ++j) {
          const double want = j == target ? 1.0 : 0.0;
          worst = std::max(worst, std::abs(tr.pattern(j - 1, i - 1) - want));
        }
      }
    }
    partial[r.index] = worst;
  });

  VerificationReport report;
  report.inputs_tested = batch;
  for (double w : partial) report.max_deviation = std::max(report.max_deviation, w);
  report.passed = report.max_deviation <= tol;
  return report;
}

}  // namespace parity
