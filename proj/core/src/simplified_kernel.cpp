#include "parity/simplified_kernel.hpp"

#include <cmath>
#include <stdexcept>

namespace parity {

SimplifiedTableKernel::SimplifiedTableKernel(const EmbeddingTable& emb, int t_max)
    : emb_(&emb), t_max_(t_max), d_(emb.d()) {
  if (t_max < 1 || t_max > emb.t())
    throw std::invalid_argument("SimplifiedTableKernel: bad t_max");
  const int two_t = 2 * t_max_;
  etab_ = Matrix(d_, two_t);
  for (int pos = 1; pos <= t_max_; ++pos) {
    for (int b = 0; b < 2; ++b) {
      const auto e = emb.vec(pos, b);
      const int c = cid(pos, b);
      for (int l = 0; l < d_; ++l) etab_(l, c) = e[l];
    }
  }
  etab_t_ = transpose(etab_);
}

void SimplifiedTableKernel::refresh(const SimplifiedParams& params) {
  if (params.d != d_) throw std::invalid_argument("refresh: dimension mismatch");
  params_ = &params;
  width_ = 2 * params.m;
  const int two_t = 2 * t_max_;

  const Matrix ae = matmul(params.A, etab_);
  score_q_ = matmul(transpose(ae), etab_);

  Matrix wl_T(d_, width_), wa_T(d_, width_);
  for (int r = 0; r < width_; ++r) {
    const double* row = params.W.row(r);
    for (int l = 0; l < d_; ++l) {
      wl_T(l, r) = row[l];
      wa_T(l, r) = row[d_ + l];
    }
  }
  wl_t_ = matmul(etab_t_, wl_T);
  wa_t_ = matmul(etab_t_, wa_T);
  (void)two_t;
}

namespace {
// softmax over z[0..len), causal column of length len
void softmax_inplace(std::span<double> z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (auto& v : z) v *= inv;
}
}  // namespace

void SimplifiedTableKernel::outputs_at(std::span<const std::uint8_t> tokens,
                                       std::span<const int> positions,
                                       std::span<double> y_out) const {
  if (!params_) throw std::logic_error("outputs_at: refresh() not called");
  const int t = static_cast<int>(tokens.size());
  if (t > t_max_) throw std::invalid_argument("outputs_at: sequence longer than t_max");
  std::vector<double> z(t), pre(width_);
  for (std::size_t pi = 0; pi < positions.size(); ++pi) {
    const int p = positions[pi];
    if (p < 1 || p > t) throw std::invalid_argument("outputs_at: position out of range");
    const int qi = cid(p, tokens[p - 1]);
    const double* srow = score_q_.row(qi);
    for (int j = 0; j < p; ++j) z[j] = srow[cid(j + 1, tokens[j])];
    softmax_inplace({z.data(), static_cast<std::size_t>(p)});
    for (int r = 0; r < width_; ++r) pre[r] = wl_t_(qi, r);
    for (int j = 0; j < p; ++j) {
      const double pj = z[j];
      const double* wrow = wa_t_.row(cid(j + 1, tokens[j]));
      for (int r = 0; r < width_; ++r) pre[r] += pj * wrow[r];
    }
    double y = 0.0;
    for (int r = 0; r < width_; ++r)
      if (pre[r] > 0.0) y += params_->h[r] * pre[r];
    y_out[pi] = y;
  }
}

std::vector<double> SimplifiedTableKernel::pattern_column(std::span<const std::uint8_t> tokens,
                                                          int col) const {
  if (!params_) throw std::logic_error("pattern_column: refresh() not called");
  const int t = static_cast<int>(tokens.size());
  if (col < 1 || col > t) throw std::invalid_argument("pattern_column: column out of range");
  std::vector<double> z(static_cast<std::size_t>(col));
  const double* srow = score_q_.row(cid(col, tokens[col - 1]));
  for (int j = 0; j < col; ++j) z[j] = srow[cid(j + 1, tokens[j])];
  softmax_inplace(z);
  return z;
}

void SimplifiedTableKernel::GradAccum::init(int two_t, int width) {
  loss = 0.0;
  scored = 0;
  cl = Matrix(two_t, width);
  ca = Matrix(two_t, width);
  dz = Matrix(two_t, two_t);
}

void SimplifiedTableKernel::GradAccum::merge_from(const GradAccum& other) {
  loss += other.loss;
  scored += other.scored;
  axpy(cl, other.cl, 1.0);
  axpy(ca, other.ca, 1.0);
  axpy(dz, other.dz, 1.0);
}

void SimplifiedTableKernel::accumulate(const BitSequence& seq, bool cot, GradAccum& acc) const {
  if (!params_) throw std::logic_error("accumulate: refresh() not called");
  const int t = seq.length();
  if (t > t_max_) throw std::invalid_argument("accumulate: sequence longer than t_max");
  acc.z.resize(t);
  acc.p.resize(t);
  acc.s.resize(t);
  acc.pre.resize(width_);
  acc.q.resize(width_);

  for (const int p : scored_positions(seq.n, seq.k, cot)) {
    const int qi = cid(p, seq.at(p));
    const double* srow = score_q_.row(qi);
    for (int j = 1; j <= p; ++j) acc.z[j - 1] = srow[cid(j, seq.at(j))];
    std::span<double> soft(acc.z.data(), static_cast<std::size_t>(p));
    softmax_inplace(soft);

    for (int r = 0; r < width_; ++r) acc.pre[r] = wl_t_(qi, r);
    for (int j = 1; j <= p; ++j) {
      const double pj = soft[j - 1];
      const double* wrow = wa_t_.row(cid(j, seq.at(j)));
      for (int r = 0; r < width_; ++r) acc.pre[r] += pj * wrow[r];
    }
    double y = 0.0;
    for (int r = 0; r < width_; ++r)
      if (acc.pre[r] > 0.0) y += params_->h[r] * acc.pre[r];

    const auto [loss, gout] = hinge_loss(y, seq.at(p + 1));
    acc.loss += loss;
    acc.scored += 1;
    if (gout == 0.0) continue;

    for (int r = 0; r < width_; ++r)
      acc.q[r] = acc.pre[r] > 0.0 ? gout * params_->h[r] : 0.0;

    {
      double* clrow = acc.cl.row(qi);
      for (int r = 0; r < width_; ++r) clrow[r] += acc.q[r];
    }

    double wbar = 0.0;
    for (int j = 1; j <= p; ++j) {
      const int kj = cid(j, seq.at(j));
      const double pj = soft[j - 1];
      const double* wrow = wa_t_.row(kj);
      double* carow = acc.ca.row(kj);
      double dot = 0.0;
      for (int r = 0; r < width_; ++r) {
        carow[r] += pj * acc.q[r];
        dot += acc.q[r] * wrow[r];
      }
      acc.s[j - 1] = dot;
      wbar += pj * dot;
    }
    for (int j = 1; j <= p; ++j) {
      const int kj = cid(j, seq.at(j));
      acc.dz(kj, qi) += soft[j - 1] * (acc.s[j - 1] - wbar);
    }
  }
}

SimplifiedGrads SimplifiedTableKernel::finalize(const GradAccum& acc) const {
  if (!params_) throw std::logic_error("finalize: refresh() not called");
  SimplifiedGrads g;
  const Matrix dwl = matmul(transpose(acc.cl), etab_t_);  // 2m x d
  const Matrix dwa = matmul(transpose(acc.ca), etab_t_);
  g.dW = Matrix(width_, 2 * d_);
  for (int r = 0; r < width_; ++r) {
    double* row = g.dW.row(r);
    for (int l = 0; l < d_; ++l) {
      row[l] = dwl(r, l);
      row[d_ + l] = dwa(r, l);
    }
  }
  const Matrix edz = matmul(etab_, acc.dz);  // d x 2T
  g.dA = matmul(edz, etab_t_);
  return g;
}

}  // namespace parity
