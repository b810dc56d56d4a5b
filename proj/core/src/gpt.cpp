#include "parity/gpt.hpp"

#include <cmath>
#include <stdexcept>

#include "parity/checkpoint.hpp"
#include "parity/parallel.hpp"

namespace parity {

void GptConfig::validate() const {
  if (layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 || t_max < 1)
    throw std::invalid_argument("gpt config: all dimensions must be >= 1");
  if (d_model % heads != 0) throw std::invalid_argument("gpt config: d_model % heads != 0");
  if (ln_eps <= 0) throw std::invalid_argument("gpt config: ln_eps must be positive");
}

std::vector<TensorSpec> gpt_tensor_layout(const GptConfig& c) {
  c.validate();
  std::vector<TensorSpec> specs;
  std::size_t offset = 0;
  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols, bool weight) {
    specs.push_back({name, rows, cols, offset, weight});
    offset += rows * cols;
  };
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto ff = static_cast<std::size_t>(c.d_ff);
  add("tok_emb", 2, d, true);
  add("pos_emb", static_cast<std::size_t>(c.t_max), d, true);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    add(p + "ln1_g", 1, d, false);
    add(p + "ln1_b", 1, d, false);
    add(p + "wq", d, d, true);  // stored input-major: y = x W
    add(p + "bq", 1, d, false);
    add(p + "wk", d, d, true);
    add(p + "bk", 1, d, false);
    add(p + "wv", d, d, true);
    add(p + "bv", 1, d, false);
    add(p + "wo", d, d, true);
    add(p + "bo", 1, d, false);
    add(p + "ln2_g", 1, d, false);
    add(p + "ln2_b", 1, d, false);
    add(p + "w1", d, ff, true);
    add(p + "b1", 1, ff, false);
    add(p + "w2", ff, d, true);
    add(p + "b2", 1, d, false);
  }
  add("lnf_g", 1, d, false);
  add("lnf_b", 1, d, false);
  if (!c.tie_output) {
    add("wout", d, 2, true);
    add("bout", 1, 2, false);
  }
  return specs;
}

std::span<double> GptParams::tensor(const std::string& name) {
  const auto& s = spec(name);
  return {flat.data() + s.offset, s.size()};
}

std::span<const double> GptParams::tensor(const std::string& name) const {
  const auto& s = spec(name);
  return {flat.data() + s.offset, s.size()};
}

const TensorSpec& GptParams::spec(const std::string& name) const {
  for (const auto& s : layout)
    if (s.name == name) return s;
  throw std::invalid_argument("no tensor named " + name);
}

GptParams gpt_init(const GptConfig& config, RngStream& rng) {
  GptParams p;
  p.config = config;
  p.layout = gpt_tensor_layout(config);
  std::size_t total = 0;
  for (const auto& s : p.layout) total += s.size();
  p.flat.assign(total, 0.0);
  for (const auto& s : p.layout) {
    double* t = p.flat.data() + s.offset;
    if (s.is_weight) {
      for (std::size_t i = 0; i < s.size(); ++i) t[i] = rng.normal(config.init_std);
    } else if (s.name.ends_with("_g")) {
      for (std::size_t i = 0; i < s.size(); ++i) t[i] = 1.0;
    }
    // biases and layernorm shifts stay zero
  }
  return p;
}

namespace {

struct ConstView {
  const double* p;
  std::size_t rows, cols;
  double operator()(std::size_t r, std::size_t c) const { return p[r * cols + c]; }
  const double* row(std::size_t r) const { return p + r * cols; }
};

ConstView view(const GptParams& params, const std::string& name) {
  const auto& s = params.spec(name);
  return {params.flat.data() + s.offset, s.rows, s.cols};
}

struct GradView {
  double* p;
  std::size_t rows, cols;
  double* row(std::size_t r) const { return p + r * cols; }
};

GradView gview(const GptParams& params, std::span<double> grads, const std::string& name) {
  const auto& s = params.spec(name);
  return {grads.data() + s.offset, s.rows, s.cols};
}

// y = x*w + b over row-major buffers; x is t x in, w is in x out.
void linear(const double* x, std::size_t t, std::size_t in, ConstView w, const double* b,
            double* y) {
  for (std::size_t i = 0; i < t; ++i) {
    double* yi = y + i * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) yi[c] = b ? b[c] : 0.0;
    const double* xi = x + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xi[k];
      const double* wk = w.row(k);
      for (std::size_t c = 0; c < w.cols; ++c) yi[c] += xv * wk[c];
    }
  }
}

// dx = dy * w^T; dw += x^T dy; db += column sums of dy.
void linear_backward(const double* x, const double* dy, std::size_t t, std::size_t in,
                     ConstView w, GradView dw, double* db, double* dx) {
  for (std::size_t i = 0; i < t; ++i) {
    const double* dyi = dy + i * w.cols;
    const double* xi = x + i * in;
    if (dx) {
      double* dxi = dx + i * in;
      for (std::size_t k = 0; k < in; ++k) {
        const double* wk = w.row(k);
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) acc += dyi[c] * wk[c];
        dxi[k] += acc;
      }
    }
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xi[k];
      double* dwk = dw.row(k);
      for (std::size_t c = 0; c < w.cols; ++c) dwk[c] += xv * dyi[c];
    }
    if (db)
      for (std::size_t c = 0; c < w.cols; ++c) db[c] += dyi[c];
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LnCache {
  std::vector<double> xhat;  // t x d
  std::vector<double> rstd;  // t
};

void layernorm(const double* x, std::size_t t, std::size_t d, const double* g, const double* b,
               double eps, LnCache& cache, double* y) {
  cache.xhat.resize(t * d);
  cache.rstd.resize(t);
  for (std::size_t i = 0; i < t; ++i) {
    const double* xi = x + i * d;
    double mean = 0.0;
    for (std::size_t l = 0; l < d; ++l) mean += xi[l];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t l = 0; l < d; ++l) {
      const double c = xi[l] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + eps);
    cache.rstd[i] = r;
    double* xh = cache.xhat.data() + i * d;
    double* yi = y + i * d;
    for (std::size_t l = 0; l < d; ++l) {
      xh[l] = (xi[l] - mean) * r;
      yi[l] = g[l] * xh[l] + b[l];
    }
  }
}

void layernorm_backward(const double* dy, std::size_t t, std::size_t d, const double* g,
                        const LnCache& cache, double* dg, double* db, double* dx) {
  for (std::size_t i = 0; i < t; ++i) {
    const double* dyi = dy + i * d;
    const double* xh = cache.xhat.data() + i * d;
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t l = 0; l < d; ++l) {
      const double dxh = dyi[l] * g[l];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xh[l];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    const double r = cache.rstd[i];
    double* dxi = dx + i * d;
    for (std::size_t l = 0; l < d; ++l) {
      const double dxh = dyi[l] * g[l];
      dxi[l] += r * (dxh - mean_dxhat - xh[l] * mean_dxhat_xhat);
      dg[l] += dyi[l] * xh[l];
      db[l] += dyi[l];
    }
  }
}

struct LayerActs {
  LnCache ln1, ln2;
  std::vector<double> a1, q, k, v, mix, x1, a2;  // t x d
  std::vector<double> hpre, hact;                // t x ff
  std::vector<Matrix> probs;                     // per head, t x t column-stochastic
};

struct Acts {
  std::size_t t = 0;
  std::vector<double> x0;  // t x d, updated per layer to the block input
  std::vector<std::vector<double>> xin;  // block inputs per layer (t x d)
  std::vector<LayerActs> layer;
  LnCache lnf;
  std::vector<double> af;      // t x d
  std::vector<double> logits;  // t x 2
};

void forward_sample(const GptParams& params, std::span<const std::uint8_t> tokens, Acts& acts) {
  const auto& c = params.config;
  const std::size_t t = tokens.size();
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto ff = static_cast<std::size_t>(c.d_ff);
  const std::size_t hd = static_cast<std::size_t>(c.head_dim());
  if (t == 0) throw std::invalid_argument("gpt_forward: empty sequence");
  if (t > static_cast<std::size_t>(c.t_max))
    throw std::invalid_argument("gpt_forward: sequence length " + std::to_string(t) +
                                " exceeds t_max=" + std::to_string(c.t_max));

  acts.t = t;
  acts.x0.resize(t * d);
  const auto tok = view(params, "tok_emb");
  const auto pos = view(params, "pos_emb");
  for (std::size_t i = 0; i < t; ++i) {
    const double* te = tok.row(tokens[i]);
    const double* pe = pos.row(i);
    double* xi = acts.x0.data() + i * d;
    for (std::size_t l = 0; l < d; ++l) xi[l] = te[l] + pe[l];
  }

  acts.layer.resize(c.layers);
  acts.xin.resize(c.layers);
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int li = 0; li < c.layers; ++li) {
    auto& L = acts.layer[li];
    const std::string p = "l" + std::to_string(li) + ".";
    acts.xin[li] = acts.x0;
    const double* x = acts.xin[li].data();

    L.a1.resize(t * d);
    layernorm(x, t, d, view(params, p + "ln1_g").p, view(params, p + "ln1_b").p, c.ln_eps, L.ln1,
              L.a1.data());

    L.q.resize(t * d);
    L.k.resize(t * d);
    L.v.resize(t * d);
    linear(L.a1.data(), t, d, view(params, p + "wq"), view(params, p + "bq").p, L.q.data());
    linear(L.a1.data(), t, d, view(params, p + "wk"), view(params, p + "bk").p, L.k.data());
    linear(L.a1.data(), t, d, view(params, p + "wv"), view(params, p + "bv").p, L.v.data());

    L.mix.assign(t * d, 0.0);
    L.probs.assign(static_cast<std::size_t>(c.heads), Matrix());
    std::vector<double> z(t);
    for (int h = 0; h < c.heads; ++h) {
      const std::size_t o = h * hd;
      Matrix& prob = L.probs[h];
      prob = Matrix(t, t);
      for (std::size_t i = 0; i < t; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* qi = L.q.data() + i * d + o;
          const double* kj = L.k.data() + j * d + o;
          double s = 0.0;
          for (std::size_t l = 0; l < hd; ++l) s += qi[l] * kj[l];
          s *= inv_sqrt_hd;
          z[j] = s;
          mx = std::max(mx, s);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          z[j] = std::exp(z[j] - mx);
          sum += z[j];
        }
        const double inv = 1.0 / sum;
        double* mi = L.mix.data() + i * d + o;
        for (std::size_t j = 0; j <= i; ++j) {
          const double pj = z[j] * inv;
          prob(j, i) = pj;
          const double* vj = L.v.data() + j * d + o;
          for (std::size_t l = 0; l < hd; ++l) mi[l] += pj * vj[l];
        }
      }
    }

    L.x1.resize(t * d);
    linear(L.mix.data(), t, d, view(params, p + "wo"), view(params, p + "bo").p, L.x1.data());
    for (std::size_t i = 0; i < t * d; ++i) L.x1[i] += x[i];

    L.a2.resize(t * d);
    layernorm(L.x1.data(), t, d, view(params, p + "ln2_g").p, view(params, p + "ln2_b").p,
              c.ln_eps, L.ln2, L.a2.data());

    L.hpre.resize(t * ff);
    linear(L.a2.data(), t, d, view(params, p + "w1"), view(params, p + "b1").p, L.hpre.data());
    L.hact.resize(t * ff);
    for (std::size_t i = 0; i < t * ff; ++i) L.hact[i] = gelu(L.hpre[i]);

    acts.x0.resize(t * d);
    linear(L.hact.data(), t, ff, view(params, p + "w2"), view(params, p + "b2").p, acts.x0.data());
    for (std::size_t i = 0; i < t * d; ++i) acts.x0[i] += L.x1[i];
  }

  acts.af.resize(t * d);
  layernorm(acts.x0.data(), t, d, view(params, "lnf_g").p, view(params, "lnf_b").p, c.ln_eps,
            acts.lnf, acts.af.data());

  acts.logits.resize(t * 2);
  if (c.tie_output) {
    for (std::size_t i = 0; i < t; ++i)
      for (int vtok = 0; vtok < 2; ++vtok) {
        const double* te = tok.row(vtok);
        const double* ai = acts.af.data() + i * d;
        double s = 0.0;
        for (std::size_t l = 0; l < d; ++l) s += ai[l] * te[l];
        acts.logits[i * 2 + vtok] = s;
      }
  } else {
    linear(acts.af.data(), t, d, view(params, "wout"), view(params, "bout").p,
           acts.logits.data());
  }
}

// Cross entropy at the scored positions, gradients into `grads` (same layout
// as params.flat). inv_count is 1/(batch * positions) for the batch mean.
double backward_sample(const GptParams& params, std::span<const std::uint8_t> tokens,
                       std::span<const int> scored, double inv_count, const Acts& acts,
                       std::span<double> grads) {
  const auto& c = params.config;
  const std::size_t t = acts.t;
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto ff = static_cast<std::size_t>(c.d_ff);
  const std::size_t hd = static_cast<std::size_t>(c.head_dim());
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  double loss = 0.0;
  std::vector<double> dlogits(t * 2, 0.0);
  for (int p1 : scored) {
    if (p1 < 1 || static_cast<std::size_t>(p1) >= t)
      throw std::invalid_argument("scored position out of range");
    const std::size_t i = static_cast<std::size_t>(p1) - 1;
    const int target = tokens[i + 1];
    const double l0 = acts.logits[i * 2], l1 = acts.logits[i * 2 + 1];
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
    const double z = e0 + e1;
    const double p0 = e0 / z, p1v = e1 / z;
    loss += -std::log((target ? p1v : p0));
    dlogits[i * 2] += (p0 - (target == 0 ? 1.0 : 0.0)) * inv_count;
    dlogits[i * 2 + 1] += (p1v - (target == 1 ? 1.0 : 0.0)) * inv_count;
  }

  std::vector<double> dx(t * d, 0.0);  // gradient w.r.t. block output
  const auto tok = view(params, "tok_emb");
  if (c.tie_output) {
    auto dtok = gview(params, grads, "tok_emb");
    for (std::size_t i = 0; i < t; ++i)
      for (int vtok = 0; vtok < 2; ++vtok) {
        const double g = dlogits[i * 2 + vtok];
        if (g == 0.0) continue;
        const double* te = tok.row(vtok);
        double* dte = dtok.row(vtok);
        const double* ai = acts.af.data() + i * d;
        double* dai = dx.data() + i * d;  // temporarily holds d af
        for (std::size_t l = 0; l < d; ++l) {
          dai[l] += g * te[l];
          dte[l] += g * ai[l];
        }
      }
  } else {
    linear_backward(acts.af.data(), dlogits.data(), t, d, view(params, "wout"),
                    gview(params, grads, "wout"), gview(params, grads, "bout").p, dx.data());
  }

  // dx currently holds d(af); run it through the final layernorm.
  {
    std::vector<double> daf = dx;
    std::fill(dx.begin(), dx.end(), 0.0);
    layernorm_backward(daf.data(), t, d, view(params, "lnf_g").p, acts.lnf,
                       gview(params, grads, "lnf_g").p, gview(params, grads, "lnf_b").p,
                       dx.data());
  }

  std::vector<double> da2(t * d), dhact(t * ff), dhpre(t * ff), dx1(t * d), dmix(t * d),
      da1(t * d), dq(t * d), dk(t * d), dv(t * d);
  for (int li = c.layers - 1; li >= 0; --li) {
    const auto& L = acts.layer[li];
    const std::string p = "l" + std::to_string(li) + ".";

    // x2 = x1 + fc2(gelu(fc1(ln2(x1)))); dx holds d(x2)
    std::fill(dhact.begin(), dhact.end(), 0.0);
    linear_backward(L.hact.data(), dx.data(), t, ff, view(params, p + "w2"),
                    gview(params, grads, p + "w2"), gview(params, grads, p + "b2").p,
                    dhact.data());
    for (std::size_t i = 0; i < t * ff; ++i) dhpre[i] = dhact[i] * gelu_grad(L.hpre[i]);
    std::fill(da2.begin(), da2.end(), 0.0);
    linear_backward(L.a2.data(), dhpre.data(), t, d, view(params, p + "w1"),
                    gview(params, grads, p + "w1"), gview(params, grads, p + "b1").p, da2.data());
    dx1 = dx;  // residual branch
    layernorm_backward(da2.data(), t, d, view(params, p + "ln2_g").p, L.ln2,
                       gview(params, grads, p + "ln2_g").p, gview(params, grads, p + "ln2_b").p,
                       dx1.data());

    // x1 = xin + wo(mix); dx1 holds d(x1)
    std::fill(dmix.begin(), dmix.end(), 0.0);
    linear_backward(L.mix.data(), dx1.data(), t, d, view(params, p + "wo"),
                    gview(params, grads, p + "wo"), gview(params, grads, p + "bo").p,
                    dmix.data());

    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    std::vector<double> dprob(t), dz(t);
    for (int h = 0; h < c.heads; ++h) {
      const std::size_t o = h * hd;
      const Matrix& prob = L.probs[h];
      for (std::size_t i = 0; i < t; ++i) {
        const double* dmi = dmix.data() + i * d + o;
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* vj = L.v.data() + j * d + o;
          double s = 0.0;
          for (std::size_t l = 0; l < hd; ++l) s += dmi[l] * vj[l];
          dprob[j] = s;
          dot += prob(j, i) * s;
          double* dvj = dv.data() + j * d + o;
          const double pj = prob(j, i);
          for (std::size_t l = 0; l < hd; ++l) dvj[l] += pj * dmi[l];
        }
        double* dqi = dq.data() + i * d + o;
        const double* qi = L.q.data() + i * d + o;
        for (std::size_t j = 0; j <= i; ++j) {
          const double dzj = prob(j, i) * (dprob[j] - dot) * inv_sqrt_hd;
          if (dzj == 0.0) continue;
          const double* kj = L.k.data() + j * d + o;
          double* dkj = dk.data() + j * d + o;
          for (std::size_t l = 0; l < hd; ++l) {
            dqi[l] += dzj * kj[l];
            dkj[l] += dzj * qi[l];
          }
        }
      }
    }

    std::fill(da1.begin(), da1.end(), 0.0);
    linear_backward(L.a1.data(), dq.data(), t, d, view(params, p + "wq"),
                    gview(params, grads, p + "wq"), gview(params, grads, p + "bq").p, da1.data());
    linear_backward(L.a1.data(), dk.data(), t, d, view(params, p + "wk"),
                    gview(params, grads, p + "wk"), gview(params, grads, p + "bk").p, da1.data());
    linear_backward(L.a1.data(), dv.data(), t, d, view(params, p + "wv"),
                    gview(params, grads, p + "wv"), gview(params, grads, p + "bv").p, da1.data());

    // xin enters ln1 and the residual; dx1 already carries the residual part.
    layernorm_backward(da1.data(), t, d, view(params, p + "ln1_g").p, L.ln1,
                       gview(params, grads, p + "ln1_g").p, gview(params, grads, p + "ln1_b").p,
                       dx1.data());
    dx = dx1;
  }

  auto dtok = gview(params, grads, "tok_emb");
  auto dpos = gview(params, grads, "pos_emb");
  for (std::size_t i = 0; i < t; ++i) {
    const double* dxi = dx.data() + i * d;
    double* dte = dtok.row(tokens[i]);
    double* dpe = dpos.row(i);
    for (std::size_t l = 0; l < d; ++l) {
      dte[l] += dxi[l];
      dpe[l] += dxi[l];
    }
  }
  return loss;
}

}  // namespace

GptForward gpt_forward(const GptParams& params, std::span<const std::uint8_t> tokens) {
  Acts acts;
  forward_sample(params, tokens, acts);
  GptForward out;
  const std::size_t t = acts.t;
  out.logits = Matrix(2, t);
  for (std::size_t i = 0; i < t; ++i) {
    out.logits(0, i) = acts.logits[i * 2];
    out.logits(1, i) = acts.logits[i * 2 + 1];
  }
  out.attention.reserve(static_cast<std::size_t>(params.config.layers) * params.config.heads);
  for (auto& L : acts.layer)
    for (auto& prob : L.probs) out.attention.push_back(std::move(prob));
  return out;
}

GptGradsResult gpt_loss_and_backward(const GptParams& params,
                                     std::span<const std::uint8_t> tokens,
                                     std::span<const int> scored_positions) {
  if (scored_positions.empty())
    throw std::invalid_argument("gpt_loss_and_backward: no scored positions");
  GptGradsResult out;
  out.grads.assign(params.flat.size(), 0.0);
  Acts acts;
  forward_sample(params, tokens, acts);
  const double inv = 1.0 / static_cast<double>(scored_positions.size());
  out.loss = inv * backward_sample(params, tokens, scored_positions, inv, acts, out.grads);
  return out;
}

GptGradsResult gpt_batch_loss_backward(const GptParams& params,
                                       std::span<const std::vector<std::uint8_t>> batch,
                                       std::span<const int> scored_positions, int threads) {
  if (batch.empty()) throw std::invalid_argument("gpt_batch_loss_backward: empty batch");
  if (scored_positions.empty())
    throw std::invalid_argument("gpt_batch_loss_backward: no scored positions");
  const double inv =
      1.0 / (static_cast<double>(batch.size()) * static_cast<double>(scored_positions.size()));

  constexpr std::size_t kChunk = 32;
  const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> chunk_grads(n_chunks);
  std::vector<double> chunk_loss(n_chunks, 0.0);

  for_each_chunk(batch.size(), kChunk, threads, [&](const ChunkRange& r) {
    auto& grads = chunk_grads[r.index];
    grads.assign(params.flat.size(), 0.0);
    Acts acts;
    for (std::size_t s = r.begin; s < r.end; ++s) {
      forward_sample(params, batch[s], acts);
      chunk_loss[r.index] +=
          backward_sample(params, batch[s], scored_positions, inv, acts, grads);
    }
  });

  GptGradsResult out;
  out.grads.assign(params.flat.size(), 0.0);
  for (std::size_t cidx = 0; cidx < n_chunks; ++cidx) {
    out.loss += chunk_loss[cidx];
    const auto& g = chunk_grads[cidx];
    for (std::size_t i = 0; i < g.size(); ++i) out.grads[i] += g[i];
  }
  out.loss *= inv;
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hyper) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (hyper.weight_decay != 0.0) g += hyper.weight_decay * params[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

void save_gpt(const std::filesystem::path& path, const GptParams& params, std::uint64_t seed) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["kind"] = "gpt";
  header["seed"] = seed;
  header["config"] = {{"layers", params.config.layers},   {"heads", params.config.heads},
                      {"d_model", params.config.d_model}, {"d_ff", params.config.d_ff},
                      {"t_max", params.config.t_max},     {"ln_eps", params.config.ln_eps},
                      {"init_std", params.config.init_std},
                      {"tie_output", params.config.tie_output}};
  CheckpointWriter w(path, header);
  for (const auto& s : params.layout)
    w.write_tensor(s.name, {params.flat.data() + s.offset, s.size()});
  w.finish();
}

GptParams load_gpt(const std::filesystem::path& path, std::uint64_t* seed_out) {
  CheckpointReader r(path);
  const auto& header = r.header();
  if (header.at("kind").get<std::string>() != "gpt")
    throw std::runtime_error("not a gpt checkpoint: " + path.string());
  const auto& jc = header.at("config");
  GptConfig c;
  c.layers = jc.at("layers").get<int>();
  c.heads = jc.at("heads").get<int>();
  c.d_model = jc.at("d_model").get<int>();
  c.d_ff = jc.at("d_ff").get<int>();
  c.t_max = jc.at("t_max").get<int>();
  c.ln_eps = jc.at("ln_eps").get<double>();
  c.init_std = jc.at("init_std").get<double>();
  c.tie_output = jc.at("tie_output").get<bool>();
  GptParams p;
  p.config = c;
  p.layout = gpt_tensor_layout(c);
  std::size_t total = 0;
  for (const auto& s : p.layout) total += s.size();
  p.flat.assign(total, 0.0);
  for (const auto& s : p.layout) r.read_tensor(s.name, {p.flat.data() + s.offset, s.size()});
  if (seed_out) *seed_out = header.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace parity
