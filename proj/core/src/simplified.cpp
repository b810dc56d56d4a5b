#include "parity/simplified.hpp"

#include <cmath>
#include <stdexcept>

#include "parity/checkpoint.hpp"

namespace parity {

EmbeddingTable::EmbeddingTable(int t, int d, std::vector<double> data)
    : t_(t), d_(d), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(t) * 2 * d)
    throw std::invalid_argument("EmbeddingTable: bad data size");
}

EmbeddingTable init_embeddings(int t, int d, RngStream& rng) {
  if (t < 1 || d < 1) throw std::invalid_argument("init_embeddings: t and d must be positive");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> data(static_cast<std::size_t>(t) * 2 * d);
  for (auto& v : data) v = rng.rademacher(scale);
  return EmbeddingTable(t, d, std::move(data));
}

SimplifiedParams init_params(const ParityTask& task, const EmbeddingTable& emb, int m, double eps,
                             RngStream& rng) {
  task.validate();
  if (emb.t() < task.n + task.k + 1)
    throw std::invalid_argument("init_params: embedding table shorter than n+k+1");
  if (m < 1) throw std::invalid_argument("init_params: m must be positive");
  if (eps <= 0) throw std::invalid_argument("init_params: eps must be positive");

  SimplifiedParams p;
  p.n = task.n;
  p.k = task.k;
  p.d = emb.d();
  p.m = m;
  p.eps = eps;
  p.A = Matrix(p.d, p.d);
  p.W = Matrix(2 * m, 2 * p.d);
  p.h.assign(2 * m, 0.0);
  for (int r = 0; r < m; ++r) p.h[r] = 1.0 / (2.0 * m);
  for (int r = m; r < 2 * m; ++r) p.h[r] = -1.0 / (2.0 * m);

  p.nu.resize(static_cast<std::size_t>(2 * m) * task.k * 2);
  for (auto& v : p.nu) v = rng.rademacher(eps);

  // W rows start as +-eps combinations of the chain-position embeddings; the
  // attention-output half stays zero.
  for (int r = 0; r < 2 * m; ++r) {
    double* row = p.W.row(r);
    for (int pos = task.n + 1; pos <= task.n + task.k; ++pos) {
      for (int b = 0; b < 2; ++b) {
        const double c = p.nu_at(r, pos, b);
        const auto e = emb.vec(pos, b);
        for (int l = 0; l < p.d; ++l) row[l] += c * e[l];
      }
    }
  }
  return p;
}

ForwardTrace forward(const SimplifiedParams& params, const EmbeddingTable& emb,
                     std::span<const std::uint8_t> tokens) {
  const int t = static_cast<int>(tokens.size());
  if (t < 1) throw std::invalid_argument("forward: empty sequence");
  if (t > emb.t()) throw std::invalid_argument("forward: sequence longer than embedding table");
  if (emb.d() != params.d) throw std::invalid_argument("forward: embedding dim mismatch");
  const int d = params.d;
  const int width = 2 * params.m;

  ForwardTrace tr;
  tr.t = t;
  tr.embedded = Matrix(d, t);
  for (int c = 0; c < t; ++c) {
    const auto e = emb.vec(c + 1, tokens[c]);
    for (int l = 0; l < d; ++l) tr.embedded(l, c) = e[l];
  }

  const Matrix ae = matmul(params.A, tr.embedded);
  tr.scores = matmul(transpose(tr.embedded), ae);
  tr.pattern = masked_softmax_columns(tr.scores);
  tr.attn_out = matmul(tr.embedded, tr.pattern);

  tr.ffn_in = Matrix(2 * d, t);
  for (int c = 0; c < t; ++c) {
    for (int l = 0; l < d; ++l) {
      tr.ffn_in(l, c) = tr.embedded(l, c);
      tr.ffn_in(d + l, c) = tr.attn_out(l, c);
    }
  }

  tr.preact = matmul(params.W, tr.ffn_in);
  tr.gate.assign(static_cast<std::size_t>(width) * t, 0);
  tr.outputs.assign(t, 0.0);
  for (int c = 0; c < t; ++c) {
    double y = 0.0;
    for (int r = 0; r < width; ++r) {
      const double pre = tr.preact(r, c);
      if (pre > 0.0) {
        tr.gate[static_cast<std::size_t>(r) * t + c] = 1;
        y += params.h[r] * pre;
      }
    }
    tr.outputs[c] = y;
  }
  return tr;
}

ForwardTrace forward(const SimplifiedParams& params, const EmbeddingTable& emb,
                     const BitSequence& seq) {
  return forward(params, emb, std::span<const std::uint8_t>(seq.bits.data() + 1, seq.bits.size() - 1));
}

HingeResult hinge_loss(double yhat, int y) {
  const double sign = (y & 1) ? -1.0 : 1.0;  // (-1)^y
  const double arg = sign * yhat + 1.0;
  if (arg > 0.0) return {arg, sign};
  return {0.0, 0.0};
}

std::vector<int> scored_positions(int n, int k, bool cot) {
  std::vector<int> ps;
  if (cot) {
    for (int i = n + 1; i <= n + k; ++i) ps.push_back(i);
  } else {
    ps.push_back(n + 1);
  }
  return ps;
}

static void check_layout(const ForwardTrace& trace, const BitSequence& seq, bool cot) {
  if (cot && seq.layout != Layout::kCot)
    throw std::invalid_argument("sequence_loss: expected chain layout");
  if (!cot && seq.layout != Layout::kNoCot)
    throw std::invalid_argument("sequence_loss: expected no-chain layout");
  if (trace.t != seq.length())
    throw std::invalid_argument("sequence_loss: trace/sequence length mismatch");
}

double sequence_loss(const ForwardTrace& trace, const BitSequence& seq, bool cot) {
  check_layout(trace, seq, cot);
  double loss = 0.0;
  for (int p : scored_positions(seq.n, seq.k, cot))
    loss += hinge_loss(trace.y_at(p), seq.at(p + 1)).loss;
  return loss;
}

SimplifiedGrads backward(const SimplifiedParams& params, const EmbeddingTable& emb,
                         const ForwardTrace& trace, const BitSequence& seq, bool cot) {
  check_layout(trace, seq, cot);
  (void)emb;
  const int t = trace.t;
  const int d = params.d;
  const int width = 2 * params.m;

  SimplifiedGrads g;
  g.dA = Matrix(d, d);
  g.dW = Matrix(width, 2 * d);
  Matrix dz(t, t);  // gradient w.r.t. raw scores, filled only at scored columns
  std::vector<double> u(d);
  std::vector<double> s(t);
  bool any_dz = false;

  for (int p : scored_positions(seq.n, seq.k, cot)) {
    const int c = p - 1;
    const double gout = hinge_loss(trace.y_at(p), seq.at(p + 1)).dyhat;
    if (gout == 0.0) continue;

    // FFN rows: dW[r] += gout * h_r * gate * [E(:,c); attn(:,c)]
    std::fill(u.begin(), u.end(), 0.0);
    for (int r = 0; r < width; ++r) {
      if (!trace.gate_at(r, p)) continue;
      const double coef = gout * params.h[r];
      double* wrow = g.dW.row(r);
      const double* wright = params.W.row(r) + d;
      for (int l = 0; l < d; ++l) {
        wrow[l] += coef * trace.embedded(l, c);
        wrow[d + l] += coef * trace.attn_out(l, c);
        u[l] += coef * wright[l];  // dL/d attn_out(:,c)
      }
    }

    // Softmax derivative through column c of the pattern:
    // dz[j,c] = P[j,c] * (s_j - sum_p P[p,c] s_p) with s_j = <u, E(:,j)>.
    double wbar = 0.0;
    for (int j = 0; j <= c; ++j) {
      double dot = 0.0;
      for (int l = 0; l < d; ++l) dot += u[l] * trace.embedded(l, j);
      s[j] = dot;
      wbar += trace.pattern(j, c) * dot;
    }
    for (int j = 0; j <= c; ++j) {
      const double val = trace.pattern(j, c) * (s[j] - wbar);
      if (val != 0.0) any_dz = true;
      dz(j, c) = val;
    }
  }

  // dA = E dz E^T (scores enter as E(:,j)^T A E(:,c)).
  if (any_dz) {
    const Matrix edz = matmul(trace.embedded, dz);
    g.dA = matmul(edz, transpose(trace.embedded));
  }
  return g;
}

int predict(const ForwardTrace& trace, int position) {
  if (position < 1 || position > trace.t) throw std::invalid_argument("predict: position out of range");
  return trace.y_at(position) > 0.0 ? 1 : 0;
}

Completion autoregressive_complete(const SimplifiedParams& params, const EmbeddingTable& emb,
                                   const ParityTask& task,
                                   std::span<const std::uint8_t> input_bits, bool cot) {
  if (static_cast<int>(input_bits.size()) != task.n)
    throw std::invalid_argument("autoregressive_complete: input length != n");
  std::vector<std::uint8_t> tokens(input_bits.begin(), input_bits.end());
  tokens.push_back(0);  // separator
  const int steps = cot ? task.k : 1;
  for (int s = 0; s < steps; ++s) {
    const ForwardTrace tr = forward(params, emb, tokens);
    tokens.push_back(static_cast<std::uint8_t>(predict(tr, static_cast<int>(tokens.size()))));
  }
  Completion out;
  out.seq.layout = cot ? Layout::kCot : Layout::kNoCot;
  out.seq.n = task.n;
  out.seq.k = task.k;
  out.seq.bits.assign(1, 0);
  out.seq.bits.insert(out.seq.bits.end(), tokens.begin(), tokens.end());
  out.answer = tokens.back();
  return out;
}

void save_simplified(const std::filesystem::path& path, const SimplifiedParams& params,
                     const EmbeddingTable& emb, std::uint64_t seed) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["kind"] = "simplified";
  header["n"] = params.n;
  header["k"] = params.k;
  header["d"] = params.d;
  header["m"] = params.m;
  header["eps"] = params.eps;
  header["seed"] = seed;
  header["t"] = emb.t();
  CheckpointWriter w(path, header);
  w.write_tensor("A", {params.A.data(), params.A.size()});
  w.write_tensor("W", {params.W.data(), params.W.size()});
  w.write_tensor("h", params.h);
  w.write_tensor("nu", params.nu);
  w.write_tensor("embeddings", emb.raw());
  w.finish();
}

SimplifiedCheckpoint load_simplified(const std::filesystem::path& path) {
  CheckpointReader r(path);
  const auto& header = r.header();
  if (header.at("kind").get<std::string>() != "simplified")
    throw std::runtime_error("not a simplified-model checkpoint: " + path.string());
  SimplifiedCheckpoint out;
  auto& p = out.params;
  p.n = header.at("n").get<int>();
  p.k = header.at("k").get<int>();
  p.d = header.at("d").get<int>();
  p.m = header.at("m").get<int>();
  p.eps = header.at("eps").get<double>();
  out.seed = header.at("seed").get<std::uint64_t>();
  const int t = header.at("t").get<int>();

  p.A = Matrix(p.d, p.d);
  r.read_tensor("A", {p.A.data(), p.A.size()});
  p.W = Matrix(2 * p.m, 2 * p.d);
  r.read_tensor("W", {p.W.data(), p.W.size()});
  p.h.resize(2 * p.m);
  r.read_tensor("h", p.h);
  p.nu.resize(r.tensor_size("nu"));
  r.read_tensor("nu", p.nu);
  std::vector<double> edata(static_cast<std::size_t>(t) * 2 * p.d);
  r.read_tensor("embeddings", edata);
  out.emb = EmbeddingTable(t, p.d, std::move(edata));
  return out;
}

}  // namespace parity
