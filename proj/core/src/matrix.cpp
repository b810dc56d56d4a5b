#include "parity/matrix.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace parity {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

// i-k-j loop order: each c(i,j) still accumulates k ascending, identical adds
// to the textbook i-j-k loop, but streams b row-wise for vectorization.
void matmul_acc(Matrix& dst, const Matrix& a, const Matrix& b, double s) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()));
  if (dst.rows() != a.rows() || dst.cols() != b.cols())
    throw std::invalid_argument("matmul_acc: bad destination shape");
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = dst.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = s * ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  matmul_acc(c, a, b, 1.0);
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

void axpy(Matrix& dst, const Matrix& src, double s) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols())
    throw std::invalid_argument("axpy: shape mismatch");
  double* d = dst.data();
  const double* x = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s * x[i];
}

Matrix masked_softmax_columns(const Matrix& scores) {
  if (scores.rows() != scores.cols())
    throw std::invalid_argument("masked_softmax_columns: matrix must be square");
  const std::size_t t = scores.rows();
  Matrix p(t, t);
  for (std::size_t c = 0; c < t; ++c) {
    double mx = scores(0, c);
    for (std::size_t r = 1; r <= c; ++r) mx = std::max(mx, scores(r, c));
    double z = 0.0;
    for (std::size_t r = 0; r <= c; ++r) {
      const double e = std::exp(scores(r, c) - mx);
      p(r, c) = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (std::size_t r = 0; r <= c; ++r) p(r, c) *= inv;
  }
  return p;
}

double shannon_entropy(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::invalid_argument("shannon_entropy: negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("shannon_entropy: probabilities sum to " + std::to_string(sum));
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void save_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* s = line.data();
    const char* end = line.data() + line.size();
    while (s < end) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s, end, v);
      if (ec != std::errc()) throw std::runtime_error("bad number in " + path.string());
      row.push_back(v);
      s = ptr;
      if (s < end && *s == ',') ++s;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

}  // namespace parity
