// Dense row-major double matrices plus the handful of kernels the lab needs:
// deterministic matmul, causally masked column softmax, Shannon entropy.
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace parity {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }
  std::span<double> row_span(std::size_t r) { return {row(r), cols_}; }
  std::span<const double> row_span(std::size_t r) const { return {row(r), cols_}; }

  void fill(double v) { data_.assign(data_.size(), v); }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, 0.0);
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// c = a * b. Per output element the contraction runs in ascending inner index,
// so results are bit-stable for a given build.
Matrix matmul(const Matrix& a, const Matrix& b);
// dst += s * a * b, same contraction order as matmul.
void matmul_acc(Matrix& dst, const Matrix& a, const Matrix& b, double s = 1.0);
Matrix transpose(const Matrix& m);
void axpy(Matrix& dst, const Matrix& src, double s);  // dst += s*src

// Column-wise softmax under the autoregressive mask: entries with row > col are
// skipped entirely (left exactly zero) rather than materialized as -inf.
// Column c is a distribution over rows 0..c after per-column max subtraction.
Matrix masked_softmax_columns(const Matrix& scores);

// -sum p log p in nats with 0 log 0 = 0. Throws std::invalid_argument on a
// negative entry or when the entries do not sum to 1 within 1e-9.
double shannon_entropy(std::span<const double> p);

// Shortest-round-trip decimal text, one row per line, comma separated.
void save_matrix_csv(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix_csv(const std::filesystem::path& path);

// Shortest representation that parses back to the identical double.
std::string format_double(double v);

}  // namespace parity
