// SPDX-License-Identifier: Apache-2.0

#include "lam/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lam/errors.hpp"

namespace lam::numkit {
namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShapeError,
         std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    fail(ErrorCode::kShapeError, "matrix data length " + std::to_string(data_.size()) +
                                     " does not match " + std::to_string(rows) + "x" +
                                     std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorCode::kShapeError, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix covariance(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) {
    fail(ErrorCode::kDegenerateBatch,
         "covariance needs at least 2 rows, got " + std::to_string(n));
  }
  const Vector mean = column_means(x);
  Matrix centred = x;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = centred.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] -= mean[c];
  }
  Matrix cov = matmul_tn(centred, centred);
  const double scale = 1.0 / static_cast<double>(n - 1);
  // Fill the lower triangle from the upper one so the result is exactly symmetric.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double v = cov(i, j) * scale;
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  return cov;
}

double frobenius_sq(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return acc;
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(ErrorCode::kShapeError,
         "dot: length " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

double cosine(std::span<const double> u, std::span<const double> v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) fail(ErrorCode::kZeroNorm, "cosine of a zero-norm vector");
  const double c = dot(u, v) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

Vector softmax(std::span<const double> scores) {
  if (scores.empty()) return {};
  const double top = *std::max_element(scores.begin(), scores.end());
  Vector out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::kShapeError, "matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += s * src[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::kShapeError, "matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "'");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    fail(ErrorCode::kShapeError, "matmul_tn: " + shape_str(a) + "' * " + shape_str(b));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto ar = a.row(r);
    auto br = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = ar[i];
      if (s == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += s * br[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

Vector column_sums(const Matrix& m) {
  Vector out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c];
  }
  return out;
}

Vector column_means(const Matrix& m) {
  if (m.rows() == 0) fail(ErrorCode::kShapeError, "column_means of a matrix with no rows");
  Vector out = column_sums(m);
  for (double& v : out) v /= static_cast<double>(m.rows());
  return out;
}

void add_scaled(Matrix& y, const Matrix& x, double scale) {
  require_same_shape(y, x, "add_scaled");
  add_scaled(std::span<double>(y.data()), std::span<const double>(x.data()), scale);
}

void add_scaled(std::span<double> y, std::span<const double> x, double scale) {
  if (y.size() != x.size()) {
    fail(ErrorCode::kShapeError,
         "add_scaled: length " + std::to_string(y.size()) + " vs " + std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * x[i];
}

Matrix subtract(const Matrix& m, const Matrix& other) {
  require_same_shape(m, other, "subtract");
  Matrix out = m;
  add_scaled(out, other, -1.0);
  return out;
}

void add_row_vector(Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) {
    fail(ErrorCode::kShapeError, "add_row_vector: " + std::to_string(v.size()) +
                                     " entries for " + std::to_string(m.cols()) + " columns");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < v.size(); ++c) row[c] += v[c];
  }
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace lam::numkit
