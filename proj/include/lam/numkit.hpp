// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrix helpers. Everything here works in double precision
// and is a pure function of its inputs.

#ifndef LAM_NUMKIT_HPP_
#define LAM_NUMKIT_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace lam::numkit {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Takes ownership of `data`; throws ShapeError unless data.size() == rows*cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double value);

  bool operator==(const Matrix& other) const = default;

  static Matrix identity(std::size_t n);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// (1/(n-1)) * Xc' Xc with Xc the column-centred X. Needs at least two rows.
Matrix covariance(const Matrix& x);

// Sum of squared entries.
double frobenius_sq(const Matrix& m);

// Cosine of the angle between u and v, clamped to [-1, 1].
double cosine(std::span<const double> u, std::span<const double> v);

// Max-subtracted softmax.
Vector softmax(std::span<const double> scores);

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> u);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b'
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a' * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Vector column_means(const Matrix& m);
Vector column_sums(const Matrix& m);

// y += scale * x
void add_scaled(Matrix& y, const Matrix& x, double scale);
void add_scaled(std::span<double> y, std::span<const double> x, double scale);

// Returns m - other.
Matrix subtract(const Matrix& m, const Matrix& other);

// Adds `v` to every row of `m`.
void add_row_vector(Matrix& m, std::span<const double> v);

bool all_finite(std::span<const double> values);
inline bool all_finite(const Matrix& m) { return all_finite(m.data()); }

}  // namespace lam::numkit

#endif  // LAM_NUMKIT_HPP_
