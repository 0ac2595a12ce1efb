// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lgnn {

namespace detail {
// Optional allocation observer, used by tests to audit buffer shapes.
using AllocObserver = void (*)(std::size_t rows, std::size_t cols);
inline AllocObserver alloc_observer = nullptr;
}  // namespace detail

// Dense 2-D matrix of 64-bit floats, row-major. The only tensor type in this
// library; every operation checks shapes and keeps a fixed summation order so
// repeated calls are bit-identical.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix filled(std::size_t rows, std::size_t cols, double value);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a^T * b, without materializing the transpose
Matrix matmul_at(const Matrix& a, const Matrix& b);
// c = a * b^T, without materializing the transpose
Matrix matmul_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix relu(const Matrix& a);

// y += alpha * x
void axpy(Matrix& y, double alpha, const Matrix& x);
std::vector<double> row_sums(const Matrix& a);

double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double dot_all(const Matrix& a, const Matrix& b);

}  // namespace lgnn
