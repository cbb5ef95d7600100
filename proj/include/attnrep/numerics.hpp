// Copyright 2026 The attnrep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small dense linear algebra, row-wise softmax, column-wise Kronecker
// products and p-bit fixed-point quantization.
//
// All reductions run in ascending index order so that independent evaluation
// paths over the same data produce identical doubles.

#ifndef ATTNREP_NUMERICS_HPP_
#define ATTNREP_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnrep {

// Violated operation precondition (bad dimensions, out-of-range parameter).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

// Sign + (p - f - 1) integer bits + f fractional bits. The grid is
// {k * 2^-f : |k| <= 2^(p-1) - 1}; every grid point is an exact double as
// long as p <= 54.
class FixedFormat {
 public:
  static constexpr int kMaxTotalBits = 54;

  FixedFormat(int total_bits, int frac_bits);

  int total_bits() const { return total_bits_; }
  int frac_bits() const { return frac_bits_; }
  double step() const;
  // Largest representable magnitude, 2^(p-f-1) - 2^-f.
  double max_value() const;
  bool on_grid(double x) const;

  // Smallest format with `frac_bits` fractional bits that holds |x| <= bound.
  static FixedFormat covering(double bound, int frac_bits);

  bool operator==(const FixedFormat&) const = default;

 private:
  int total_bits_;
  int frac_bits_;
};

// nullopt means the unquantized double carrier ("infinite precision").
using Precision = std::optional<FixedFormat>;

struct Quantized {
  double value;
  bool saturated;
};

// Nearest grid point, ties to even; saturates to the extreme grid point.
Quantized quantize(double x, const FixedFormat& fmt);
// Identity when `precision` is empty.
double quantize_value(double x, const Precision& precision);

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }

  Matrix transpose() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
double max_abs_diff(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Quantize every entry; throws PreconditionError if any entry saturates.
Matrix quantize_matrix(const Matrix& a, const Precision& precision, const std::string& what);

// Dense rank-3 tensor with flattened index (i1 * n2 + i2) * n3 + i3 (0-based).
class Tensor3 {
 public:
  Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, double fill = 0.0);

  std::size_t dim(int axis) const;
  std::size_t flat_index(std::size_t i1, std::size_t i2, std::size_t i3) const {
    return (i1 * n2_ + i2) * n3_ + i3;
  }
  double& operator()(std::size_t i1, std::size_t i2, std::size_t i3) {
    return data_[flat_index(i1, i2, i3)];
  }
  double operator()(std::size_t i1, std::size_t i2, std::size_t i3) const {
    return data_[flat_index(i1, i2, i3)];
  }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t n1_, n2_, n3_;
  std::vector<double> data_;
};

// In-place softmax of one row; max-subtracted, summed in ascending order.
void softmax_inplace(std::span<double> row);
Matrix row_softmax(const Matrix& a);

// Column-wise Kronecker product: row (i1 * N2 + i2) of the result is the
// element-wise product of row i1 of `a` and row i2 of `b`.
Matrix khatri_rao(const Matrix& a, const Matrix& b);

// Solves (A) x = b for symmetric positive definite A by Cholesky.
// Returns nullopt if A is not numerically positive definite.
std::optional<std::vector<double>> solve_spd(const Matrix& a, std::span<const double> b);

}  // namespace attnrep

#endif  // ATTNREP_NUMERICS_HPP_
