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

#include "attnrep/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace attnrep {

FixedFormat::FixedFormat(int total_bits, int frac_bits)
    : total_bits_(total_bits), frac_bits_(frac_bits) {
  if (total_bits < 2 || total_bits > kMaxTotalBits) {
    throw PreconditionError("FixedFormat: total_bits must lie in [2, " +
                            std::to_string(kMaxTotalBits) + "], got " +
                            std::to_string(total_bits));
  }
  if (frac_bits < 0 || frac_bits >= total_bits) {
    throw PreconditionError("FixedFormat: frac_bits must lie in [0, total_bits)");
  }
}

double FixedFormat::step() const { return std::ldexp(1.0, -frac_bits_); }

double FixedFormat::max_value() const {
  return std::ldexp(1.0, total_bits_ - frac_bits_ - 1) - step();
}

bool FixedFormat::on_grid(double x) const {
  if (!std::isfinite(x) || std::abs(x) > max_value()) return false;
  const double k = std::ldexp(x, frac_bits_);
  return k == std::trunc(k);
}

FixedFormat FixedFormat::covering(double bound, int frac_bits) {
  const double step = std::ldexp(1.0, -frac_bits);
  int total = frac_bits + 2;
  while (std::ldexp(1.0, total - frac_bits - 1) - step < bound) {
    ++total;
    if (total > kMaxTotalBits) {
      throw PreconditionError("FixedFormat::covering: bound " + std::to_string(bound) +
                              " needs more than " + std::to_string(kMaxTotalBits) +
                              " bits at " + std::to_string(frac_bits) + " fractional bits");
    }
  }
  return FixedFormat(total, frac_bits);
}

Quantized quantize(double x, const FixedFormat& fmt) {
  if (std::isnan(x)) throw PreconditionError("quantize: NaN input");
  const double top = fmt.max_value();
  if (x > top) return {top, true};
  if (x < -top) return {-top, true};
  // Scaling by a power of two is exact; nearbyint honours the default
  // round-to-nearest-even mode.
  const double k = std::nearbyint(std::ldexp(x, fmt.frac_bits()));
  return {std::ldexp(k, -fmt.frac_bits()) + 0.0, false};
}

double quantize_value(double x, const Precision& precision) {
  if (!precision) return x;
  return quantize(x, *precision).value;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: data size " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw DimensionError("Matrix::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order. Zero entries of `a` and all-zero rows of `b` are skipped
  // since weight matrices here are mostly block selectors.
  std::vector<char> live(b.rows());
  for (std::size_t k = 0; k < b.rows(); ++k) {
    const auto row = b.row(k);
    live[k] = std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; });
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double v = a(i, k);
      if (v == 0.0 || !live[k]) continue;
      const auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_transposed: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
  Matrix out = a;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) += b(r, c);
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (double& v : out.row(r)) v *= s;
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: shape mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Matrix quantize_matrix(const Matrix& a, const Precision& precision, const std::string& what) {
  if (!precision) return a;
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const Quantized q = quantize(a(r, c), *precision);
      if (q.saturated) {
        throw PreconditionError(what + ": entry (" + std::to_string(r) + ", " + std::to_string(c) +
                                ") = " + std::to_string(a(r, c)) + " exceeds the " +
                                std::to_string(precision->total_bits()) + "-bit range");
      }
      out(r, c) = q.value;
    }
  }
  return out;
}

Tensor3::Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, double fill)
    : n1_(n1), n2_(n2), n3_(n3), data_(n1 * n2 * n3, fill) {}

std::size_t Tensor3::dim(int axis) const {
  switch (axis) {
    case 0: return n1_;
    case 1: return n2_;
    case 2: return n3_;
    default: throw PreconditionError("Tensor3::dim: axis must be 0, 1 or 2");
  }
}

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  double top = -std::numeric_limits<double>::infinity();
  for (double v : row) {
    if (!std::isfinite(v)) throw PreconditionError("row_softmax: non-finite score");
    top = std::max(top, v);
  }
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : row) v /= total;
}

Matrix row_softmax(const Matrix& a) {
  Matrix out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("khatri_rao: column counts differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
  }
  Matrix out(a.rows() * b.rows(), a.cols());
  for (std::size_t i1 = 0; i1 < a.rows(); ++i1) {
    for (std::size_t i2 = 0; i2 < b.rows(); ++i2) {
      auto dst = out.row(i1 * b.rows() + i2);
      for (std::size_t c = 0; c < a.cols(); ++c) dst[c] = a(i1, c) * b(i2, c);
    }
  }
  return out;
}

std::optional<std::vector<double>> solve_spd(const Matrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw DimensionError("solve_spd: shape mismatch");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 1e-12 * std::max(1.0, std::abs(a(j, j))))) return std::nullopt;
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * y[k];
    y[i] = v / l(i, i);
  }
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double v = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x[k];
    x[ii] = v / l(ii, ii);
  }
  return x;
}

}  // namespace attnrep
