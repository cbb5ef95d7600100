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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "attnrep/numerics.hpp"
#include "attnrep/rng.hpp"

using namespace attnrep;

TEST_CASE("fixed format range and grid") {
  const FixedFormat f(8, 3);
  CHECK(f.step() == 0.125);
  CHECK(f.max_value() == 16.0 - 0.125);
  CHECK(f.on_grid(1.375));
  CHECK_FALSE(f.on_grid(1.3));
  CHECK_FALSE(f.on_grid(16.0));
  CHECK_THROWS_AS(FixedFormat(1, 0), PreconditionError);
  CHECK_THROWS_AS(FixedFormat(55, 2), PreconditionError);
  CHECK_THROWS_AS(FixedFormat(8, 8), PreconditionError);
  CHECK_NOTHROW(FixedFormat(54, 53));
}

TEST_CASE("quantize rounds to nearest, ties to even, and saturates") {
  const FixedFormat f(8, 2);
  CHECK(quantize(0.3, f).value == 0.25);
  CHECK(quantize(0.125, f).value == 0.0);   // tie -> even multiple
  CHECK(quantize(0.375, f).value == 0.5);   // tie -> even multiple
  CHECK(quantize(-0.375, f).value == -0.5);
  const Quantized hi = quantize(1e9, f);
  CHECK(hi.saturated);
  CHECK(hi.value == f.max_value());
  CHECK(quantize(-1e9, f).value == -f.max_value());
  CHECK_THROWS_AS(quantize(std::nan(""), f), PreconditionError);
  CHECK(quantize_value(0.3, std::nullopt) == 0.3);
}

TEST_CASE("covering picks the smallest width") {
  const FixedFormat f = FixedFormat::covering(5.0, 4);
  CHECK(f.frac_bits() == 4);
  CHECK(f.max_value() >= 5.0);
  CHECK(FixedFormat(f.total_bits() - 1, 4).max_value() < 5.0);
  CHECK_THROWS_AS(FixedFormat::covering(1e300, 10), PreconditionError);
}

TEST_CASE("matmul agrees with the triple loop") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = rng.between(1, 6), k = rng.between(1, 6), c = rng.between(1, 6);
    Matrix a(r, k), b(k, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < k; ++j) a(i, j) = rng.coin() ? 0.0 : rng.gaussian();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < c; ++j) b(i, j) = rng.gaussian();
    Matrix ref(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        for (std::size_t l = 0; l < k; ++l) ref(i, j) += a(i, l) * b(l, j);
    CHECK(max_abs_diff(matmul(a, b), ref) <= 1e-12);
    CHECK(max_abs_diff(matmul_transposed(a, b.transpose()), ref) <= 1e-12);
  }
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
  CHECK_THROWS_AS(add(Matrix(2, 3), Matrix(3, 2)), DimensionError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("softmax is stable and normalized") {
  Matrix a = Matrix::from_rows({{1000.0, 1000.0, -1000.0}, {0.0, std::log(3.0), 0.0}});
  const Matrix s = row_softmax(a);
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 2) == 0.0);
  CHECK(s(1, 1) == doctest::Approx(0.6));
  std::vector<double> bad{1.0, INFINITY};
  CHECK_THROWS_AS(softmax_inplace(bad), PreconditionError);
}

TEST_CASE("khatri-rao is the column-wise Kronecker product") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}, {9, 10}});
  const Matrix k = khatri_rao(a, b);
  REQUIRE(k.rows() == 6);
  for (std::size_t i1 = 0; i1 < 2; ++i1)
    for (std::size_t i2 = 0; i2 < 3; ++i2)
      for (std::size_t c = 0; c < 2; ++c) CHECK(k(i1 * 3 + i2, c) == a(i1, c) * b(i2, c));
  CHECK_THROWS_AS(khatri_rao(a, Matrix(2, 3)), DimensionError);
}

TEST_CASE("tensor indexing is row-major") {
  Tensor3 t(2, 3, 4);
  t(1, 2, 3) = 5.0;
  CHECK(t.flat_index(1, 2, 3) == 23);
  CHECK(t.data()[23] == 5.0);
  CHECK(t.dim(2) == 4);
  CHECK_THROWS_AS(t.dim(3), PreconditionError);
}

TEST_CASE("solve_spd solves and rejects indefinite systems") {
  const Matrix a = Matrix::from_rows({{4, 1}, {1, 3}});
  const std::vector<double> b{1, 2};
  const auto x = solve_spd(a, b);
  REQUIRE(x.has_value());
  CHECK(4 * (*x)[0] + (*x)[1] == doctest::Approx(1.0));
  CHECK((*x)[0] + 3 * (*x)[1] == doctest::Approx(2.0));
  CHECK_FALSE(solve_spd(Matrix::from_rows({{1, 2}, {2, 1}}), b).has_value());
}

TEST_CASE("quantize_matrix refuses saturation") {
  const Matrix a = Matrix::from_rows({{0.3, 100.0}});
  CHECK_THROWS_AS(quantize_matrix(a, FixedFormat(6, 2), "w"), PreconditionError);
  CHECK(quantize_matrix(a, std::nullopt, "w") == a);
}

TEST_CASE("seed mixing separates streams") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
}
