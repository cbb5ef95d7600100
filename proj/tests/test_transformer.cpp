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

#include "attnrep/constructions.hpp"
#include "attnrep/rng.hpp"
#include "attnrep/transformer.hpp"

using namespace attnrep;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.gaussian();
  return m;
}

}  // namespace

TEST_CASE("attention matches the softmax formula") {
  const Matrix x = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const AttentionUnit u = make_attention_unit(Matrix::identity(2), Matrix::identity(2), Matrix::identity(2), std::nullopt);
  const Matrix out = attend(u, x);
  for (int i = 0; i < 3; ++i) {
    double z = 0, o0 = 0, o1 = 0;
    for (int j = 0; j < 3; ++j) {
      const double e = std::exp(x(i, 0) * x(j, 0) + x(i, 1) * x(j, 1));
      z += e;
      o0 += e * x(j, 0);
      o1 += e * x(j, 1);
    }
    CHECK(out(i, 0) == doctest::Approx(o0 / z).epsilon(1e-12));
    CHECK(out(i, 1) == doctest::Approx(o1 / z).epsilon(1e-12));
  }
}

TEST_CASE("third-order attention matches brute force") {
  Rng rng(11);
  const std::size_t n = 4, d = 3, m = 2;
  const Matrix q = random_matrix(rng, d, m), k1 = random_matrix(rng, d, m), k2 = random_matrix(rng, d, m);
  const Matrix v1 = random_matrix(rng, d, 2), v2 = random_matrix(rng, d, 2);
  const Matrix x = random_matrix(rng, n, d);
  const HigherOrderUnit u = make_higher_order_unit(q, {k1, k2}, {v1, v2}, std::nullopt);
  const Matrix out = attend_higher_order(u, x);
  const Matrix xq = matmul(x, q), a = matmul(x, k1), b = matmul(x, k2), xv1 = matmul(x, v1), xv2 = matmul(x, v2);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0, o[2] = {0, 0};
    for (std::size_t j1 = 0; j1 < n; ++j1) {
      for (std::size_t j2 = 0; j2 < n; ++j2) {
        double s = 0;
        for (std::size_t c = 0; c < m; ++c) s += xq(i, c) * a(j1, c) * b(j2, c);
        const double e = std::exp(s);
        z += e;
        for (int c = 0; c < 2; ++c) o[c] += e * xv1(j1, c) * xv2(j2, c);
      }
    }
    for (int c = 0; c < 2; ++c) CHECK(out(i, c) == doctest::Approx(o[c] / z).epsilon(1e-10));
  }
}

TEST_CASE("unit construction validates shapes and precision") {
  CHECK_THROWS_AS(make_attention_unit(Matrix(2, 3), Matrix(2, 2), Matrix(2, 1), std::nullopt), DimensionError);
  CHECK_THROWS_AS(make_attention_unit(Matrix(2, 2, 100.0), Matrix(2, 2), Matrix(2, 1), FixedFormat(6, 2)),
                  PreconditionError);
  const AttentionUnit u = make_attention_unit(Matrix(1, 1, 0.3), Matrix(1, 1, 1.0), Matrix(1, 1, 1.0), FixedFormat(8, 2));
  CHECK(u.query(0, 0) == 0.25);
  CHECK_THROWS_AS(make_higher_order_unit(Matrix(2, 2), {}, {}, std::nullopt), DimensionError);
  CHECK_THROWS_AS(attend(u, Matrix(3, 2)), DimensionError);
}

TEST_CASE("end row is appended when requested") {
  TransformerModel model = build_match2(3, 5);
  const Matrix x = sequence_input_matrix(SequenceInstance{3, 5, {1, 2, 3}});
  const Matrix e = with_end_row(model, x);
  CHECK(e.rows() == (model.append_end ? 4u : 3u));
  const ModelTrace t = run_transformer_traced(model, x);
  CHECK(t.output.rows() == 3);
  CHECK(t.layers.size() == model.depth() + 1);
  CHECK(t.output == run_transformer(model, x));
}

TEST_CASE("model JSON round-trips to identical outputs") {
  Rng rng(3);
  for (const TransformerModel& model : {build_match2(5, 7), build_match3_bigram(4, 7), build_cycle_detector(CycleKind::kCycle5, 5)}) {
    const Json j = model_to_json(model);
    const TransformerModel back = load_model(Json::parse(j.dump()));
    CHECK(model_to_json(back) == j);
    for (int trial = 0; trial < 5; ++trial) {
      Matrix x;
      if (model.adjacency_input) {
        x = graph_input_matrix(gen_random_graph(5, 0.4, true, rng.next()));
      } else {
        const int n = model.provenance["params"]["N"].get<int>();
        x = sequence_input_matrix(gen_uniform_sequence(n, 7, rng.next()));
      }
      CHECK(run_transformer(back, x) == run_transformer(model, x));
    }
  }
  CHECK_THROWS(make_mlp("no.such.map", Json::object(), 1, 1, std::nullopt));
}

TEST_CASE("registered element maps apply row by row") {
  register_mlp("test.double", [](const Json& params) -> ElementFn {
    const double f = params.value("factor", 2.0);
    return [f](std::span<const double> row) {
      std::vector<double> out(row.begin(), row.end());
      for (double& v : out) v *= f;
      return out;
    };
  });
  const MlpLayer mlp = make_mlp("test.double", Json{{"factor", 3.0}}, 2, 2, std::nullopt);
  const Matrix y = apply_mlp(mlp, Matrix::from_rows({{1, 2}, {3, 4}}));
  CHECK(y == Matrix::from_rows({{3, 6}, {9, 12}}));
  CHECK_THROWS_AS(apply_mlp(mlp, Matrix(2, 3)), DimensionError);
}

TEST_CASE("approximate identity head carries payloads") {
  Rng rng(5);
  const ApproxIdentity id = make_approx_identity(8, 2, 16, 40.0, 9);
  const Matrix payload = random_matrix(rng, 8, 2);
  const Matrix out = attend(id.unit(), id.features(payload));
  CHECK(max_abs_diff(out, payload) < 1e-3);
}

TEST_CASE("score tensors past the cell budget are refused") {
  const HigherOrderUnit u = make_higher_order_unit(Matrix(1, 1, 1.0), {Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)},
                                                   {Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)}, std::nullopt);
  CHECK_THROWS_AS(attend_higher_order(u, Matrix(300, 1, 0.0)), BudgetError);
}
