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

using namespace attnrep;

namespace {

// Every sequence over [1, m]^n, in base-m order.
std::vector<SequenceInstance> all_sequences(int n, int m) {
  std::vector<SequenceInstance> out;
  long long total = 1;
  for (int i = 0; i < n; ++i) total *= m;
  for (long long code = 0; code < total; ++code) {
    SequenceInstance s{n, m, std::vector<int>(n)};
    long long c = code;
    for (int i = 0; i < n; ++i, c /= m) s.x[i] = static_cast<int>(c % m) + 1;
    out.push_back(s);
  }
  return out;
}

void check_exhaustive(const TransformerModel& model, int n, int m, MatchVariant v, int k = 0) {
  int mismatches = 0;
  for (const auto& s : all_sequences(n, m)) {
    if (output_bits(run_transformer(model, sequence_input_matrix(s))) != match_oracle(s, v, k)) ++mismatches;
  }
  CHECK(mismatches == 0);
}

}  // namespace

TEST_CASE("match2 is exact on every small input") {
  check_exhaustive(build_match2(4, 5), 4, 5, MatchVariant::kMatch2);
  check_exhaustive(build_match2(3, 7), 3, 7, MatchVariant::kMatch2);
}

TEST_CASE("match3 bigram is exact on every small input") {
  check_exhaustive(build_match3_bigram(4, 7), 4, 7, MatchVariant::kMatch3Bigram);
}

TEST_CASE("match3 local is exact on every small input") {
  check_exhaustive(build_match3_local(5, 5, 1), 5, 5, MatchVariant::kMatch3Local, 1);
  check_exhaustive(build_match3_local(4, 5, 2), 4, 5, MatchVariant::kMatch3Local, 2);
}

TEST_CASE("third-order match3 is exact on every small input") {
  check_exhaustive(build_match3_third_order(4, 7), 4, 7, MatchVariant::kMatch3);
}

TEST_CASE("multilayer match3 is exact on every small input") {
  check_exhaustive(build_match3_multilayer(5, 5, 6), 5, 5, MatchVariant::kMatch3);
  const TransformerModel m = build_match3_multilayer(8, 11, 6);
  CHECK(m.depth() >= static_cast<std::size_t>(build_pair_schedule(8, 6).depth()));
}

TEST_CASE("restricted two-layer match3 on the embedding image") {
  const int n = 3, big_n = 2 * n + 1, m = 11;
  const TransformerModel model = build_match3_restricted_twolayer(big_n, m);
  CHECK(model.depth() == 2);
  for (std::uint64_t code = 0; code < (1u << (2 * n)); ++code) {
    const DisjInstance d = disj_from_index(n, code);
    const SequenceInstance s = embed_disj_match3(d, m);
    const auto bits = output_bits(run_transformer(model, sequence_input_matrix(s)));
    CHECK(bits[0] == disj(d));
  }
  CHECK_THROWS(run_transformer(model, sequence_input_matrix(SequenceInstance{big_n, m, {2, 2, 2, 2, 2, 2, 2}})));
}

TEST_CASE("cycle detectors are exact on every small graph") {
  const TransformerModel tri = build_cycle_detector(CycleKind::kDirectedCycle3, 4);
  int mism = 0;
  for (int code = 0; code < (1 << 12); ++code) {
    GraphInstance g{4, false, std::vector<std::uint8_t>(16, 0)};
    int bit = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j) g.adj[i * 4 + j] = (code >> bit++) & 1;
    if (output_bits(run_transformer(tri, graph_input_matrix(g))) != cycle_oracle(g, CycleKind::kDirectedCycle3)) ++mism;
  }
  CHECK(mism == 0);
  const TransformerModel c5 = build_cycle_detector(CycleKind::kCycle5, 5);
  mism = 0;
  for (int code = 0; code < (1 << 10); ++code) {
    GraphInstance g{5, true, std::vector<std::uint8_t>(25, 0)};
    int bit = 0;
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j) g.adj[i * 5 + j] = g.adj[j * 5 + i] = (code >> bit++) & 1;
    if (output_bits(run_transformer(c5, graph_input_matrix(g))) != cycle_oracle(g, CycleKind::kCycle5)) ++mism;
  }
  CHECK(mism == 0);
}

TEST_CASE("qsa fixed-precision model stays within eps") {
  QsaBuildSpec spec;
  spec.n = 10;
  spec.q = 2;
  spec.d_prime = 3;
  spec.epsilon = 0.1;
  const TransformerModel model = build_qsa_fixed(spec);
  CHECK(model.widest_format().has_value());
  CHECK(model.widest_format()->total_bits() <= FixedFormat::kMaxTotalBits);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const QsaInstance q = gen_qsa(10, 2, 3, seed);
    const Matrix diff = run_transformer(model, qsa_input_matrix(q));
    const Matrix want = qsa_oracle(q);
    for (int i = 0; i < 10; ++i) {
      double e = 0;
      for (int c = 0; c < 3; ++c) e += (diff(i, c) - want(i, c)) * (diff(i, c) - want(i, c));
      CHECK(std::sqrt(e) <= 0.1);
    }
  }
  const Json prov = model.provenance;
  CHECK(prov["constants"].contains("C0"));
  CHECK(prov["constants"].contains("frac_bits"));
}

TEST_CASE("qsa infinite-precision model uses m = d' + 4q + 2") {
  const TransformerModel model = build_qsa_inf(12, 3, 2, 0.05);
  // Embedding width is independent of N.
  CHECK(head_in_dim(model.layers[0].heads[0]) == 2 + 4 * 3 + 2);
  CHECK(head_in_dim(build_qsa_inf(200, 3, 2, 0.05).layers[0].heads[0]) == 2 + 4 * 3 + 2);
  CHECK_FALSE(model.widest_format().has_value());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const QsaInstance q = gen_qsa(12, 3, 2, seed);
    CHECK(max_abs_diff(run_transformer(model, qsa_input_matrix(q)), qsa_oracle(q)) <= 0.05);
  }
}

TEST_CASE("qsa build parameters") {
  QsaBuildSpec spec;
  spec.n = 32;
  spec.q = 4;
  spec.d_prime = 4;
  spec.epsilon = 0.1;
  CHECK(spec.alpha() == static_cast<int>(std::ceil(2 * std::log(4 * 32 / 0.1))));
  const int m = key_bank_dim(32, 4);
  CHECK(spec.frac_bits(m) ==
        static_cast<int>(std::ceil(std::log2(4 * spec.alpha() * std::sqrt(m) * (1 + 2 * std::sqrt(4.0)) / 0.1))) + 1);
  spec.frac_bits_override = 20;
  CHECK(spec.frac_bits(m) == 20);
  QsaBuildSpec bad = spec;
  bad.q = 40;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = spec;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  CHECK(all_subsets_if_small(6, 2).size() == 15);
  CHECK(all_subsets_if_small(200, 4).empty());
}

TEST_CASE("builders reject invalid parameters") {
  CHECK_THROWS_AS(build_match2(0, 5), PreconditionError);
  CHECK_THROWS_AS(build_match2(4, 1), PreconditionError);
  CHECK_THROWS_AS(build_match3_local(5, 7, -1), PreconditionError);
  CHECK_THROWS_AS(build_match3_restricted_twolayer(6, 11), PreconditionError);
  CHECK_THROWS_AS(build_pair_schedule(4, 3), PreconditionError);
}

TEST_CASE("scale constants") {
  CHECK(match_scale(8, 11) == doctest::Approx(121 * std::log(48.0)));
  CHECK(third_order_scale(8, 11) == doctest::Approx(121 * std::log(6.0 * 64)));
  CHECK(bigram_scale(8) == doctest::Approx(81 * std::log(48.0)));
  CHECK(graph_scale(8) == doctest::Approx(20 * std::log(9.0)));
}

TEST_CASE("output bits threshold at one half") {
  CHECK(output_bits(Matrix::from_rows({{0.49}, {0.51}, {1.0}, {0.0}})) == std::vector<int>{0, 1, 1, 0});
}
