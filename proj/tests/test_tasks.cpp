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

#include <set>

#include "attnrep/rng.hpp"
#include "attnrep/tasks.hpp"

using namespace attnrep;

namespace {

int md(int v, int m) { return ((v % m) + m) % m; }

// Independent readings of the task definitions.
std::vector<int> brute_match3(const SequenceInstance& s, int window) {
  std::vector<int> out(s.n, 0);
  for (int i = 0; i < s.n; ++i)
    for (int a = 0; a < s.n; ++a)
      for (int b = 0; b < s.n; ++b) {
        if (window >= 0 && (std::abs(a - i) > window || std::abs(b - i) > window)) continue;
        if (md(s.x[i] + s.x[a] + s.x[b], s.m) == 0) out[i] = 1;
      }
  return out;
}

std::vector<int> brute_cycle5(const GraphInstance& g) {
  std::vector<int> out(g.n, 0);
  const int n = g.n;
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          for (int d = 0; d < n; ++d)
            if (g.at(i, a) && g.at(a, b) && g.at(b, c) && g.at(c, d) && g.at(d, i)) out[i] = 1;
  return out;
}

}  // namespace

TEST_CASE("match oracles agree with direct enumeration") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.between(1, 7)), m = static_cast<int>(rng.between(2, 11));
    const SequenceInstance s = gen_uniform_sequence(n, m, rng.next());
    std::vector<int> m2(n, 0), bigram(n, 0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (md(s.x[i] + s.x[j], m) == 0) m2[i] = 1;
        if (j + 1 < n && md(s.x[i] + s.x[j] + s.x[j + 1], m) == 0) bigram[i] = 1;
      }
    CHECK(match_oracle(s, MatchVariant::kMatch2) == m2);
    CHECK(match_oracle(s, MatchVariant::kMatch3Bigram) == bigram);
    CHECK(match_oracle(s, MatchVariant::kMatch3) == brute_match3(s, -1));
    const int k = static_cast<int>(rng.between(0, n));
    CHECK(match_oracle(s, MatchVariant::kMatch3Local, k) == brute_match3(s, k));
  }
}

TEST_CASE("cycle oracles agree with walk enumeration") {
  Rng rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = static_cast<int>(rng.between(3, 7));
    const GraphInstance d = gen_random_graph(n, 0.35, false, rng.next());
    std::vector<int> tri(n, 0);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          if (d.at(i, a) && d.at(a, b) && d.at(b, i)) tri[i] = 1;
    CHECK(cycle_oracle(d, CycleKind::kDirectedCycle3) == tri);
    const GraphInstance u = gen_random_graph(n, 0.3, true, rng.next());
    CHECK(cycle_oracle(u, CycleKind::kCycle5) == brute_cycle5(u));
  }
  CHECK_THROWS_AS(cycle_oracle(gen_random_graph(4, 0.5, false, 1), CycleKind::kCycle5), PreconditionError);
}

TEST_CASE("generators are deterministic and valid") {
  CHECK(gen_uniform_sequence(10, 13, 4).x == gen_uniform_sequence(10, 13, 4).x);
  CHECK(gen_uniform_sequence(10, 13, 4).x != gen_uniform_sequence(10, 13, 5).x);
  const GraphInstance g = gen_random_graph(8, 0.5, true, 3);
  for (int i = 0; i < 8; ++i) {
    CHECK(g.at(i, i) == 0);
    for (int j = 0; j < 8; ++j) CHECK(g.at(i, j) == g.at(j, i));
  }
  const QsaInstance q = gen_qsa(12, 3, 2, 9);
  CHECK_NOTHROW(q.validate());
  for (const auto& y : q.y) CHECK(std::set<int>(y.begin(), y.end()).size() == 3);
}

TEST_CASE("planted match3 instances contain their triple") {
  int planted = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const PlantedMatch3 p = gen_planted_match3(16, 37, seed);
    CHECK_NOTHROW(p.instance.validate());
    if (!p.planted) continue;
    ++planted;
    const auto& x = p.instance.x;
    CHECK(md(x[p.j1 - 1] + x[p.j2 - 1] + x[p.j3 - 1], 37) == 0);
    CHECK(match_oracle(p.instance, MatchVariant::kMatch3)[p.j1 - 1] == 1);
  }
  CHECK(planted > 0);
}

TEST_CASE("qSA oracle averages the indexed rows") {
  QsaInstance q{3, 2, 1, {{0.1}, {0.3}, {0.5}}, {{1, 2}, {2, 3}, {3, 3}}, {true, true, false}};
  const Matrix o = qsa_oracle(q);
  CHECK(o(0, 0) == doctest::Approx(0.2));
  CHECK(o(1, 0) == doctest::Approx(0.4));
  CHECK(o(2, 0) == 0.0);
  QsaInstance bad = q;
  bad.y[0] = {1, 4};
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}

TEST_CASE("DISJ enumeration covers every pair once") {
  std::set<std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>> seen;
  int intersecting = 0;
  for (std::uint64_t code = 0; code < 64; ++code) {
    const DisjInstance d = disj_from_index(3, code);
    seen.insert({d.a, d.b});
    intersecting += disj(d);
  }
  CHECK(seen.size() == 64);
  CHECK(intersecting == 64 - 27);  // 3^n disjoint pairs
}

TEST_CASE("DISJ embeddings preserve the answer") {
  for (std::uint64_t code = 0; code < 256; ++code) {
    const DisjInstance d = disj_from_index(4, code);
    const int want = disj(d);
    const Matrix qs = qsa_oracle(embed_disj_qsa(d));
    // All-ones pair gives +e1, any disjoint pair gives -e1 or better.
    CHECK((qs(qs.rows() - 1, 0) > -1.0) == (want == 1));
    const SequenceInstance s = embed_disj_match3(d);
    CHECK(in_restricted_match3_domain(s));
    CHECK(match_oracle(s, MatchVariant::kMatch3)[0] == want);
    for (CycleKind k : {CycleKind::kDirectedCycle3, CycleKind::kCycle5}) {
      const auto bits = cycle_oracle(embed_disj_graph(d, k), k);
      CHECK((std::count(bits.begin(), bits.end(), 1) > 0) == (want == 1));
    }
  }
  std::string why;
  CHECK_FALSE(in_restricted_match3_domain(SequenceInstance{5, 11, {2, 2, 3, 4, 5}}, &why));
  CHECK_FALSE(why.empty());
}

TEST_CASE("causal qSA from DISJ") {
  const DisjInstance d{{1, 0, 1}, {0, 0, 1}};
  const QsaInstance q = causal_qsa_from_disj(d);
  CHECK(q.n == 7);
  CHECK_NOTHROW(q.validate());
  CHECK(gen_causal_qsa(9, 1).n == 9);
  CHECK_THROWS_AS(gen_causal_qsa(8, 1), PreconditionError);
}

TEST_CASE("instances round-trip through JSON") {
  const SequenceInstance s = gen_uniform_sequence(6, 11, 2);
  CHECK(sequence_from_json(instance_to_json(s)).x == s.x);
  const GraphInstance g = gen_random_graph(5, 0.5, false, 2);
  CHECK(graph_from_json(instance_to_json(g)).adj == g.adj);
  const QsaInstance q = gen_qsa(6, 2, 3, 2);
  const QsaInstance qb = qsa_from_json(instance_to_json(q));
  CHECK(qb.y == q.y);
  CHECK(qb.z == q.z);
  const DisjInstance d = gen_disj(7, 1);
  CHECK(disj_from_json(instance_to_json(d)).a == d.a);
  CHECK(parse_cycle_kind(cycle_name(CycleKind::kCycle5)) == CycleKind::kCycle5);
  CHECK_THROWS_AS(parse_cycle_kind("cycle7"), PreconditionError);
}

TEST_CASE("input encodings") {
  const Matrix x = sequence_input_matrix(SequenceInstance{3, 5, {5, 1, 2}});
  CHECK(x == Matrix::from_rows({{1, 5}, {2, 1}, {3, 2}}));
  CHECK_THROWS_AS(sequence_input_matrix(SequenceInstance{2, 5, {0, 1}}), PreconditionError);
  const GraphInstance g{2, false, {0, 1, 0, 0}};
  const Matrix a = graph_input_matrix(g);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(1, 0) == 0.0);
}
