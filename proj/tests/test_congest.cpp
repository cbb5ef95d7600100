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
#include <functional>
#include <tuple>
#include <set>

#include "attnrep/congest.hpp"
#include "attnrep/constructions.hpp"
#include "attnrep/rng.hpp"

using namespace attnrep;

TEST_CASE("graph structure") {
  for (int n = 1; n <= 9; ++n) {
    const CongestGraph g = build_congest_graph(n);
    CHECK(static_cast<int>(g.trees.size()) == n);
    for (int i = 1; i <= n; ++i) {
      const CongestTree& t = g.trees[i - 1];
      CHECK(t.nodes[0] == g.root(i));
      CHECK(static_cast<int>(t.leaves.size()) == std::max(1, 2 * n - 1));
      // Leaf order v_{i,1}, v_{1,i}, v_{i,2}, v_{2,i}, ... with v_{i,i} once.
      std::vector<std::pair<int, int>> want;
      for (int j = 1; j <= n; ++j) {
        want.emplace_back(i, j);
        if (j != i) want.emplace_back(j, i);
      }
      std::vector<std::pair<int, int>> got;
      for (int l : t.leaves) got.push_back(t.leaf_pair[l]);
      CHECK(got == want);
      CHECK(t.height() <= static_cast<int>(std::ceil(std::log2(2.0 * n))) + (n == 1 ? 1 : 0));
    }
    // A tree over L leaves has L - 1 binary internal nodes plus the root edge.
    std::set<std::pair<int, int>> distinct(g.edges.begin(), g.edges.end());
    CHECK(distinct.size() == g.edges.size());
    CHECK(g.max_degree() <= 3 * n + 3);
  }
}

TEST_CASE("diameter stays within four tree depths") {
  for (int n = 2; n <= 7; ++n) {
    const CongestGraph g = build_congest_graph(n);
    CHECK(g.diameter() <= 4 * g.tree_depth());
  }
}

TEST_CASE("alice/bob partition at N = 6 cuts six edges") {
  const CongestGraph g = build_congest_graph(6);
  const Partition p = alice_bob_partition(g);
  CHECK(cut_size(g, p) == 6);
  CHECK(partition_level_ordered(g, p));
  CHECK(cut_bound(g) == 6 * (g.tree_depth() + 1));
}

TEST_CASE("simulation equals direct evaluation") {
  Rng rng(1);
  struct Case {
    TransformerModel model;
    std::function<SequenceInstance()> draw;
  };
  const std::vector<Case> cases{
      {build_match2(5, 11), [&] { return gen_uniform_sequence(5, 11, rng.next()); }},
      {build_match3_bigram(4, 7), [&] { return gen_uniform_sequence(4, 7, rng.next()); }},
      {build_match3_restricted_twolayer(5, 11), [&] { return embed_disj_match3(gen_disj(2, rng.next()), 11); }}};
  for (const auto& c : cases) {
    const int n = c.model.provenance["params"]["N"].get<int>();
    const CongestGraph g = build_congest_graph(simulation_graph_size(c.model, n));
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix x = sequence_input_matrix(c.draw());
      const SimulationResult sim = simulate_transformer(g, c.model, x);
      const ModelTrace direct = run_transformer_traced(c.model, x);
      CHECK(output_bits(sim.output) == output_bits(direct.output));
      for (std::size_t l = 0; l < sim.attention_outputs.size(); ++l)
        CHECK(max_abs_diff(sim.attention_outputs[l], direct.layers[l].attention_output) <= 1e-9);
      CHECK(sim.trace.rounds <= round_bound(c.model, g.n));
      CHECK(sim.trace.max_edge_load <= 1);
    }
  }
}

TEST_CASE("third-order graph heads are refused") {
  const TransformerModel model = build_cycle_detector(CycleKind::kDirectedCycle3, 4);
  const GraphInstance g = gen_random_graph(4, 0.5, false, 3);
  CHECK_THROWS_AS(simulate_transformer(model, graph_input_matrix(g)), PreconditionError);
}

TEST_CASE("message log is consistent with the trace") {
  const TransformerModel model = build_match2(4, 7);
  const Matrix x = sequence_input_matrix(gen_uniform_sequence(4, 7, 2));
  SimulationOptions opts;
  opts.keep_log = true;
  const SimulationResult r = simulate_transformer(model, x, opts);
  CHECK(static_cast<long long>(r.trace.log.size()) == r.trace.messages);
  const CongestGraph g = build_congest_graph(simulation_graph_size(model, 4));
  std::set<std::pair<int, int>> edges;
  for (const auto& [a, b] : g.edges) {
    edges.insert({a, b});
    edges.insert({b, a});
  }
  std::set<std::tuple<int, int, int>> per_round;
  for (const auto& m : r.trace.log) {
    CHECK(edges.count({m.from, m.to}) == 1);
    CHECK(m.round >= 1);
    CHECK(m.round <= r.trace.rounds);
    CHECK(per_round.insert({m.round, m.from, m.to}).second);  // one payload per edge per round
  }
  long long stage_rounds = 0;
  for (const auto& s : r.trace.stages) stage_rounds += s.rounds;
  CHECK(stage_rounds == r.trace.rounds);
  CHECK(r.trace.bits_total == r.trace.messages * r.trace.payload_bits);
}

TEST_CASE("trace serialization") {
  const TransformerModel model = build_match2(3, 7);
  const SimulationResult r = simulate_transformer(model, sequence_input_matrix(gen_uniform_sequence(3, 7, 1)));
  const Json j = trace_to_json(r.trace, "match2");
  CHECK(j["rounds"] == r.trace.rounds);
  CHECK(j.contains("layers"));
  CHECK(j.contains("stages"));
  const std::string header = trace_csv_header(), row = trace_csv_row(r.trace, "match2");
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}

TEST_CASE("higher-order heads are refused") {
  const TransformerModel model = build_match3_third_order(3, 5);
  CHECK_THROWS_AS(simulate_transformer(model, sequence_input_matrix(gen_uniform_sequence(3, 5, 1))), PreconditionError);
}
