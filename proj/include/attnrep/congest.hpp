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

// Round-synchronous CONGEST simulation of transformers on the tree graph
// G^N: root u_i per element, a leaf v_{i,j} per ordered pair, and one
// binary tree B_i per root whose leaves are v_{i,1}, v_{1,i}, ..., v_{i,N},
// v_{N,i} (v_{i,i} listed once).

#ifndef ATTNREP_CONGEST_HPP_
#define ATTNREP_CONGEST_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnrep/transformer.hpp"

namespace attnrep {

inline constexpr int kRoundBoundConstant = 40;

struct CongestTree {
  int root_index = 0;                        // i, 1-based
  std::vector<int> nodes;                    // local -> global id; local 0 is u_i
  std::vector<int> parent;                   // local, -1 at the root
  std::vector<std::array<int, 2>> children;  // local, -1 when absent
  std::vector<int> parent_edge;              // global edge id, -1 at the root
  std::vector<int> depth;
  std::vector<int> leaves;                   // local ids in left-to-right order
  // For leaves: the (a, b) of v_{a,b}; (0, 0) for internal nodes.
  std::vector<std::pair<int, int>> leaf_pair;
  std::vector<int> local_of_leaf;  // (a - 1) N + (b - 1) -> local id, -1 if absent

  int height() const;
  bool is_leaf(int local) const { return children[local][0] < 0; }
};

struct CongestGraph {
  int n = 0;
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;  // global endpoints (parent, child)
  std::vector<int> edge_tree;              // 1-based tree index per edge
  std::vector<CongestTree> trees;          // trees[i - 1] is B_i

  int root(int i) const { return i - 1; }
  int leaf(int i, int j) const { return n + (i - 1) * n + (j - 1); }
  bool is_root(int id) const { return id < n; }
  bool is_leaf(int id) const { return id >= n && id < n + n * n; }
  std::string label(int id) const;
  int tree_depth() const;  // largest tree height
  int max_degree() const;
  std::vector<std::vector<int>> adjacency() const;
  int diameter() const;  // all-pairs BFS; intended for small N
};

CongestGraph build_congest_graph(int n);

struct Partition {
  std::vector<std::uint8_t> alice;  // per global node

  bool on_alice(int id) const { return alice[id] != 0; }
};

Partition alice_bob_partition(const CongestGraph& g);
// True when, at every level of every tree, Alice's nodes precede Bob's.
bool partition_level_ordered(const CongestGraph& g, const Partition& p);
int cut_size(const CongestGraph& g, const Partition& p);
// N * (height + 1), the per-tree one-cut-per-level bound.
int cut_bound(const CongestGraph& g);

struct MessageRecord {
  int round = 0;
  int from = 0;
  int to = 0;
  int tree = 0;
};

struct StageRounds {
  int layer = 0;
  int head = 0;
  std::string stage;
  int rounds = 0;
  long long messages = 0;
};

struct LayerRounds {
  int layer = 0;
  int rounds = 0;
  long long messages = 0;
};

struct ProtocolTrace {
  int graph_n = 0;
  int payload_bits = 64;  // p; 64 when the model is unquantized
  int rounds = 0;
  long long messages = 0;
  long long bits_total = 0;
  int cut_size = 0;             // of the simulation graph
  long long cut_messages = 0;
  long long cut_bits = 0;
  // Bits an Alice/Bob pair would spend on log-normalizer exchange instead of
  // full-precision sums: one O(p log log N)-bit message per query per head.
  long long normalizer_bits_analytic = 0;
  int max_edge_load = 0;  // most payloads seen on one directed edge in a round
  std::vector<LayerRounds> layers;
  std::vector<StageRounds> stages;
  std::vector<MessageRecord> log;  // filled when requested
};

struct SimulationOptions {
  bool keep_log = false;
};

struct SimulationResult {
  Matrix output;                         // rows u_1..u_N (without <END>)
  std::vector<Matrix> attention_outputs;  // per layer, interior rows
  ProtocolTrace trace;
};

// Runs the model on G^{N'} where N' counts the <END> row when the model
// appends one. Supports standard heads and second-order graph heads.
SimulationResult simulate_transformer(const CongestGraph& g, const TransformerModel& model, const Matrix& x,
                                      const SimulationOptions& options = {});
// Builds the matching graph itself.
SimulationResult simulate_transformer(const TransformerModel& model, const Matrix& x,
                                      const SimulationOptions& options = {});

// Interior sequence length the simulator needs for `n` input rows.
int simulation_graph_size(const TransformerModel& model, int n);

// kRoundBoundConstant * H * D * (m + ceil(log2 N)).
long long round_bound(const TransformerModel& model, int n);

Json trace_to_json(const ProtocolTrace& trace, const std::string& model_tag);
std::string trace_csv_header();
std::string trace_csv_row(const ProtocolTrace& trace, const std::string& model_tag);

}  // namespace attnrep

#endif  // ATTNREP_CONGEST_HPP_
