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

// Task instances, brute-force oracles and instance generators, including
// the set-disjointness embeddings. Indices in instance payloads are 1-based
// as in the task definitions; C++ containers are 0-based.

#ifndef ATTNREP_TASKS_HPP_
#define ATTNREP_TASKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "attnrep/numerics.hpp"
#include "json.hpp"

namespace attnrep {

struct QsaInstance {
  int n = 0;
  int q = 0;
  int d_prime = 0;
  std::vector<std::vector<double>> z;  // n vectors of length d_prime
  std::vector<std::vector<int>> y;     // n sets of q indices in [1, n]
  // Inactive elements model an empty index set; they hold q copies of their
  // own index and the oracle writes zeros for them.
  std::vector<bool> active;

  void validate() const;
};

struct SequenceInstance {
  int n = 0;
  int m = 0;              // modulus M
  std::vector<int> x;     // values in [1, M]; M stands for residue 0

  void validate() const;
};

struct GraphInstance {
  int n = 0;
  bool symmetric = false;
  std::vector<std::uint8_t> adj;  // row-major n x n

  std::uint8_t at(int i, int j) const { return adj[static_cast<std::size_t>(i) * n + j]; }
  void validate() const;
};

struct DisjInstance {
  std::vector<std::uint8_t> a;
  std::vector<std::uint8_t> b;

  int n() const { return static_cast<int>(a.size()); }
  void validate() const;
};

// 1 iff a and b intersect.
int disj(const DisjInstance& d);

enum class MatchVariant { kMatch2, kMatch3, kMatch3Bigram, kMatch3Local };

Matrix qsa_oracle(const QsaInstance& inst);
// Row i is (z_i, y_i, i) with an extra trailing active flag.
Matrix qsa_input_matrix(const QsaInstance& inst);

std::vector<int> match_oracle(const SequenceInstance& inst, MatchVariant variant, int k = 0);
// Rows (i, x_i).
Matrix sequence_input_matrix(const SequenceInstance& inst);

enum class CycleKind { kDirectedCycle3, kCycle5 };

std::vector<int> cycle_oracle(const GraphInstance& inst, CycleKind kind);
// Adjacency rows as a 0/1 matrix.
Matrix graph_input_matrix(const GraphInstance& inst);

struct PlantedMatch3 {
  SequenceInstance instance;
  bool planted = false;  // label E2
  int j1 = 0, j2 = 0, j3 = 0;
};

PlantedMatch3 gen_planted_match3(int n, int m, std::uint64_t seed);
SequenceInstance gen_uniform_sequence(int n, int m, std::uint64_t seed);
GraphInstance gen_random_graph(int n, double edge_prob, bool symmetric, std::uint64_t seed);
DisjInstance gen_disj(int n, std::uint64_t seed);
DisjInstance disj_from_index(int n, std::uint64_t code);  // bits of a then b
QsaInstance gen_qsa(int n, int q, int d_prime, std::uint64_t seed);

// Causal family with N = 2n + 1: the first n + 1 elements carry +-1 data and
// no index set, the last n point at one of the first n + 1 elements.
QsaInstance gen_causal_qsa(int n_total, std::uint64_t seed);
QsaInstance causal_qsa_from_disj(const DisjInstance& d);

QsaInstance embed_disj_qsa(const DisjInstance& d, int d_prime = 1);
// Requires N = 2n + 1 and M >= N + 3 (default N + 3).
SequenceInstance embed_disj_match3(const DisjInstance& d, int m = 0);
// True iff `inst` lies in the image domain of embed_disj_match3.
bool in_restricted_match3_domain(const SequenceInstance& inst, std::string* why = nullptr);
GraphInstance embed_disj_graph(const DisjInstance& d, CycleKind kind);

std::string variant_name(MatchVariant v);
std::string cycle_name(CycleKind k);
CycleKind parse_cycle_kind(const std::string& s);

nlohmann::json instance_to_json(const QsaInstance& inst);
nlohmann::json instance_to_json(const SequenceInstance& inst);
nlohmann::json instance_to_json(const GraphInstance& inst);
nlohmann::json instance_to_json(const DisjInstance& inst);
QsaInstance qsa_from_json(const nlohmann::json& j);
SequenceInstance sequence_from_json(const nlohmann::json& j);
GraphInstance graph_from_json(const nlohmann::json& j);
DisjInstance disj_from_json(const nlohmann::json& j);

}  // namespace attnrep

#endif  // ATTNREP_TASKS_HPP_
