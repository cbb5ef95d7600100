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

// Weight builders for the sparse-averaging, match-detection and cycle
// detection constructions. Sequence-task models take rows (i, x_i); qSA
// models take rows (z_i, y_i, i, active); graph models take adjacency rows.

#ifndef ATTNREP_CONSTRUCTIONS_HPP_
#define ATTNREP_CONSTRUCTIONS_HPP_

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "attnrep/certificates.hpp"
#include "attnrep/tasks.hpp"
#include "attnrep/transformer.hpp"

namespace attnrep {

// Registers every element map and kappa used by the builders. Idempotent.
void register_construction_maps();
// model_from_json after registering the construction maps.
TransformerModel load_model(const Json& j);

struct QsaBuildSpec {
  int n = 0;
  int q = 0;
  int d_prime = 0;
  double epsilon = 0.1;
  std::uint64_t seed = 1;
  double c0 = kDefaultC0;
  std::optional<int> frac_bits_override;

  void validate() const;
  int alpha() const;    // ceil(2 ln(4N / eps))
  // ceil(log2(4 alpha sqrt(m') (1 + 2 sqrt(q)) / eps)) + 1 unless overridden.
  int frac_bits(int m_prime) const;
  FixedFormat format(int m_prime) const;
};

// Every q-subset when there are at most kExhaustiveSubsets of them, else
// an empty list (meaning sampled validation).
inline constexpr double kExhaustiveSubsets = 2e5;
std::vector<std::vector<int>> all_subsets_if_small(int n, int q);

// Key bank validated on `probes` (see sample_key_bank). When every resample
// fails, c0 is doubled up to kMaxC0Doublings times before giving up; the
// returned bank records the constant it was drawn with.
inline constexpr int kMaxC0Doublings = 2;
KeyBank certified_key_bank(int n, int q, std::uint64_t seed, double c0,
                           const std::vector<std::vector<int>>& probes);

TransformerModel build_qsa_fixed(const QsaBuildSpec& spec);
// The validated key bank a qsa-fixed model with this spec uses: every
// q-subset is certified when that family is small enough.
KeyBank qsa_key_bank(const QsaBuildSpec& spec);

TransformerModel build_qsa_inf(int n, int q, int d_prime, double epsilon);

// Score scale constants.
double match_scale(int n, int m);       // M^2 ln(6N)
double third_order_scale(int n, int m); // M^2 ln(6N^2)
double bigram_scale(int n);             // (N+1)^2 ln(6N)
double graph_scale(int n);              // 20 ln(N+1)

TransformerModel build_match2(int n, int m);
TransformerModel build_match3_bigram(int n, int m);
TransformerModel build_match3_local(int n, int m, int k, std::uint64_t seed = 1);
TransformerModel build_match3_third_order(int n, int m);

struct PairSchedule {
  int n = 0;
  int ell = 0;
  std::vector<std::vector<std::pair<int, int>>> layers;  // 1-based pairs (a < b)

  int depth() const { return static_cast<int>(layers.size()); }
};

// Round-robin (circle method) pairs packed first-fit into layers of at most
// ell = floor(m/2) - 1 endpoint-disjoint pairs.
PairSchedule build_pair_schedule(int n, int m);
TransformerModel build_match3_multilayer(int n, int m_mod, int m_embed);

// Expects inputs in the embed_disj_match3 image; the first MLP rejects
// anything else.
TransformerModel build_match3_restricted_twolayer(int n, int m);

TransformerModel build_cycle_detector(CycleKind kind, int n);

// Bit vector read from column 0 of a model output (threshold 1/2).
std::vector<int> output_bits(const Matrix& out);

}  // namespace attnrep

#endif  // ATTNREP_CONSTRUCTIONS_HPP_
