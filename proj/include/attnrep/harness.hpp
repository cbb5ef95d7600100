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

// Verification runs behind the command-line tool: build a model, generate
// instances, compare against the oracle and emit a versioned JSON report.

#ifndef ATTNREP_HARNESS_HPP_
#define ATTNREP_HARNESS_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "attnrep/congest.hpp"
#include "attnrep/constructions.hpp"
#include "attnrep/tasks.hpp"

namespace attnrep {

inline constexpr double kExhaustiveLimit = 1e6;
inline constexpr char kVerifySchema[] = "attnrep.verify/1";
inline constexpr char kCongestSchema[] = "attnrep.congest/1";
inline constexpr char kInstanceSchema[] = "attnrep.instance/1";
inline constexpr double kFidelityTolerance = 1e-9;

class UnknownTaskError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

struct TaskParams {
  int n = 0;
  int m = 0;          // modulus M; 0 picks the smallest prime >= N + 3
  int q = 2;
  int k = 3;          // locality window for match3-local
  int m_embed = 6;    // embedding width for match3-multilayer
  int d_prime = 4;
  double eps = 0.1;
  std::string kind = "cycle5";  // disj-graph target
  std::string a_hex, b_hex;     // explicit DISJ inputs for gen
  std::uint64_t seed = 1;
  int count = 100;
};

Json params_to_json(const TaskParams& p);

const std::vector<std::string>& verify_tasks();
const std::vector<std::string>& gen_tasks();

// Worker threads for instance loops: ATTNREP_WORKERS, else the hardware
// concurrency.
int worker_count();
// Runs body(0..count-1) across workers; body must only touch its own slot.
void parallel_for(int count, const std::function<void(int)>& body);

int smallest_prime_at_least(int v);

// Model used by `task` under `p` (match/qsa/cycle tasks only).
TransformerModel build_task_model(const std::string& task, const TaskParams& p);

using TaskInstance = std::variant<QsaInstance, SequenceInstance, GraphInstance, DisjInstance>;

// Domain size used to pick exhaustive enumeration; +inf for real inputs.
double task_domain_size(const std::string& task, const TaskParams& p);
// Instance `index`: the index-th domain element when exhaustive, else a
// seeded draw from mix_seed(p.seed, index).
TaskInstance task_instance(const std::string& task, const TaskParams& p, std::uint64_t index, bool exhaustive);
Matrix task_input(const TaskInstance& inst);

struct VerifyReport {
  std::string task;
  std::string builder;
  Json params;
  Json constants;
  long long instance_count = 0;
  bool exhaustive = false;
  bool real_valued = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  long long mismatch_count = 0;
  long long mass_violations = 0;  // qsa-fixed softmax mass bounds
  double runtime_s = 0.0;
  bool pass = false;
  std::vector<std::string> failures;  // first few diagnostics
};

VerifyReport cmd_verify(const std::string& task, const TaskParams& p);
// `with_runtime` false drops the only nondeterministic field.
Json report_to_json(const VerifyReport& r, bool with_runtime = true);

struct CongestReport {
  std::string task;
  Json params;
  int n = 0;
  int instances = 0;
  long long fidelity_mismatches = 0;
  double max_pre_mlp_diff = 0.0;
  int max_rounds = 0;
  long long round_limit = 0;
  int task_graph_cut = 0;
  int task_graph_cut_bound = 0;
  bool bounds_ok = false;
  bool pass = false;
  ProtocolTrace trace;  // first instance
  std::vector<std::string> failures;
};

CongestReport cmd_congest(const std::string& task, const TaskParams& p);
Json congest_report_to_json(const CongestReport& r);

// Instance file for a generator task; deterministic in (task, params).
Json cmd_gen(const std::string& task, const TaskParams& p);

// Writes `j` (pretty-printed, trailing newline); throws on failure.
void write_json_file(const std::string& path, const Json& j);

// Bits of a hex string, least significant first, padded/truncated to n.
std::vector<std::uint8_t> hex_bits(const std::string& hex, int n);

}  // namespace attnrep

#endif  // ATTNREP_HARNESS_HPP_
