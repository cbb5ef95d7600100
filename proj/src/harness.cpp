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

#include "attnrep/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "attnrep/rng.hpp"

namespace attnrep {
namespace {

bool is_qsa(const std::string& t) { return t == "qsa-fixed" || t == "qsa-inf"; }
bool is_cycle(const std::string& t) { return t == "dcycle3" || t == "cycle5"; }
bool is_disj(const std::string& t) { return t == "disj-qsa" || t == "disj-match3" || t == "disj-graph"; }
bool is_sequence(const std::string& t) {
  return t == "match2" || t == "match3-bigram" || t == "match3-local" || t == "match3-3rd" ||
         t == "match3-multilayer" || t == "match3-restricted";
}

void require_task(const std::string& task) {
  const auto& all = verify_tasks();
  if (std::find(all.begin(), all.end(), task) == all.end()) throw UnknownTaskError("unknown task '" + task + "'");
}

int modulus(const TaskParams& p) { return p.m > 0 ? p.m : smallest_prime_at_least(p.n + 3); }

CycleKind disj_graph_kind(const TaskParams& p) { return parse_cycle_kind(p.kind); }

int disj_bits(const std::string& task, const TaskParams& p) {
  if (task == "disj-qsa") {
    if (p.q < 1) throw PreconditionError("disj-qsa: q must be positive (n = q)");
    return p.q;
  }
  if (task == "disj-match3" || task == "match3-restricted") {
    if (p.n < 3 || p.n % 2 == 0) throw PreconditionError(task + ": N must be odd and at least 3");
    return (p.n - 1) / 2;
  }
  const int blocks = disj_graph_kind(p) == CycleKind::kCycle5 ? 5 : 4;
  if (p.n < blocks || p.n % blocks != 0) {
    throw PreconditionError("disj-graph: N must be a positive multiple of " + std::to_string(blocks));
  }
  const int side = p.n / blocks;
  return side * side;
}

std::uint64_t instance_seed(const TaskParams& p, std::uint64_t index) { return mix_seed(p.seed, index); }

double row_error(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) acc += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
    worst = std::max(worst, std::sqrt(acc));
  }
  return worst;
}

std::vector<int> expected_bits(const std::string& task, const TaskParams& p, const TaskInstance& inst) {
  if (const auto* s = std::get_if<SequenceInstance>(&inst)) {
    if (task == "match2") return match_oracle(*s, MatchVariant::kMatch2);
    if (task == "match3-bigram") return match_oracle(*s, MatchVariant::kMatch3Bigram);
    if (task == "match3-local") return match_oracle(*s, MatchVariant::kMatch3Local, p.k);
    return match_oracle(*s, MatchVariant::kMatch3);
  }
  const auto& g = std::get<GraphInstance>(inst);
  return cycle_oracle(g, parse_cycle_kind(task));
}

// Oracle-side predicate of a DISJ embedding, which must equal DISJ(a, b).
int embedded_predicate(const std::string& task, const TaskParams& p, const DisjInstance& d) {
  if (task == "disj-qsa") {
    const Matrix out = qsa_oracle(embed_disj_qsa(d));
    return out(out.rows() - 1, 0) == -1.0 ? 0 : 1;
  }
  if (task == "disj-match3") return match_oracle(embed_disj_match3(d, modulus(p)), MatchVariant::kMatch3)[0];
  const auto bits = cycle_oracle(embed_disj_graph(d, disj_graph_kind(p)), disj_graph_kind(p));
  return std::any_of(bits.begin(), bits.end(), [](int b) { return b != 0; }) ? 1 : 0;
}

std::string join_bits(const std::vector<int>& v) {
  std::string s;
  for (int b : v) s.push_back(b ? '1' : '0');
  return s;
}

struct Outcome {
  double error = 0.0;
  long long mismatches = 0;
  long long mass_violations = 0;
  std::string diag;
};

Json verify_constants(const TransformerModel* model) {
  Json c{{"C0", kDefaultC0},
         {"max_resamples", kMaxResamples},
         {"on_support_tol", kOnSupportTol},
         {"off_support_bound", kOffSupportBound},
         {"exhaustive_limit", kExhaustiveLimit},
         {"round_bound_constant", kRoundBoundConstant}};
  if (model) c["model"] = model->provenance;
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Json params_to_json(const TaskParams& p) {
  return Json{{"N", p.n}, {"M", p.m},           {"q", p.q},       {"K", p.k},       {"m_embed", p.m_embed},
              {"d_prime", p.d_prime}, {"eps", p.eps}, {"kind", p.kind}, {"seed", p.seed}, {"count", p.count}};
}

const std::vector<std::string>& verify_tasks() {
  static const std::vector<std::string> tasks{
      "qsa-fixed", "qsa-inf",           "match2",            "match3-bigram", "match3-local",
      "match3-3rd", "match3-multilayer", "match3-restricted", "dcycle3",       "cycle5",
      "disj-qsa",  "disj-match3",       "disj-graph"};
  return tasks;
}

const std::vector<std::string>& gen_tasks() {
  static const std::vector<std::string> tasks{"planted-match3", "uniform-match", "causal-qsa",  "qsa",
                                              "random-graph",   "disj-qsa",      "disj-match3", "disj-graph"};
  return tasks;
}

int worker_count() {
  if (const char* env = std::getenv("ATTNREP_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return w;
    } catch (const std::exception&) {
    }
    throw PreconditionError(std::string("ATTNREP_WORKERS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int count, const std::function<void(int)>& body) {
  const int workers = std::min(worker_count(), std::max(count, 1));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int smallest_prime_at_least(int v) {
  for (int c = std::max(v, 2);; ++c) {
    bool prime = true;
    for (int d = 2; d * d <= c; ++d) {
      if (c % d == 0) {
        prime = false;
        break;
      }
    }
    if (prime) return c;
  }
}

TransformerModel build_task_model(const std::string& task, const TaskParams& p) {
  require_task(task);
  if (task == "qsa-fixed") {
    QsaBuildSpec spec;
    spec.n = p.n;
    spec.q = p.q;
    spec.d_prime = p.d_prime;
    spec.epsilon = p.eps;
    spec.seed = p.seed;
    return build_qsa_fixed(spec);
  }
  if (task == "qsa-inf") return build_qsa_inf(p.n, p.q, p.d_prime, p.eps);
  const int m = modulus(p);
  if (task == "match2") return build_match2(p.n, m);
  if (task == "match3-bigram") return build_match3_bigram(p.n, m);
  if (task == "match3-local") return build_match3_local(p.n, m, p.k, p.seed);
  if (task == "match3-3rd") return build_match3_third_order(p.n, m);
  if (task == "match3-multilayer") return build_match3_multilayer(p.n, m, p.m_embed);
  if (task == "match3-restricted") return build_match3_restricted_twolayer(p.n, m);
  if (is_cycle(task)) return build_cycle_detector(parse_cycle_kind(task), p.n);
  throw PreconditionError("task '" + task + "' has no model");
}

double task_domain_size(const std::string& task, const TaskParams& p) {
  require_task(task);
  if (is_qsa(task)) return std::numeric_limits<double>::infinity();
  if (task == "match3-restricted") return std::pow(2.0, 2 * disj_bits(task, p));
  if (is_sequence(task)) return std::pow(static_cast<double>(modulus(p)), p.n);
  if (task == "dcycle3") return std::pow(2.0, static_cast<double>(p.n) * (p.n - 1));
  if (task == "cycle5") return std::pow(2.0, static_cast<double>(p.n) * (p.n - 1) / 2);
  return std::pow(4.0, disj_bits(task, p));
}

TaskInstance task_instance(const std::string& task, const TaskParams& p, std::uint64_t index, bool exhaustive) {
  require_task(task);
  const std::uint64_t seed = instance_seed(p, index);
  if (is_qsa(task)) return gen_qsa(p.n, p.q, p.d_prime, seed);
  if (is_disj(task)) {
    const int n = disj_bits(task, p);
    return exhaustive ? disj_from_index(n, index) : gen_disj(n, seed);
  }
  const int m = modulus(p);
  if (task == "match3-restricted") {
    const int n = disj_bits(task, p);
    if (exhaustive) return embed_disj_match3(disj_from_index(n, index), m);
    if (index % 2 == 1) return embed_disj_match3(gen_disj(n, seed), m);
    Rng rng(seed);
    DisjInstance d{std::vector<std::uint8_t>(n), std::vector<std::uint8_t>(n)};
    for (int i = 0; i < n; ++i) {
      d.a[i] = rng.coin() ? 1 : 0;
      d.b[i] = rng.coin() ? 1 : 0;
    }
    return embed_disj_match3(d, m);
  }
  if (is_sequence(task)) {
    if (exhaustive) {
      SequenceInstance s{p.n, m, std::vector<int>(p.n)};
      std::uint64_t code = index;
      for (int i = 0; i < p.n; ++i) {
        s.x[i] = static_cast<int>(code % m) + 1;
        code /= m;
      }
      return s;
    }
    if (task != "match2" && index % 2 == 1) return gen_planted_match3(p.n, m, seed).instance;
    return gen_uniform_sequence(p.n, m, seed);
  }
  // Cycle tasks.
  const CycleKind kind = parse_cycle_kind(task);
  const bool symmetric = kind == CycleKind::kCycle5;
  if (exhaustive) {
    GraphInstance g{p.n, symmetric, std::vector<std::uint8_t>(static_cast<std::size_t>(p.n) * p.n, 0)};
    std::uint64_t code = index;
    for (int i = 0; i < p.n; ++i) {
      for (int j = symmetric ? i + 1 : 0; j < p.n; ++j) {
        if (i == j) continue;
        const std::uint8_t bit = code & 1U;
        code >>= 1;
        g.adj[static_cast<std::size_t>(i) * p.n + j] = bit;
        if (symmetric) g.adj[static_cast<std::size_t>(j) * p.n + i] = bit;
      }
    }
    return g;
  }
  const int blocks = symmetric ? 5 : 4;
  if (index % 2 == 1 && p.n % blocks == 0) {
    const int side = p.n / blocks;
    return embed_disj_graph(gen_disj(side * side, seed), kind);
  }
  static constexpr double kDirected[] = {0.1, 0.2, 0.3};
  static constexpr double kUndirected[] = {0.05, 0.1, 0.2};
  const double prob = (symmetric ? kUndirected : kDirected)[(index / 2) % 3];
  return gen_random_graph(p.n, prob, symmetric, seed);
}

Matrix task_input(const TaskInstance& inst) {
  if (const auto* q = std::get_if<QsaInstance>(&inst)) return qsa_input_matrix(*q);
  if (const auto* s = std::get_if<SequenceInstance>(&inst)) return sequence_input_matrix(*s);
  if (const auto* g = std::get_if<GraphInstance>(&inst)) return graph_input_matrix(*g);
  throw PreconditionError("DISJ instances have no model input");
}

VerifyReport cmd_verify(const std::string& task, const TaskParams& p) {
  const auto t0 = std::chrono::steady_clock::now();
  require_task(task);
  VerifyReport r;
  r.task = task;
  r.params = params_to_json(p);
  r.params["M"] = is_sequence(task) || task == "disj-match3" ? modulus(p) : p.m;
  r.real_valued = is_qsa(task);
  r.tolerance = r.real_valued ? p.eps : 0.0;

  std::optional<TransformerModel> model;
  if (!is_disj(task)) model = build_task_model(task, p);
  r.builder = model ? model->provenance.value("construction", task) : "none";
  r.constants = verify_constants(model ? &*model : nullptr);

  const double domain = task_domain_size(task, p);
  r.exhaustive = domain <= kExhaustiveLimit;
  const long long count = r.exhaustive ? static_cast<long long>(domain) : p.count;
  if (count < 1) throw PreconditionError("verify: instance count must be positive");
  r.instance_count = count;

  std::vector<Outcome> outcomes(count);
  parallel_for(static_cast<int>(count), [&](int idx) {
    Outcome& o = outcomes[idx];
    try {
      const TaskInstance inst = task_instance(task, p, static_cast<std::uint64_t>(idx), r.exhaustive);
      if (is_disj(task)) {
        const auto& d = std::get<DisjInstance>(inst);
        const int got = embedded_predicate(task, p, d), want = disj(d);
        if (got != want) {
          o.mismatches = 1;
          o.diag = "predicate " + std::to_string(got) + " != DISJ " + std::to_string(want);
        }
        return;
      }
      const Matrix x = task_input(inst);
      if (r.real_valued) {
        const auto& q = std::get<QsaInstance>(inst);
        const ModelTrace tr = run_transformer_traced(*model, x);
        o.error = row_error(tr.output, qsa_oracle(q));
        if (task == "qsa-fixed") {
          const auto& unit = std::get<AttentionUnit>(model->layers[0].heads[0]);
          const Matrix w = attention_weights(unit, tr.layers[0].mlp_output);
          const double lo = (1.0 - p.eps / 2.0) / q.q, hi = (1.0 + p.eps / 2.0) / q.q, off = p.eps / (2.0 * q.n);
          for (int i = 0; i < q.n; ++i) {
            if (!q.active[i]) continue;
            std::vector<char> on(q.n, 0);
            for (int j : q.y[i]) on[j - 1] = 1;
            for (int j = 0; j < q.n; ++j) {
              const double v = w(i, j);
              if (on[j] ? (v < lo || v > hi) : v > off) ++o.mass_violations;
            }
          }
        }
        if (o.error > p.eps || o.mass_violations > 0) {
          o.diag = "error " + std::to_string(o.error) + ", mass violations " + std::to_string(o.mass_violations);
        }
        return;
      }
      const std::vector<int> got = output_bits(run_transformer(*model, x));
      std::vector<int> want = expected_bits(task, p, inst);
      if (task == "match3-restricted") {
        if (got[0] != want[0]) {
          o.mismatches = 1;
          o.diag = "position 1: model " + std::to_string(got[0]) + ", oracle " + std::to_string(want[0]);
        }
        return;
      }
      for (std::size_t i = 0; i < got.size(); ++i) o.mismatches += got[i] != want[i] ? 1 : 0;
      if (o.mismatches) o.diag = "model " + join_bits(got) + ", oracle " + join_bits(want);
    } catch (const std::exception& e) {
      o.mismatches += 1;
      o.error = std::numeric_limits<double>::infinity();
      o.diag = std::string("exception: ") + e.what();
    }
  });
  for (long long idx = 0; idx < count; ++idx) {
    const Outcome& o = outcomes[idx];
    r.max_error = std::max(r.max_error, o.error);
    r.mismatch_count += o.mismatches;
    r.mass_violations += o.mass_violations;
    if (!o.diag.empty() && r.failures.size() < 5) {
      r.failures.push_back("instance " + std::to_string(idx) + (r.exhaustive ? "" : " (seed " +
                           std::to_string(instance_seed(p, idx)) + ")") + ": " + o.diag);
    }
  }
  r.pass = r.real_valued ? (r.max_error <= r.tolerance && r.mass_violations == 0 && r.mismatch_count == 0)
                         : r.mismatch_count == 0;
  r.runtime_s = seconds_since(t0);
  return r;
}

Json report_to_json(const VerifyReport& r, bool with_runtime) {
  Json j{{"schema", kVerifySchema},
         {"task", r.task},
         {"builder", r.builder},
         {"params", r.params},
         {"constants", r.constants},
         {"instance_count", r.instance_count},
         {"exhaustive", r.exhaustive},
         {"seeds", {{"base", r.params.at("seed")}, {"derivation", r.exhaustive ? "domain index" : "mix_seed(base, index)"}}},
         {"pass", r.pass},
         {"failures", r.failures}};
  if (r.real_valued) {
    j["max_error"] = r.max_error;
    j["tolerance"] = r.tolerance;
    j["mass_violations"] = r.mass_violations;
  } else {
    j["mismatch_count"] = r.mismatch_count;
  }
  if (with_runtime) j["runtime_s"] = r.runtime_s;
  return j;
}

CongestReport cmd_congest(const std::string& task, const TaskParams& p) {
  require_task(task);
  if (is_disj(task)) throw PreconditionError("congest: task '" + task + "' has no model to simulate");
  CongestReport r;
  r.task = task;
  r.params = params_to_json(p);
  const TransformerModel model = build_task_model(task, p);
  r.n = p.n;
  const int sim_n = simulation_graph_size(model, p.n);
  const CongestGraph g = build_congest_graph(sim_n);
  const CongestGraph task_graph = build_congest_graph(p.n);
  const Partition task_part = alice_bob_partition(task_graph);
  r.task_graph_cut = cut_size(task_graph, task_part);
  r.task_graph_cut_bound = cut_bound(task_graph);
  r.round_limit = round_bound(model, sim_n);
  r.instances = std::max(1, p.count);
  const bool bits = !is_qsa(task);
  const double final_tol = model.mlps.back().fmt ? model.mlps.back().fmt->step() : kFidelityTolerance;
  bool bounds = partition_level_ordered(task_graph, task_part) && r.task_graph_cut <= r.task_graph_cut_bound;

  for (int idx = 0; idx < r.instances; ++idx) {
    const Matrix x = task_input(task_instance(task, p, static_cast<std::uint64_t>(idx), false));
    const SimulationResult sim = simulate_transformer(g, model, x);
    const ModelTrace direct = run_transformer_traced(model, x);
    bool same = true;
    for (std::size_t l = 0; l < sim.attention_outputs.size(); ++l) {
      const double d = max_abs_diff(sim.attention_outputs[l], direct.layers[l].attention_output);
      r.max_pre_mlp_diff = std::max(r.max_pre_mlp_diff, d);
      if (d > kFidelityTolerance) same = false;
    }
    if (bits) {
      if (output_bits(sim.output) != output_bits(direct.output)) same = false;
    } else if (max_abs_diff(sim.output, direct.output) > final_tol) {
      same = false;
    }
    if (!same) {
      ++r.fidelity_mismatches;
      if (r.failures.size() < 5) {
        r.failures.push_back("instance " + std::to_string(idx) + ": simulated output differs from direct evaluation" +
                             (bits ? " (simulated " + join_bits(output_bits(sim.output)) + ", direct " +
                                         join_bits(output_bits(direct.output)) + ")"
                                   : ""));
      }
    }
    const ProtocolTrace& t = sim.trace;
    r.max_rounds = std::max(r.max_rounds, t.rounds);
    const bool ok = t.rounds <= r.round_limit && t.max_edge_load <= 1 &&
                    t.cut_bits <= static_cast<long long>(t.payload_bits) * t.rounds * t.cut_size;
    if (!ok && r.failures.size() < 5) r.failures.push_back("instance " + std::to_string(idx) + ": bound violated");
    bounds = bounds && ok;
    if (idx == 0) r.trace = t;
  }
  r.bounds_ok = bounds;
  r.pass = bounds && r.fidelity_mismatches == 0;
  return r;
}

Json congest_report_to_json(const CongestReport& r) {
  return Json{{"schema", kCongestSchema},
              {"task", r.task},
              {"params", r.params},
              {"N", r.n},
              {"instances", r.instances},
              {"fidelity_mismatches", r.fidelity_mismatches},
              {"max_pre_mlp_diff", r.max_pre_mlp_diff},
              {"fidelity_tolerance", kFidelityTolerance},
              {"max_rounds", r.max_rounds},
              {"round_limit", r.round_limit},
              {"round_bound_constant", kRoundBoundConstant},
              {"task_graph_cut_size", r.task_graph_cut},
              {"task_graph_cut_bound", r.task_graph_cut_bound},
              {"bounds_ok", r.bounds_ok},
              {"pass", r.pass},
              {"failures", r.failures},
              {"trace", trace_to_json(r.trace, r.task)},
              {"csv_header", trace_csv_header()},
              {"csv_row", trace_csv_row(r.trace, r.task)}};
}

std::vector<std::uint8_t> hex_bits(const std::string& hex, int n) {
  std::string s = hex;
  if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) s = s.substr(2);
  std::vector<std::uint8_t> bits(n, 0);
  int pos = 0;
  for (auto it = s.rbegin(); it != s.rend(); ++it, pos += 4) {
    int v;
    const char c = *it;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw PreconditionError("hex_bits: invalid digit '" + std::string(1, c) + "'");
    for (int b = 0; b < 4; ++b) {
      if (!((v >> b) & 1)) continue;
      if (pos + b >= n) throw PreconditionError("hex_bits: value has more than " + std::to_string(n) + " bits");
      bits[pos + b] = 1;
    }
  }
  return bits;
}

Json cmd_gen(const std::string& task, const TaskParams& p) {
  const auto& all = gen_tasks();
  if (std::find(all.begin(), all.end(), task) == all.end()) throw UnknownTaskError("unknown generator task '" + task + "'");
  Json j{{"schema", kInstanceSchema}, {"task", task}, {"seed", p.seed}};
  if (task == "planted-match3") {
    const auto pm = gen_planted_match3(p.n, modulus(p), p.seed);
    j["label"] = pm.planted ? "E2" : "E1";
    if (pm.planted) j["planted_triple"] = {pm.j1, pm.j2, pm.j3};
    j["instance"] = instance_to_json(pm.instance);
  } else if (task == "uniform-match") {
    j["instance"] = instance_to_json(gen_uniform_sequence(p.n, modulus(p), p.seed));
  } else if (task == "causal-qsa") {
    j["instance"] = instance_to_json(gen_causal_qsa(p.n, p.seed));
  } else if (task == "qsa") {
    j["instance"] = instance_to_json(gen_qsa(p.n, p.q, p.d_prime, p.seed));
  } else if (task == "random-graph") {
    const bool symmetric = p.kind == "cycle5";
    j["instance"] = instance_to_json(gen_random_graph(p.n, p.eps, symmetric, p.seed));
    j["edge_prob"] = p.eps;
  } else {
    const int n = disj_bits(task, p);
    DisjInstance d = gen_disj(n, p.seed);
    if (!p.a_hex.empty()) d.a = hex_bits(p.a_hex, n);
    if (!p.b_hex.empty()) d.b = hex_bits(p.b_hex, n);
    j["disj"] = instance_to_json(d);
    j["label"] = disj(d);
    if (task == "disj-qsa") j["instance"] = instance_to_json(embed_disj_qsa(d));
    else if (task == "disj-match3") j["instance"] = instance_to_json(embed_disj_match3(d, modulus(p)));
    else j["instance"] = instance_to_json(embed_disj_graph(d, disj_graph_kind(p)));
  }
  return j;
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace attnrep
