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

// attnrep: verify constructions, simulate them in CONGEST, generate instances.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "attnrep/harness.hpp"

namespace {

void add_common(CLI::App* cmd, std::string& task, attnrep::TaskParams& p, std::string& out) {
  cmd->add_option("--task", task, "task tag")->required();
  cmd->add_option("--N", p.n, "sequence length / vertex count");
  cmd->add_option("--M", p.m, "modulus (default: smallest prime >= N + 3)");
  cmd->add_option("--q", p.q, "sparsity q");
  cmd->add_option("--K", p.k, "locality window for match3-local");
  cmd->add_option("--eps", p.eps, "accuracy target (edge probability for gen random-graph)");
  cmd->add_option("--m-embed", p.m_embed, "embedding width for match3-multilayer");
  cmd->add_option("--d-prime", p.d_prime, "data dimension d' for qSA");
  cmd->add_option("--kind", p.kind, "cycle kind for disj-graph / random-graph (dcycle3 or cycle5)");
  cmd->add_option("--seed", p.seed, "base seed");
  cmd->add_option("--out", out, "output JSON path (stdout if omitted)");
}

void emit(const std::string& out, const attnrep::Json& j) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    attnrep::write_json_file(out, j);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnrep: transformer construction verification harness"};
  app.require_subcommand(1);

  std::string task, out;
  attnrep::TaskParams p;

  auto* verify = app.add_subcommand("verify", "check a construction against its oracle");
  add_common(verify, task, p, out);
  verify->add_option("--count", p.count, "random instances when the domain is too large to enumerate");

  auto* congest = app.add_subcommand("congest", "simulate a model in CONGEST and check fidelity and bounds");
  add_common(congest, task, p, out);
  int congest_count = 10;
  congest->add_option("--count", congest_count, "instances to simulate");

  auto* gen = app.add_subcommand("gen", "write one generated instance");
  add_common(gen, task, p, out);
  gen->add_option("--a", p.a_hex, "DISJ input a as hex, least significant bit = element 1");
  gen->add_option("--b", p.b_hex, "DISJ input b as hex");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      const auto r = attnrep::cmd_verify(task, p);
      emit(out, attnrep::report_to_json(r));
      for (const auto& f : r.failures) std::cerr << "failure: " << f << '\n';
      std::cerr << (r.pass ? "PASS " : "FAIL ") << task << ": " << r.instance_count
                << (r.exhaustive ? " instances (exhaustive)" : " instances") << '\n';
      return r.pass ? 0 : 1;
    }
    if (congest->parsed()) {
      p.count = congest_count;
      const auto r = attnrep::cmd_congest(task, p);
      emit(out, attnrep::congest_report_to_json(r));
      for (const auto& f : r.failures) std::cerr << "failure: " << f << '\n';
      std::cerr << (r.pass ? "PASS " : "FAIL ") << task << ": rounds " << r.max_rounds << " / " << r.round_limit
                << ", cut " << r.task_graph_cut << '\n';
      return r.pass ? 0 : 1;
    }
    emit(out, attnrep::cmd_gen(task, p));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
