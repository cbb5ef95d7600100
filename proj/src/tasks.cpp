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

#include "attnrep/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include "attnrep/rng.hpp"

namespace attnrep {

using Json = nlohmann::json;

namespace {

int mod(long long v, int m) {
  const long long r = v % m;
  return static_cast<int>(r < 0 ? r + m : r);
}

// Residue class in [1, M].
int residue_rep(long long v, int m) {
  const int r = mod(v, m);
  return r == 0 ? m : r;
}

}  // namespace

void QsaInstance::validate() const {
  if (n < 1 || q < 1 || d_prime < 1) throw PreconditionError("qSA instance: N, q, d' must be positive");
  if (static_cast<int>(z.size()) != n || static_cast<int>(y.size()) != n ||
      static_cast<int>(active.size()) != n) {
    throw DimensionError("qSA instance: expected N rows of z, y and active flags");
  }
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(z[i].size()) != d_prime) throw DimensionError("qSA instance: z width");
    double sq = 0.0;
    for (double v : z[i]) sq += v * v;
    if (sq > 1.0 + 1e-12) {
      throw PreconditionError("qSA instance: z_" + std::to_string(i + 1) + " leaves the unit ball");
    }
    if (static_cast<int>(y[i].size()) != q) throw PreconditionError("qSA instance: |y_i| != q");
    if (!active[i]) continue;
    std::set<int> seen;
    for (int j : y[i]) {
      if (j < 1 || j > n) throw PreconditionError("qSA instance: index outside [N]");
      if (!seen.insert(j).second) throw PreconditionError("qSA instance: repeated index in y_i");
    }
  }
}

void SequenceInstance::validate() const {
  if (n < 1 || m < 2) throw PreconditionError("sequence instance: need N >= 1 and M >= 2");
  if (static_cast<int>(x.size()) != n) throw DimensionError("sequence instance: expected N values");
  for (int v : x) {
    if (v < 1 || v > m) throw PreconditionError("sequence instance: value outside [1, M]");
  }
}

void GraphInstance::validate() const {
  if (n < 1) throw PreconditionError("graph instance: N must be positive");
  if (adj.size() != static_cast<std::size_t>(n) * n) throw DimensionError("graph instance: adjacency size");
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (at(i, j) > 1) throw PreconditionError("graph instance: adjacency is not binary");
      if (symmetric && at(i, j) != at(j, i)) {
        throw PreconditionError("graph instance: flagged symmetric but X != X^T");
      }
    }
  }
}

void DisjInstance::validate() const {
  if (a.size() != b.size()) throw DimensionError("DISJ instance: |a| != |b|");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 1 || b[i] > 1) throw PreconditionError("DISJ instance: entries must be bits");
  }
}

int disj(const DisjInstance& d) {
  d.validate();
  for (int i = 0; i < d.n(); ++i)
    if (d.a[i] && d.b[i]) return 1;
  return 0;
}

Matrix qsa_oracle(const QsaInstance& inst) {
  inst.validate();
  Matrix out(inst.n, inst.d_prime);
  for (int i = 0; i < inst.n; ++i) {
    if (!inst.active[i]) continue;
    for (int j : inst.y[i])
      for (int c = 0; c < inst.d_prime; ++c) out(i, c) += inst.z[j - 1][c];
    for (int c = 0; c < inst.d_prime; ++c) out(i, c) /= inst.q;
  }
  return out;
}

Matrix qsa_input_matrix(const QsaInstance& inst) {
  inst.validate();
  Matrix x(inst.n, inst.d_prime + inst.q + 2);
  for (int i = 0; i < inst.n; ++i) {
    for (int c = 0; c < inst.d_prime; ++c) x(i, c) = inst.z[i][c];
    for (int k = 0; k < inst.q; ++k) x(i, inst.d_prime + k) = inst.y[i][k];
    x(i, inst.d_prime + inst.q) = i + 1;
    x(i, inst.d_prime + inst.q + 1) = inst.active[i] ? 1.0 : 0.0;
  }
  return x;
}

std::vector<int> match_oracle(const SequenceInstance& inst, MatchVariant variant, int k) {
  inst.validate();
  const int n = inst.n, m = inst.m;
  const auto& x = inst.x;
  std::vector<int> out(n, 0);
  switch (variant) {
    case MatchVariant::kMatch2:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n && !out[i]; ++j)
          if (mod(x[i] + x[j], m) == 0) out[i] = 1;
      break;
    case MatchVariant::kMatch3:
      for (int i = 0; i < n; ++i)
        for (int j1 = 0; j1 < n && !out[i]; ++j1)
          for (int j2 = 0; j2 < n; ++j2)
            if (mod(x[i] + x[j1] + x[j2], m) == 0) {
              out[i] = 1;
              break;
            }
      break;
    case MatchVariant::kMatch3Bigram:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j + 1 < n; ++j)
          if (mod(x[i] + x[j] + x[j + 1], m) == 0) {
            out[i] = 1;
            break;
          }
      break;
    case MatchVariant::kMatch3Local:
      if (k < 0 || k > n) throw PreconditionError("match3local: K must lie in [0, N]");
      for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - k), hi = std::min(n - 1, i + k);
        for (int j1 = lo; j1 <= hi && !out[i]; ++j1)
          for (int j2 = lo; j2 <= hi; ++j2)
            if (mod(x[i] + x[j1] + x[j2], m) == 0) {
              out[i] = 1;
              break;
            }
      }
      break;
    default:
      throw PreconditionError("match_oracle: unknown variant");
  }
  return out;
}

Matrix sequence_input_matrix(const SequenceInstance& inst) {
  inst.validate();
  Matrix x(inst.n, 2);
  for (int i = 0; i < inst.n; ++i) {
    x(i, 0) = i + 1;
    x(i, 1) = inst.x[i];
  }
  return x;
}

std::vector<int> cycle_oracle(const GraphInstance& inst, CycleKind kind) {
  inst.validate();
  const int n = inst.n;
  std::vector<int> out(n, 0);
  if (kind == CycleKind::kDirectedCycle3) {
    for (int i = 0; i < n; ++i)
      for (int j1 = 0; j1 < n && !out[i]; ++j1)
        if (inst.at(i, j1))
          for (int j2 = 0; j2 < n; ++j2)
            if (inst.at(j1, j2) && inst.at(j2, i)) {
              out[i] = 1;
              break;
            }
    return out;
  }
  if (!inst.symmetric) throw PreconditionError("cycle5 oracle requires a symmetric adjacency");
  // Closed walks of length 5 through i, enumerated as reachable sets; a set
  // step is the same existential quantifier as the nested index loops.
  for (int i = 0; i < n; ++i) {
    std::vector<std::uint8_t> reach(n, 0), next(n);
    reach[i] = 1;
    for (int step = 0; step < 5; ++step) {
      std::fill(next.begin(), next.end(), 0);
      for (int u = 0; u < n; ++u)
        if (reach[u])
          for (int v = 0; v < n; ++v)
            if (inst.at(u, v)) next[v] = 1;
      reach.swap(next);
    }
    out[i] = reach[i];
  }
  return out;
}

Matrix graph_input_matrix(const GraphInstance& inst) {
  inst.validate();
  Matrix x(inst.n, inst.n);
  for (int i = 0; i < inst.n; ++i)
    for (int j = 0; j < inst.n; ++j) x(i, j) = inst.at(i, j);
  return x;
}

SequenceInstance gen_uniform_sequence(int n, int m, std::uint64_t seed) {
  if (n < 1 || m < 2) throw PreconditionError("gen_uniform_sequence: need N >= 1, M >= 2");
  Rng rng(seed);
  SequenceInstance inst{n, m, std::vector<int>(n)};
  for (int& v : inst.x) v = static_cast<int>(rng.between(1, m));
  return inst;
}

PlantedMatch3 gen_planted_match3(int n, int m, std::uint64_t seed) {
  if (n < 3) throw PreconditionError("gen_planted_match3: need N >= 3");
  if (m < n + 1) throw PreconditionError("gen_planted_match3: need M >= N + 1");
  Rng rng(seed);
  PlantedMatch3 out;
  out.planted = rng.coin();
  out.instance = SequenceInstance{n, m, std::vector<int>(n)};
  for (int& v : out.instance.x) v = static_cast<int>(rng.between(1, m));
  if (out.planted) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i + 1;
    for (int k = 0; k < 3; ++k) {
      const int pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - k)));
      std::swap(idx[k], idx[pick]);
    }
    out.j1 = idx[0];
    out.j2 = idx[1];
    out.j3 = idx[2];
    auto& x = out.instance.x;
    x[out.j3 - 1] = residue_rep(-static_cast<long long>(x[out.j1 - 1]) - x[out.j2 - 1], m);
  }
  return out;
}

GraphInstance gen_random_graph(int n, double edge_prob, bool symmetric, std::uint64_t seed) {
  if (n < 1) throw PreconditionError("gen_random_graph: N must be positive");
  Rng rng(seed);
  GraphInstance g{n, symmetric, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n, 0)};
  for (int i = 0; i < n; ++i) {
    for (int j = symmetric ? i + 1 : 0; j < n; ++j) {
      if (i == j) continue;
      const std::uint8_t bit = rng.uniform() < edge_prob ? 1 : 0;
      g.adj[static_cast<std::size_t>(i) * n + j] = bit;
      if (symmetric) g.adj[static_cast<std::size_t>(j) * n + i] = bit;
    }
  }
  return g;
}

DisjInstance gen_disj(int n, std::uint64_t seed) {
  Rng rng(seed);
  DisjInstance d{std::vector<std::uint8_t>(n), std::vector<std::uint8_t>(n)};
  // Sparse-ish draws keep both outcomes common for larger n.
  const double p = n <= 4 ? 0.5 : std::min(0.5, 1.0 / std::sqrt(static_cast<double>(n)));
  for (int i = 0; i < n; ++i) {
    d.a[i] = rng.uniform() < p ? 1 : 0;
    d.b[i] = rng.uniform() < p ? 1 : 0;
  }
  return d;
}

DisjInstance disj_from_index(int n, std::uint64_t code) {
  if (n > 31) throw PreconditionError("disj_from_index: n too large to enumerate");
  DisjInstance d{std::vector<std::uint8_t>(n), std::vector<std::uint8_t>(n)};
  for (int i = 0; i < n; ++i) {
    d.a[i] = (code >> i) & 1U;
    d.b[i] = (code >> (n + i)) & 1U;
  }
  return d;
}

QsaInstance gen_qsa(int n, int q, int d_prime, std::uint64_t seed) {
  if (q < 1 || q > n || d_prime < 1) throw PreconditionError("gen_qsa: need 1 <= q <= N and d' >= 1");
  Rng rng(seed);
  QsaInstance inst;
  inst.n = n;
  inst.q = q;
  inst.d_prime = d_prime;
  inst.z.assign(n, std::vector<double>(d_prime));
  inst.y.assign(n, {});
  inst.active.assign(n, true);
  for (int i = 0; i < n; ++i) {
    // Uniform direction, radius uniform in [0, 1].
    double sq = 0.0;
    for (double& v : inst.z[i]) {
      v = rng.gaussian();
      sq += v * v;
    }
    const double r = rng.uniform() / std::max(std::sqrt(sq), 1e-300);
    for (double& v : inst.z[i]) v *= r;
    std::vector<int> idx(n);
    for (int j = 0; j < n; ++j) idx[j] = j + 1;
    for (int k = 0; k < q; ++k) {
      const int pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - k)));
      std::swap(idx[k], idx[pick]);
    }
    inst.y[i].assign(idx.begin(), idx.begin() + q);
  }
  return inst;
}

namespace {

QsaInstance causal_skeleton(int n) {
  QsaInstance inst;
  inst.n = 2 * n + 1;
  inst.q = 1;
  inst.d_prime = 1;
  inst.z.assign(inst.n, std::vector<double>(1, 0.0));
  inst.y.assign(inst.n, std::vector<int>(1, 0));
  inst.active.assign(inst.n, true);
  for (int i = 0; i <= n; ++i) {
    inst.active[i] = false;
    inst.y[i][0] = i + 1;
  }
  return inst;
}

}  // namespace

QsaInstance gen_causal_qsa(int n_total, std::uint64_t seed) {
  if (n_total < 3 || n_total % 2 == 0) throw PreconditionError("gen_causal_qsa: N must be odd and >= 3");
  const int n = (n_total - 1) / 2;
  Rng rng(seed);
  QsaInstance inst = causal_skeleton(n);
  for (int i = 0; i <= n; ++i) inst.z[i][0] = rng.coin() ? 1.0 : -1.0;
  for (int i = n + 1; i < inst.n; ++i) inst.y[i][0] = static_cast<int>(rng.between(1, n + 1));
  return inst;
}

QsaInstance causal_qsa_from_disj(const DisjInstance& d) {
  d.validate();
  const int n = d.n();
  if (n < 1) throw PreconditionError("causal_qsa_from_disj: n must be positive");
  QsaInstance inst = causal_skeleton(n);
  for (int i = 0; i < n; ++i) inst.z[i][0] = d.a[i] ? -1.0 : 1.0;
  inst.z[n][0] = 1.0;
  for (int i = 0; i < n; ++i) inst.y[n + 1 + i][0] = d.b[i] ? i + 1 : n + 1;
  return inst;
}

QsaInstance embed_disj_qsa(const DisjInstance& d, int d_prime) {
  d.validate();
  const int q = d.n();
  if (q < 1 || d_prime < 1) throw PreconditionError("embed_disj_qsa: need q >= 1 and d' >= 1");
  QsaInstance inst;
  inst.n = 2 * q + 1;
  inst.q = q;
  inst.d_prime = d_prime;
  inst.z.assign(inst.n, std::vector<double>(d_prime, 0.0));
  inst.y.assign(inst.n, {});
  inst.active.assign(inst.n, true);
  for (int i = 1; i <= q; ++i) {
    inst.z[2 * i - 2][0] = d.b[i - 1] ? 1.0 : -1.0;
    inst.z[2 * i - 1][0] = -1.0;
  }
  std::vector<int> first_q(q);
  for (int i = 0; i < q; ++i) first_q[i] = i + 1;
  for (int j = 0; j < 2 * q; ++j) inst.y[j] = first_q;
  for (int i = 1; i <= q; ++i) inst.y[2 * q].push_back(2 * i - d.a[i - 1]);
  return inst;
}

SequenceInstance embed_disj_match3(const DisjInstance& d, int m) {
  d.validate();
  const int n = d.n();
  if (n < 1) throw PreconditionError("embed_disj_match3: n must be positive");
  const int big_n = 2 * n + 1;
  if (m == 0) m = big_n + 3;
  if (m < big_n + 3) throw PreconditionError("embed_disj_match3: need M >= N + 3");
  SequenceInstance inst{big_n, m, std::vector<int>(big_n, 1)};
  for (int i = 1; i <= n; ++i) {
    if (d.a[i - 1]) inst.x[i] = i + 1;
    if (d.b[i - 1]) inst.x[i + n] = m - i - 2;
  }
  return inst;
}

bool in_restricted_match3_domain(const SequenceInstance& inst, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (inst.n < 3 || inst.n % 2 == 0) return fail("N must be odd and at least 3");
  if (inst.m < inst.n + 3) return fail("M must be at least N + 3");
  if (static_cast<int>(inst.x.size()) != inst.n) return fail("value count differs from N");
  const int n = (inst.n - 1) / 2;
  if (inst.x[0] != 1) return fail("x_1 must be 1");
  for (int i = 1; i <= n; ++i) {
    if (inst.x[i] != 1 && inst.x[i] != i + 1) {
      return fail("x_" + std::to_string(i + 1) + " must be 1 or " + std::to_string(i + 1));
    }
    if (inst.x[i + n] != 1 && inst.x[i + n] != inst.m - i - 2) {
      return fail("x_" + std::to_string(i + n + 1) + " must be 1 or " + std::to_string(inst.m - i - 2));
    }
  }
  return true;
}

GraphInstance embed_disj_graph(const DisjInstance& d, CycleKind kind) {
  d.validate();
  const int n = d.n();
  const int blocks = kind == CycleKind::kCycle5 ? 5 : 4;
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (side < 1 || side * side != n) {
    throw PreconditionError("embed_disj_graph: n must be a positive perfect square (n = (N/" +
                            std::to_string(blocks) + ")^2)");
  }
  const int big_n = blocks * side;
  GraphInstance g{big_n, kind == CycleKind::kCycle5,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(big_n) * big_n, 0)};
  auto set = [&](int i, int j, std::uint8_t v, bool both) {  // 1-based
    g.adj[static_cast<std::size_t>(i - 1) * big_n + (j - 1)] = v;
    if (both) g.adj[static_cast<std::size_t>(j - 1) * big_n + (i - 1)] = v;
  };
  auto bit = [&](const std::vector<std::uint8_t>& v, int r, int c) {  // 1-based, row-major
    return v[static_cast<std::size_t>(r - 1) * side + (c - 1)];
  };
  const int s = side;
  if (kind == CycleKind::kCycle5) {
    for (int i = 1; i <= s; ++i)
      for (int j = s + 1; j <= 2 * s; ++j) set(i, j, bit(d.a, i, j - s), true);
    for (int i = s + 1; i <= 3 * s; ++i) set(i, i + s, 1, true);
    for (int i = 3 * s + 1; i <= 4 * s; ++i)
      for (int j = 4 * s + 1; j <= 5 * s; ++j) set(i, j, bit(d.b, j - 4 * s, i - 3 * s), true);
    for (int j = 1; j <= s; ++j) set(j + 4 * s, j, 1, true);
  } else {
    for (int i = 1; i <= s; ++i)
      for (int j = 2 * s + 1; j <= 3 * s; ++j) set(i, j, bit(d.a, i, j - 2 * s), false);
    for (int i = 2 * s + 1; i <= 3 * s; ++i)
      for (int j = 3 * s + 1; j <= 4 * s; ++j) set(i, j, bit(d.b, j - 3 * s, i - 2 * s), false);
    for (int j = 1; j <= s; ++j) set(j + 3 * s, j, 1, false);
  }
  return g;
}

std::string variant_name(MatchVariant v) {
  switch (v) {
    case MatchVariant::kMatch2: return "match2";
    case MatchVariant::kMatch3: return "match3";
    case MatchVariant::kMatch3Bigram: return "match3bigram";
    case MatchVariant::kMatch3Local: return "match3local";
  }
  return "unknown";
}

std::string cycle_name(CycleKind k) { return k == CycleKind::kCycle5 ? "cycle5" : "dcycle3"; }

CycleKind parse_cycle_kind(const std::string& s) {
  if (s == "cycle5") return CycleKind::kCycle5;
  if (s == "dcycle3") return CycleKind::kDirectedCycle3;
  throw PreconditionError("unknown cycle kind '" + s + "' (expected dcycle3 or cycle5)");
}

Json instance_to_json(const QsaInstance& inst) {
  std::vector<int> active(inst.active.begin(), inst.active.end());
  return Json{{"task", "qsa"}, {"N", inst.n}, {"q", inst.q}, {"d_prime", inst.d_prime},
              {"z", inst.z},   {"y", inst.y}, {"active", active}};
}

Json instance_to_json(const SequenceInstance& inst) {
  return Json{{"task", "sequence"}, {"N", inst.n}, {"M", inst.m}, {"x", inst.x}};
}

Json instance_to_json(const GraphInstance& inst) {
  std::vector<std::vector<int>> rows(inst.n, std::vector<int>(inst.n));
  for (int i = 0; i < inst.n; ++i)
    for (int j = 0; j < inst.n; ++j) rows[i][j] = inst.at(i, j);
  return Json{{"task", "graph"}, {"N", inst.n}, {"symmetric", inst.symmetric}, {"adjacency", rows}};
}

Json instance_to_json(const DisjInstance& inst) {
  return Json{{"task", "disj"},
              {"n", inst.n()},
              {"a", std::vector<int>(inst.a.begin(), inst.a.end())},
              {"b", std::vector<int>(inst.b.begin(), inst.b.end())}};
}

QsaInstance qsa_from_json(const Json& j) {
  QsaInstance inst;
  inst.n = j.at("N").get<int>();
  inst.q = j.at("q").get<int>();
  inst.d_prime = j.at("d_prime").get<int>();
  inst.z = j.at("z").get<std::vector<std::vector<double>>>();
  inst.y = j.at("y").get<std::vector<std::vector<int>>>();
  for (int v : j.at("active").get<std::vector<int>>()) inst.active.push_back(v != 0);
  inst.validate();
  return inst;
}

SequenceInstance sequence_from_json(const Json& j) {
  SequenceInstance inst{j.at("N").get<int>(), j.at("M").get<int>(), j.at("x").get<std::vector<int>>()};
  inst.validate();
  return inst;
}

GraphInstance graph_from_json(const Json& j) {
  GraphInstance g;
  g.n = j.at("N").get<int>();
  g.symmetric = j.at("symmetric").get<bool>();
  for (const auto& row : j.at("adjacency").get<std::vector<std::vector<int>>>())
    for (int v : row) g.adj.push_back(static_cast<std::uint8_t>(v));
  g.validate();
  return g;
}

DisjInstance disj_from_json(const Json& j) {
  DisjInstance d;
  for (int v : j.at("a").get<std::vector<int>>()) d.a.push_back(static_cast<std::uint8_t>(v));
  for (int v : j.at("b").get<std::vector<int>>()) d.b.push_back(static_cast<std::uint8_t>(v));
  d.validate();
  return d;
}

}  // namespace attnrep
