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

#include "property_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "attnrep/congest.hpp"
#include "attnrep/constructions.hpp"
#include "attnrep/rng.hpp"

namespace attnrep::props {
namespace {

Matrix gaussian_matrix(Rng& rng, std::size_t r, std::size_t c, double sigma) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = sigma * rng.gaussian();
  return m;
}

Matrix permute_rows(const Matrix& x, const std::vector<int>& perm) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) = x(perm[i], c);
  return out;
}

std::vector<int> random_permutation(Rng& rng, int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(i + 1)]);
  return p;
}

void record(SuiteResult& r, bool ok, const std::string& what) {
  ++r.cases;
  if (!ok) {
    if (r.violations == 0) r.first_violation = what;
    ++r.violations;
  }
}

}  // namespace

SuiteResult permutation_equivariance(int cases, std::uint64_t seed) {
  SuiteResult r{"permutation equivariance"};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const int kind = c % 3;
    const int n = static_cast<int>(rng.between(2, kind == 2 ? 6 : 10));
    const std::size_t d = rng.between(1, 5), m = rng.between(1, 4), dout = rng.between(1, 3);
    const Matrix x = gaussian_matrix(rng, n, d, 1.0);
    const std::vector<int> perm = random_permutation(rng, n);
    AttentionHead head;
    if (kind == 0) {
      head = make_attention_unit(gaussian_matrix(rng, d, m, 1.0), gaussian_matrix(rng, d, m, 1.0),
                                 gaussian_matrix(rng, d, dout, 1.0), std::nullopt);
    } else {
      const int s = kind + 1;
      std::vector<Matrix> keys, values;
      for (int k = 1; k < s; ++k) {
        keys.push_back(gaussian_matrix(rng, d, m, 0.8));
        values.push_back(gaussian_matrix(rng, d, dout, 1.0));
      }
      head = make_higher_order_unit(gaussian_matrix(rng, d, m, 0.8), keys, values, std::nullopt);
    }
    const Matrix base = apply_head(head, x, nullptr);
    const Matrix moved = apply_head(head, permute_rows(x, perm), nullptr);
    const double diff = max_abs_diff(moved, permute_rows(base, perm));
    record(r, diff <= 1e-10, "case " + std::to_string(c) + ": diff " + std::to_string(diff));
  }
  return r;
}

SuiteResult convex_combination(int cases, std::uint64_t seed) {
  SuiteResult r{"convex combination"};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const int n = static_cast<int>(rng.between(1, 12));
    const std::size_t d = rng.between(1, 5), m = rng.between(1, 4), dout = rng.between(1, 3);
    const double sigma = c % 2 == 0 ? 1.0 : 6.0;  // large scores stress the max shift
    const AttentionUnit unit = make_attention_unit(gaussian_matrix(rng, d, m, sigma), gaussian_matrix(rng, d, m, sigma),
                                                   gaussian_matrix(rng, d, dout, 1.0), std::nullopt);
    const Matrix x = gaussian_matrix(rng, n, d, 1.0);
    const Matrix w = attention_weights(unit, x);
    const Matrix out = attend(unit, x);
    const Matrix xv = matmul(x, unit.value);
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      double total = 0.0;
      for (int j = 0; j < n; ++j) {
        ok = ok && w(i, j) >= 0.0;
        total += w(i, j);
      }
      ok = ok && std::abs(total - 1.0) <= 1e-12;
      for (std::size_t col = 0; col < dout; ++col) {
        double lo = xv(0, col), hi = xv(0, col);
        for (int j = 1; j < n; ++j) {
          lo = std::min(lo, xv(j, col));
          hi = std::max(hi, xv(j, col));
        }
        const double slack = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
        ok = ok && out(i, col) >= lo - slack && out(i, col) <= hi + slack;
      }
    }
    record(r, ok, "case " + std::to_string(c));
  }
  return r;
}

SuiteResult second_order_reduction(int cases, std::uint64_t seed) {
  SuiteResult r{"s=2 reduction"};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const int n = static_cast<int>(rng.between(1, 12));
    const std::size_t d = rng.between(1, 5), m = rng.between(1, 4), dout = rng.between(1, 3);
    const Matrix q = gaussian_matrix(rng, d, m, 1.5), k = gaussian_matrix(rng, d, m, 1.5);
    const Matrix v = gaussian_matrix(rng, d, dout, 1.0);
    const Matrix x = gaussian_matrix(rng, n, d, 1.0);
    const Matrix standard = attend(make_attention_unit(q, k, v, std::nullopt), x);
    const Matrix second = attend_higher_order(make_higher_order_unit(q, {k}, {v}, std::nullopt), x);
    const double diff = max_abs_diff(standard, second);
    record(r, diff <= 1e-12, "case " + std::to_string(c) + ": diff " + std::to_string(diff));
  }
  return r;
}

SuiteResult quantization_bounds(int cases, std::uint64_t seed) {
  SuiteResult r{"quantization bounds"};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const int total = static_cast<int>(rng.between(2, FixedFormat::kMaxTotalBits));
    const int frac = static_cast<int>(rng.between(0, total - 1));
    const FixedFormat fmt(total, frac);
    const double top = fmt.max_value();
    const double x = (2.0 * rng.uniform() - 1.0) * top;
    const double y = (2.0 * rng.uniform() - 1.0) * top;
    const Quantized qx = quantize(x, fmt), qy = quantize(y, fmt);
    bool ok = !qx.saturated && std::abs(qx.value - x) <= fmt.step() / 2.0 && fmt.on_grid(qx.value);
    ok = ok && quantize(qx.value, fmt).value == qx.value;                     // idempotent
    ok = ok && (x <= y ? qx.value <= qy.value : qx.value >= qy.value);        // monotone
    const double beyond = top + fmt.step() * (1.0 + rng.uniform());
    const Quantized sat = quantize(rng.coin() ? beyond : -beyond, fmt);
    ok = ok && sat.saturated && std::abs(sat.value) == top;
    record(r, ok, "case " + std::to_string(c) + ": p=" + std::to_string(total) + " f=" + std::to_string(frac));
  }
  return r;
}

SuiteResult schedule_partition(int cases, std::uint64_t seed) {
  SuiteResult r{"pair schedule partition"};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const int n = static_cast<int>(rng.between(2, 40));
    const int m = static_cast<int>(rng.between(4, 20));
    const PairSchedule s = build_pair_schedule(n, m);
    std::set<std::pair<int, int>> seen;
    bool ok = s.ell == m / 2 - 1;
    for (const auto& layer : s.layers) {
      std::set<int> endpoints;
      ok = ok && !layer.empty() && static_cast<int>(layer.size()) <= s.ell;
      for (const auto& [a, b] : layer) {
        ok = ok && 1 <= a && a < b && b <= n;
        ok = ok && endpoints.insert(a).second && endpoints.insert(b).second;
        ok = ok && seen.insert({a, b}).second;
      }
    }
    ok = ok && static_cast<int>(seen.size()) == n * (n - 1) / 2;
    // Every layer is full except possibly where endpoint clashes forced a new one;
    // the layer count can never beat the pigeonhole bound.
    ok = ok && s.depth() >= (n * (n - 1) / 2 + s.ell - 1) / s.ell;
    record(r, ok, "case " + std::to_string(c) + ": N=" + std::to_string(n) + " m=" + std::to_string(m));
  }
  return r;
}

SuiteResult alice_bob_partition_suite(int cases, std::uint64_t seed) {
  SuiteResult r{"Alice/Bob partition"};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const int n = static_cast<int>(c < 8 ? c + 1 : rng.between(1, 64));
    const CongestGraph g = build_congest_graph(n);
    const Partition p = alice_bob_partition(g);
    bool ok = partition_level_ordered(g, p);
    const double half = n / 2.0;
    for (int i = 1; i <= n; ++i) {
      ok = ok && p.on_alice(g.root(i)) == (i <= half);
      for (int j = 1; j <= n; ++j) ok = ok && p.on_alice(g.leaf(i, j)) == (std::min(i, j) <= half);
    }
    int crossing = 0;
    for (const auto& [a, b] : g.edges) crossing += p.on_alice(a) != p.on_alice(b) ? 1 : 0;
    ok = ok && crossing == cut_size(g, p);
    ok = ok && crossing <= n * (static_cast<int>(std::ceil(std::log2(2.0 * n))) + 1);
    record(r, ok, "case " + std::to_string(c) + ": N=" + std::to_string(n));
  }
  return r;
}

std::vector<SuiteResult> all_suites(int cases_per_suite, std::uint64_t seed) {
  return {permutation_equivariance(cases_per_suite, mix_seed(seed, 1)),
          convex_combination(cases_per_suite, mix_seed(seed, 2)),
          second_order_reduction(cases_per_suite, mix_seed(seed, 3)),
          quantization_bounds(cases_per_suite, mix_seed(seed, 4)),
          schedule_partition(cases_per_suite, mix_seed(seed, 5)),
          alice_bob_partition_suite(cases_per_suite, mix_seed(seed, 6))};
}

}  // namespace attnrep::props
