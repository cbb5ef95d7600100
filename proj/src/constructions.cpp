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

#include "attnrep/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <set>

namespace attnrep {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int ceil_log2(double x) { return static_cast<int>(std::ceil(std::log2(std::max(x, 1.0)))); }

int mod(long long v, int m) {
  const long long r = v % m;
  return static_cast<int>(r < 0 ? r + m : r);
}

int round_int(double v) { return static_cast<int>(std::lround(v)); }

struct Entry {
  std::size_t r, c;
  double v;
};

Matrix sparse(std::size_t rows, std::size_t cols, std::initializer_list<Entry> entries) {
  Matrix m(rows, cols);
  for (const Entry& e : entries) m(e.r, e.c) = e.v;
  return m;
}

// Block selector: maps feature rows [from, from + width) to columns
// [to, to + width), scaled.
void put_block(Matrix& m, std::size_t from, std::size_t to, std::size_t width, double scale) {
  for (std::size_t k = 0; k < width; ++k) m(from + k, to + k) = scale;
}

double ramp(double z) { return std::clamp(6.0 * z - 1.0, 0.0, 1.0); }

MlpLayer ramp_layer(Precision fmt) { return make_mlp("ramp", Json::object(), 1, 1, fmt); }

Json provenance(const std::string& construction, Json params, Json constants) {
  return Json{{"construction", construction}, {"params", std::move(params)}, {"constants", std::move(constants)}};
}

// ---------------------------------------------------------------------------
// qSA certificate embedding shared by the qsa-fixed and match3-local maps.

struct CertificateCache {
  KeyBank bank;
  int frac_bits = 0;
  double alpha = 0.0;
  std::vector<std::vector<double>> u_tilde;
  std::mutex mu;
  std::map<std::vector<int>, std::vector<double>> scaled;  // alpha * w~_y

  CertificateCache(KeyBank b, int f, double a) : bank(std::move(b)), frac_bits(f), alpha(a) {
    for (int i = 1; i <= bank.n; ++i) u_tilde.push_back(quantize_certificate(bank.column(i), frac_bits));
  }

  std::vector<double> query(std::vector<int> y) {
    std::sort(y.begin(), y.end());
    std::lock_guard<std::mutex> lock(mu);
    auto it = scaled.find(y);
    if (it != scaled.end()) return it->second;
    const DualCertificate cert = dual_certificate(bank, y);
    std::vector<double> w = quantize_certificate(cert.w, frac_bits);
    for (double& v : w) v *= alpha;
    return scaled.emplace(y, std::move(w)).first->second;
  }
};

// The bank is re-derived from its dimensions and the seed that passed
// validation at build time.
std::shared_ptr<CertificateCache> certificate_cache(const Json& p) {
  KeyBank bank = rademacher_bank(p.at("N").get<int>(), p.at("q").get<int>(), p.at("m_prime").get<int>(),
                                 p.at("bank_seed").get<std::uint64_t>());
  return std::make_shared<CertificateCache>(std::move(bank), p.at("frac_bits").get<int>(),
                                            p.at("alpha").get<double>());
}

int qsa_alpha(int n, double eps) { return static_cast<int>(std::ceil(2.0 * std::log(4.0 * n / eps))); }

int qsa_frac_bits(int alpha, int m_prime, int q, double eps) {
  const double bound = 4.0 * alpha * std::sqrt(static_cast<double>(m_prime)) *
                       (1.0 + 2.0 * std::sqrt(static_cast<double>(q))) / eps;
  return ceil_log2(bound) + 1;
}

ElementFn qsa_fixed_phi(const Json& p) {
  auto cache = certificate_cache(p);
  const int d_prime = p.at("d_prime").get<int>();
  const int q = p.at("q").get<int>();
  const int n = p.at("N").get<int>();
  return [cache, d_prime, q, n](std::span<const double> in) {
    const int mp = cache->bank.m_prime;
    std::vector<double> out(d_prime + 2 * mp, 0.0);
    std::copy(in.begin(), in.begin() + d_prime, out.begin());
    const int i = round_int(in[d_prime + q]);
    const bool active = in[d_prime + q + 1] != 0.0;
    if (i < 1 || i > n) throw PreconditionError("qsa-fixed: element index outside [N]");
    if (active) {
      std::vector<int> y(q);
      for (int k = 0; k < q; ++k) y[k] = round_int(in[d_prime + k]);
      const std::vector<double> w = cache->query(y);
      std::copy(w.begin(), w.end(), out.begin() + d_prime);
    }
    const auto& u = cache->u_tilde[i - 1];
    std::copy(u.begin(), u.end(), out.begin() + d_prime + mp);
    return out;
  };
}

// ---------------------------------------------------------------------------
// qSA on the moment curve (unquantized).

struct FaceCache {
  CyclicPolytope poly;
  double alpha;
  std::mutex mu;
  std::map<std::vector<int>, std::vector<double>> scaled;  // alpha * (w', b)

  std::vector<double> query(std::vector<int> y) {
    std::sort(y.begin(), y.end());
    std::lock_guard<std::mutex> lock(mu);
    auto it = scaled.find(y);
    if (it != scaled.end()) return it->second;
    const FaceHyperplane h = face_hyperplane(poly, y);
    std::vector<double> v = h.w;
    v.push_back(h.b);
    for (double& e : v) e *= alpha;
    return scaled.emplace(y, std::move(v)).first->second;
  }
};

ElementFn qsa_inf_phi(const Json& p) {
  const int n = p.at("N").get<int>(), q = p.at("q").get<int>(), d_prime = p.at("d_prime").get<int>();
  auto cache = std::make_shared<FaceCache>();
  cache->poly = cyclic_keys(n, q);
  cache->alpha = p.at("alpha").get<double>();
  return [cache, n, q, d_prime](std::span<const double> in) {
    const int mp = 2 * q;
    std::vector<double> out(d_prime + 2 * (mp + 1), 0.0);
    std::copy(in.begin(), in.begin() + d_prime, out.begin());
    const int i = round_int(in[d_prime + q]);
    if (i < 1 || i > n) throw PreconditionError("qsa-inf: element index outside [N]");
    if (in[d_prime + q + 1] != 0.0) {
      std::vector<int> y(q);
      for (int k = 0; k < q; ++k) y[k] = round_int(in[d_prime + k]);
      const std::vector<double> w = cache->query(y);
      std::copy(w.begin(), w.end(), out.begin() + d_prime);
    }
    const auto key = cache->poly.keys.row(i - 1);
    std::copy(key.begin(), key.end(), out.begin() + d_prime + mp + 1);
    out[d_prime + 2 * mp + 1] = 1.0;
    return out;
  };
}

// ---------------------------------------------------------------------------
// Match-family element maps. Inputs are (i, x_i); position 0 marks <END>.

// (cos a, sin a, one, is_end, real) with a = 2 pi x / M.
ElementFn match_phi(const Json& p) {
  const int m = p.at("M").get<int>();
  return [m](std::span<const double> in) -> std::vector<double> {
    if (in[0] == 0.0) return {0.0, 0.0, 0.0, 1.0, 0.0};
    const double a = kTwoPi * round_int(in[1]) / m;
    return {std::cos(a), std::sin(a), 1.0, 0.0, 1.0};
  };
}

ElementFn ramp_map(const Json&) {
  return [](std::span<const double> in) { return std::vector<double>{ramp(in[0])}; };
}

// Layer 1 of the bigram model: (cos t, sin t, is_end, x, (-1)^i x, i) with
// t = 2 pi i / P.
ElementFn bigram_phi1(const Json& p) {
  const int period = p.at("P").get<int>();
  return [period](std::span<const double> in) -> std::vector<double> {
    const int i = round_int(in[0]);
    if (i == 0) return {0.0, 0.0, 1.0, 0.0, 0.0, 0.0};
    const double t = kTwoPi * i / period;
    const double x = round_int(in[1]);
    return {std::cos(t), std::sin(t), 0.0, x, (i % 2 == 0 ? x : -x), static_cast<double>(i)};
  };
}

// Decodes (x_j, x_{j+1}, j) from the two-cell average and emits the
// Match2 features of x_j against s_j = x_j + x_{j+1}.
ElementFn bigram_phi2(const Json& p) {
  const int m = p.at("M").get<int>();
  return [m](std::span<const double> in) -> std::vector<double> {
    if (in[3] > 0.5) return {0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0};
    const int twice = round_int(2.0 * in[2]);
    const int j = twice / 2;
    const bool has_next = twice % 2 == 1;
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    const int xj = has_next ? round_int(in[0] + sign * in[1]) : round_int(in[0]);
    const int xn = has_next ? round_int(in[0] - sign * in[1]) : 0;
    const double a = kTwoPi * xj / m;
    const double b = kTwoPi * mod(static_cast<long long>(xj) + xn, m) / m;
    const double h = has_next ? 1.0 : 0.0;
    return {std::cos(a), std::sin(a), 1.0, h * std::cos(b), h * std::sin(b), 0.0, h};
  };
}

// ---------------------------------------------------------------------------
// Local windows on top of the qSA embedding.

struct LocalGeometry {
  int n, m, k, q;
  int window_start(int i) const { return std::clamp(i - k, 1, n - q + 1); }
  std::vector<int> window(int i) const {
    std::vector<int> w(q);
    for (int t = 0; t < q; ++t) w[t] = window_start(i) + t;
    return w;
  }
};

LocalGeometry local_geometry(const Json& p) {
  const int n = p.at("N").get<int>(), k = p.at("K").get<int>();
  return {n, p.at("M").get<int>(), k, std::min(2 * k + 1, n)};
}

// (slots q, i / N, alpha w~_window, alpha w~_{i}, u~_i)
// Every subset the local model ever queries; the bank is validated on all of
// them so that resampling covers the windows actually used.
std::vector<std::vector<int>> local_probes(const LocalGeometry& g) {
  std::vector<std::vector<int>> probes;
  for (int i = 1; i <= g.n; ++i) {
    probes.push_back(g.window(i));
    probes.push_back({i});
  }
  return probes;
}

ElementFn local_phi(const Json& p) {
  const LocalGeometry g = local_geometry(p);
  auto cache = certificate_cache(p);
  return [cache, g](std::span<const double> in) {
    const int mp = cache->bank.m_prime;
    const int i = round_int(in[0]);
    if (i < 1 || i > g.n) throw PreconditionError("match3-local: element index outside [N]");
    std::vector<double> out(g.q + 1 + 3 * mp, 0.0);
    out[(i - 1) % g.q] = static_cast<double>(round_int(in[1])) / g.m;
    out[g.q] = static_cast<double>(i) / g.n;
    const auto w_window = cache->query(g.window(i));
    const auto w_self = cache->query({i});
    std::copy(w_window.begin(), w_window.end(), out.begin() + g.q + 1);
    std::copy(w_self.begin(), w_self.end(), out.begin() + g.q + 1 + mp);
    const auto& u = cache->u_tilde[i - 1];
    std::copy(u.begin(), u.end(), out.begin() + g.q + 1 + 2 * mp);
    return out;
  };
}

ElementFn local_psi(const Json& p) {
  const LocalGeometry g = local_geometry(p);
  return [g](std::span<const double> in) {
    const int i = std::clamp(round_int(g.n * in[g.q]), 1, g.n);
    const int start = g.window_start(i);
    std::vector<int> vals;
    int xi = 0;
    for (int j = start; j < start + g.q; ++j) {
      const int xj = round_int(static_cast<double>(g.q) * g.m * in[(j - 1) % g.q]);
      if (j == i) xi = xj;
      if (std::abs(i - j) <= g.k) vals.push_back(xj);
    }
    for (int a : vals)
      for (int b : vals)
        if (mod(static_cast<long long>(xi) + a + b, g.m) == 0) return std::vector<double>{1.0};
    return std::vector<double>{0.0};
  };
}

// ---------------------------------------------------------------------------
// Multi-layer pair schedule. Layer features:
// (cos t_i, sin t_i, one, flag, slots[2 ell], i, code), code = found (M+1) + x_i.

struct MultilayerParams {
  int n, m, ell, period;
  std::vector<std::vector<std::pair<int, int>>> layers;
};

MultilayerParams multilayer_params(const Json& p) {
  MultilayerParams mp{p.at("N").get<int>(), p.at("M").get<int>(), p.at("ell").get<int>(),
                      p.at("P").get<int>(), {}};
  for (const auto& layer : p.at("schedule")) {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& pr : layer) pairs.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
    mp.layers.push_back(std::move(pairs));
  }
  return mp;
}

std::vector<double> multilayer_features(const MultilayerParams& mp, int layer, int i, int x, bool found) {
  std::vector<double> out(2 * mp.ell + 6, 0.0);
  const double t = kTwoPi * i / mp.period;
  out[0] = std::cos(t);
  out[1] = std::sin(t);
  out[2] = 1.0;
  const auto& pairs = mp.layers[layer];
  for (std::size_t s = 0; s < pairs.size(); ++s) {
    if (pairs[s].first == i) {
      out[3] = 1.0;
      out[4 + 2 * s] = x;
    } else if (pairs[s].second == i) {
      out[3] = 1.0;
      out[4 + 2 * s + 1] = x;
    }
  }
  out[4 + 2 * mp.ell] = i;
  out[5 + 2 * mp.ell] = (found ? mp.m + 1 : 0) + x;
  return out;
}

ElementFn multilayer_step(const Json& p) {
  const MultilayerParams mp = multilayer_params(p);
  const int decoded = p.at("decode_layer").get<int>();  // -1: raw input
  return [mp, decoded](std::span<const double> in) -> std::vector<double> {
    int i, x;
    bool found = false;
    if (decoded < 0) {
      i = round_int(in[0]);
      x = round_int(in[1]);
    } else {
      const auto& pairs = mp.layers[decoded];
      const int width = 2 * static_cast<int>(pairs.size());
      i = round_int(in[2 * mp.ell]);
      const int code = round_int(in[2 * mp.ell + 1]);
      found = code > mp.m;
      x = found ? code - (mp.m + 1) : code;
      auto slot = [&](int s) { return round_int(width * in[s]); };
      auto hit = [&](long long v) { return mod(v, mp.m) == 0; };
      for (std::size_t s = 0; s < pairs.size(); ++s) {
        const int xa = slot(static_cast<int>(2 * s)), xb = slot(static_cast<int>(2 * s + 1));
        if (hit(static_cast<long long>(x) + xa + xb)) found = true;
        for (int r : {xa, xb}) {
          if (hit(static_cast<long long>(x) + 2LL * r) || hit(2LL * x + r) || hit(3LL * x)) found = true;
        }
      }
    }
    if (decoded + 1 == static_cast<int>(mp.layers.size())) return {found ? 1.0 : 0.0};
    return multilayer_features(mp, decoded + 1, i, x, found);
  };
}

// ---------------------------------------------------------------------------
// Restricted two-layer model.

// (cos a, sin a, one, is_end, real, i) with a domain check per element.
ElementFn restricted_phi1(const Json& p) {
  const int n = p.at("N").get<int>(), m = p.at("M").get<int>();
  const int half = (n - 1) / 2;
  return [n, m, half](std::span<const double> in) -> std::vector<double> {
    const int i = round_int(in[0]);
    if (i == 0) return {0.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    const int x = round_int(in[1]);
    bool ok;
    if (i == 1) ok = x == 1;
    else if (i <= half + 1) ok = x == 1 || x == i;
    else if (i <= n) ok = x == 1 || x == m - (i - half - 1) - 2;
    else ok = false;
    if (!ok) {
      throw PreconditionError("match3-restricted: x_" + std::to_string(i) + " = " + std::to_string(x) +
                              " is outside the restricted domain");
    }
    const double a = kTwoPi * x / m;
    return {std::cos(a), std::sin(a), 1.0, 0.0, 1.0, static_cast<double>(i)};
  };
}

// From (match mass, mass-weighted partner position, <END> mass) to
// (g, is_end, one), g = 1 iff element j sits on the first half and has a
// completing partner.
ElementFn restricted_phi2(const Json& p) {
  const int n = p.at("N").get<int>();
  return [n](std::span<const double> in) -> std::vector<double> {
    if (in[2] < 0.375) return {0.0, 1.0, 0.0};
    const bool matched = in[0] >= 1.0 / 3.0;
    const bool first_half = matched && in[1] / in[0] > (n + 1) / 2.0;
    return {first_half ? 1.0 : 0.0, 0.0, 1.0};
  };
}

// ---------------------------------------------------------------------------
// Cycle detection. Adjacency rows; the <END> row is all -1.

ElementFn cycle_phi(const Json&) {
  return [](std::span<const double> in) -> std::vector<double> {
    const bool end = in[0] < 0.0;
    return {1.0, end ? 1.0 : 0.0, end ? 0.0 : 1.0};
  };
}

std::size_t edge_slot(int s, int a, int b) {
  return static_cast<std::size_t>(a * (s - 1) + (b < a ? b : b - 1));
}

KappaFn cycle_kappa(const Json& p) {
  const int s = p.at("s").get<int>();
  const double c = p.at("c").get<double>();
  std::vector<std::size_t> pattern;
  for (int a = 0; a < s; ++a) pattern.push_back(edge_slot(s, a, (a + 1) % s));
  return [pattern, c](std::span<const std::uint8_t> edges, double score) {
    bool all = true;
    for (std::size_t e : pattern) all = all && edges[e] != 0;
    return (all ? c : 0.0) + 0.5 * c * score;
  };
}

}  // namespace

void register_construction_maps() {
  static std::once_flag once;
  std::call_once(once, [] {
    register_mlp("ramp", ramp_map);
    register_mlp("qsa_fixed.phi", qsa_fixed_phi);
    register_mlp("qsa_inf.phi", qsa_inf_phi);
    register_mlp("match.phi", match_phi);
    register_mlp("bigram.phi1", bigram_phi1);
    register_mlp("bigram.phi2", bigram_phi2);
    register_mlp("local.phi", local_phi);
    register_mlp("local.psi", local_psi);
    register_mlp("multilayer.step", multilayer_step);
    register_mlp("restricted.phi1", restricted_phi1);
    register_mlp("restricted.phi2", restricted_phi2);
    register_mlp("cycle.phi", cycle_phi);
    register_kappa("cycle_pattern", cycle_kappa);
  });
}

TransformerModel load_model(const Json& j) {
  register_construction_maps();
  return model_from_json(j);
}

std::vector<int> output_bits(const Matrix& out) {
  std::vector<int> bits(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) bits[r] = out(r, 0) > 0.5 ? 1 : 0;
  return bits;
}

// ---------------------------------------------------------------------------

void QsaBuildSpec::validate() const {
  if (n < 1 || q < 1 || q > n) throw PreconditionError("qsa spec: need 1 <= q <= N");
  if (d_prime < 1) throw PreconditionError("qsa spec: d' must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw PreconditionError("qsa spec: epsilon must lie in (0, 1)");
}

int QsaBuildSpec::alpha() const { return qsa_alpha(n, epsilon); }
int QsaBuildSpec::frac_bits(int m_prime) const {
  if (frac_bits_override) return *frac_bits_override;
  return qsa_frac_bits(alpha(), m_prime, q, epsilon);
}

FixedFormat QsaBuildSpec::format(int m_prime) const {
  const double bound = std::max({static_cast<double>(n + 1), 2.0 * alpha() * std::sqrt(static_cast<double>(q)) + 1.0});
  return FixedFormat::covering(bound, frac_bits(m_prime));
}

std::vector<std::vector<int>> all_subsets_if_small(int n, int q) {
  double count = 1.0;
  for (int k = 0; k < q; ++k) count = count * (n - k) / (k + 1);
  if (count > kExhaustiveSubsets) return {};
  std::vector<std::vector<int>> out;
  std::vector<int> y(q);
  for (int k = 0; k < q; ++k) y[k] = k + 1;
  while (true) {
    out.push_back(y);
    int k = q - 1;
    while (k >= 0 && y[k] == n - q + k + 1) --k;
    if (k < 0) break;
    ++y[k];
    for (int t = k + 1; t < q; ++t) y[t] = y[t - 1] + 1;
  }
  return out;
}

KeyBank certified_key_bank(int n, int q, std::uint64_t seed, double c0,
                           const std::vector<std::vector<int>>& probes) {
  for (int doubling = 0;; ++doubling) {
    try {
      return sample_key_bank(n, q, seed, c0, probes);
    } catch (const CertificateError&) {
      if (doubling == kMaxC0Doublings) throw;
    }
    c0 *= 2.0;
  }
}

KeyBank qsa_key_bank(const QsaBuildSpec& spec) {
  spec.validate();
  return certified_key_bank(spec.n, spec.q, spec.seed, spec.c0, all_subsets_if_small(spec.n, spec.q));
}

TransformerModel build_qsa_fixed(const QsaBuildSpec& spec) {
  register_construction_maps();
  spec.validate();
  const KeyBank bank = qsa_key_bank(spec);
  const FixedFormat fmt = spec.format(bank.m_prime);
  const int mp = bank.m_prime, dp = spec.d_prime;
  const Json params{{"N", spec.n},        {"q", spec.q},           {"d_prime", dp},
                    {"m_prime", mp},      {"bank_seed", bank.seed}, {"alpha", spec.alpha()},
                    {"frac_bits", fmt.frac_bits()}};
  TransformerModel model;
  model.input_dim = static_cast<std::size_t>(dp + spec.q + 2);
  model.mlps.push_back(make_mlp("qsa_fixed.phi", params, model.input_dim, dp + 2 * mp, fmt));
  const std::size_t width = dp + 2 * mp;
  Matrix q(width, mp), k(width, mp), v(width, dp);
  put_block(q, dp, 0, mp, 1.0);
  put_block(k, dp + mp, 0, mp, 1.0);
  put_block(v, 0, 0, dp, 1.0);
  model.layers.push_back({{make_attention_unit(q, k, v, fmt)}});
  model.mlps.push_back(make_mlp("identity", Json::object(), dp, dp, fmt));
  model.provenance = provenance(
      "qsa-fixed", Json{{"N", spec.n}, {"q", spec.q}, {"d_prime", dp}, {"epsilon", spec.epsilon}, {"seed", spec.seed}},
      Json{{"alpha", spec.alpha()}, {"m_prime", mp}, {"C0", bank.c0}, {"bank_seed", bank.seed},
           {"bank_resamples", bank.resamples}, {"total_bits", fmt.total_bits()}, {"frac_bits", fmt.frac_bits()}});
  validate_model(model);
  return model;
}

TransformerModel build_qsa_inf(int n, int q, int d_prime, double epsilon) {
  register_construction_maps();
  if (q < 1 || n < 2 * q) throw PreconditionError("qsa-inf: need N >= 2q and q >= 1");
  if (d_prime < 1) throw PreconditionError("qsa-inf: d' must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw PreconditionError("qsa-inf: epsilon must lie in (0, 1)");
  const int alpha = qsa_alpha(n, epsilon);
  const int mp = 2 * q;
  const std::size_t width = d_prime + 2 * (mp + 1);
  const Json params{{"N", n}, {"q", q}, {"d_prime", d_prime}, {"alpha", alpha}};
  TransformerModel model;
  model.input_dim = static_cast<std::size_t>(d_prime + q + 2);
  model.mlps.push_back(make_mlp("qsa_inf.phi", params, model.input_dim, width, std::nullopt));
  Matrix qm(width, mp + 1), km(width, mp + 1), vm(width, d_prime);
  put_block(qm, d_prime, 0, mp + 1, 1.0);
  put_block(km, d_prime + mp + 1, 0, mp + 1, 1.0);
  put_block(vm, 0, 0, d_prime, 1.0);
  model.layers.push_back({{make_attention_unit(qm, km, vm, std::nullopt)}});
  model.mlps.push_back(make_mlp("identity", Json::object(), d_prime, d_prime, std::nullopt));
  model.provenance = provenance("qsa-inf", Json{{"N", n}, {"q", q}, {"d_prime", d_prime}, {"epsilon", epsilon}},
                                Json{{"alpha", alpha}, {"m_prime", mp}, {"embedding_dim", width}, {"spacing", 1.0 / n}});
  validate_model(model);
  return model;
}

double match_scale(int n, int m) { return static_cast<double>(m) * m * std::log(6.0 * n); }
double third_order_scale(int n, int m) { return static_cast<double>(m) * m * std::log(6.0 * n * n); }
double bigram_scale(int n) { return static_cast<double>(n + 1) * (n + 1) * std::log(6.0 * n); }
double graph_scale(int n) { return 20.0 * std::log(n + 1.0); }

namespace {

void check_sequence_dims(int n, int m, const char* what) {
  if (n < 1) throw PreconditionError(std::string(what) + ": N must be positive");
  if (m < 2) throw PreconditionError(std::string(what) + ": M must be at least 2");
}

}  // namespace

TransformerModel build_match2(int n, int m) {
  register_construction_maps();
  check_sequence_dims(n, m, "match2");
  const double c = match_scale(n, m);
  const FixedFormat fmt = FixedFormat::covering(std::max({c, double(n + 1), double(m)}), ceil_log2(c) + 5);
  TransformerModel model;
  model.input_dim = 2;
  model.append_end = true;
  model.mlps.push_back(make_mlp("match.phi", Json{{"M", m}}, 2, 5, fmt));
  // Features (cos, sin, one, is_end, real).
  Matrix q = sparse(5, 3, {{0, 0, c}, {1, 1, c}, {2, 2, c}});
  Matrix k = sparse(5, 3, {{0, 0, 1.0}, {1, 1, -1.0}, {3, 2, 1.0}});
  Matrix v = sparse(5, 1, {{4, 0, 1.0}});
  model.layers.push_back({{make_attention_unit(q, k, v, fmt)}});
  model.mlps.push_back(ramp_layer(fmt));
  model.provenance = provenance("match2", Json{{"N", n}, {"M", m}},
                                Json{{"c", c}, {"total_bits", fmt.total_bits()}, {"frac_bits", fmt.frac_bits()}});
  validate_model(model);
  return model;
}

TransformerModel build_match3_bigram(int n, int m) {
  register_construction_maps();
  check_sequence_dims(n, m, "match3-bigram");
  if (n < 2) throw PreconditionError("match3-bigram: N must be at least 2");
  const double c1 = bigram_scale(n);
  const double c2 = match_scale(n, m);
  const int period = 2 * n + 4;
  const int frac = std::max(ceil_log2(c1 * m) + 6, ceil_log2(c2) + 6);
  const FixedFormat fmt = FixedFormat::covering(std::max({c1, c2, double(n + 1), double(m)}), frac);
  TransformerModel model;
  model.input_dim = 2;
  model.append_end = true;
  model.mlps.push_back(make_mlp("bigram.phi1", Json{{"P", period}}, 2, 6, fmt));
  // Query rotated by half a position so that cells j and j + 1 tie.
  const double delta = std::numbers::pi / period;
  Matrix q1 = sparse(6, 3, {{0, 0, c1 * std::cos(delta)}, {0, 1, c1 * std::sin(delta)},
                            {1, 0, -c1 * std::sin(delta)}, {1, 1, c1 * std::cos(delta)}, {2, 2, c1}});
  Matrix k1 = sparse(6, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
  Matrix v1 = sparse(6, 4, {{3, 0, 1.0}, {4, 1, 1.0}, {5, 2, 1.0}, {2, 3, 1.0}});
  model.layers.push_back({{make_attention_unit(q1, k1, v1, fmt)}});
  model.mlps.push_back(make_mlp("bigram.phi2", Json{{"M", m}}, 4, 7, fmt));
  // Features (cos a, sin a, one, h cos b, h sin b, is_end, h).
  Matrix q2 = sparse(7, 3, {{0, 0, c2}, {1, 1, c2}, {2, 2, c2}});
  Matrix k2 = sparse(7, 3, {{3, 0, 1.0}, {4, 1, -1.0}, {5, 2, 1.0}});
  Matrix v2 = sparse(7, 1, {{6, 0, 1.0}});
  model.layers.push_back({{make_attention_unit(q2, k2, v2, fmt)}});
  model.mlps.push_back(ramp_layer(fmt));
  model.provenance = provenance("match3-bigram", Json{{"N", n}, {"M", m}},
                                Json{{"c_bigram", c1}, {"c_match", c2}, {"period", period},
                                     {"total_bits", fmt.total_bits()}, {"frac_bits", fmt.frac_bits()}});
  validate_model(model);
  return model;
}

TransformerModel build_match3_local(int n, int m, int k, std::uint64_t seed) {
  register_construction_maps();
  check_sequence_dims(n, m, "match3-local");
  if (k < 0 || k > n) throw PreconditionError("match3-local: K must lie in [0, N]");
  const int q = std::min(2 * k + 1, n);
  const double eps = 1.0 / (4.0 * std::max(q * m, n));
  const int alpha = qsa_alpha(n, eps);
  // Fails at build time when no resampled bank certifies every window.
  const KeyBank bank = certified_key_bank(n, q, seed, kDefaultC0, local_probes(LocalGeometry{n, m, k, q}));
  const int mp = bank.m_prime;
  const int frac = qsa_frac_bits(alpha, mp, q, eps);
  const FixedFormat fmt = FixedFormat::covering(
      std::max({2.0 * alpha * std::sqrt(static_cast<double>(q)) + 1.0, double(n + 1), double(m)}), frac);
  const Json params{{"N", n},         {"M", m},                {"K", k},         {"q", q},
                    {"m_prime", mp},  {"bank_seed", bank.seed}, {"alpha", alpha}, {"frac_bits", frac}};
  TransformerModel model;
  model.input_dim = 2;
  const std::size_t width = q + 1 + 3 * mp;
  model.mlps.push_back(make_mlp("local.phi", params, 2, width, fmt));
  Matrix k_sel(width, mp);
  put_block(k_sel, q + 1 + 2 * mp, 0, mp, 1.0);
  Matrix q_window(width, mp), v_window(width, q + 1);
  put_block(q_window, q + 1, 0, mp, 1.0);
  put_block(v_window, 0, 0, q, 1.0);
  Matrix q_self(width, mp), v_self(width, q + 1);
  put_block(q_self, q + 1 + mp, 0, mp, 1.0);
  v_self(q, q) = 1.0;
  model.layers.push_back({{make_attention_unit(q_window, k_sel, v_window, fmt),
                           make_attention_unit(q_self, k_sel, v_self, fmt)}});
  model.mlps.push_back(make_mlp("local.psi", params, q + 1, 1, fmt));
  model.provenance = provenance("match3-local", Json{{"N", n}, {"M", m}, {"K", k}, {"seed", seed}},
                                Json{{"q", q}, {"epsilon", eps}, {"alpha", alpha}, {"m_prime", mp}, {"C0", bank.c0},
                                     {"bank_seed", bank.seed}, {"bank_resamples", bank.resamples},
                                     {"total_bits", fmt.total_bits()}, {"frac_bits", fmt.frac_bits()}});
  validate_model(model);
  return model;
}

TransformerModel build_match3_third_order(int n, int m) {
  register_construction_maps();
  check_sequence_dims(n, m, "match3-3rd");
  if (static_cast<double>(n + 1) * (n + 1) * (n + 1) > static_cast<double>(kMaxScoreCells)) {
    throw BudgetError("match3-3rd: (N+1)^3 score cells exceed the desk-scale budget");
  }
  const double c = third_order_scale(n, m);
  const FixedFormat fmt = FixedFormat::covering(std::max({c, double(n + 1), double(m)}), ceil_log2(c) + 6);
  TransformerModel model;
  model.input_dim = 2;
  model.append_end = true;
  model.mlps.push_back(make_mlp("match.phi", Json{{"M", m}}, 2, 5, fmt));
  // cos(A+B+C) = cAcBcC - cAsBsC - sAcBsC - sAsBcC, plus a blank column.
  Matrix q = sparse(5, 5, {{0, 0, c}, {0, 1, -c}, {1, 2, -c}, {1, 3, -c}, {2, 4, c}});
  Matrix k1 = sparse(5, 5, {{0, 0, 1.0}, {0, 2, 1.0}, {1, 1, 1.0}, {1, 3, 1.0}, {3, 4, 1.0}});
  Matrix k2 = sparse(5, 5, {{0, 0, 1.0}, {0, 3, 1.0}, {1, 1, 1.0}, {1, 2, 1.0}, {3, 4, 1.0}});
  Matrix v = sparse(5, 1, {{4, 0, 1.0}});
  model.layers.push_back({{make_higher_order_unit(q, {k1, k2}, {v, v}, fmt)}});
  model.mlps.push_back(ramp_layer(fmt));
  model.provenance = provenance("match3-3rd", Json{{"N", n}, {"M", m}},
                                Json{{"c", c}, {"total_bits", fmt.total_bits()}, {"frac_bits", fmt.frac_bits()}});
  validate_model(model);
  return model;
}

PairSchedule build_pair_schedule(int n, int m) {
  if (m < 4) throw PreconditionError("pair schedule: embedding dimension m must be at least 4");
  if (n < 2) throw PreconditionError("pair schedule: N must be at least 2");
  PairSchedule sched;
  sched.n = n;
  sched.ell = m / 2 - 1;
  // Circle method on an even number of seats; seat `n_even` is a bye when N is odd.
  const int seats = n % 2 == 0 ? n : n + 1;
  std::vector<std::pair<int, int>> order;
  for (int round = 0; round < seats - 1; ++round) {
    for (int k = 0; k < seats / 2; ++k) {
      int a = k == 0 ? seats - 1 : (round + k) % (seats - 1);
      int b = (round - k + (seats - 1)) % (seats - 1);
      ++a;
      ++b;
      if (a > n || b > n) continue;
      order.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  for (const auto& pr : order) {
    bool placed = false;
    for (auto& layer : sched.layers) {
      if (static_cast<int>(layer.size()) >= sched.ell) continue;
      bool clash = false;
      for (const auto& other : layer) {
        if (other.first == pr.first || other.first == pr.second || other.second == pr.first ||
            other.second == pr.second) {
          clash = true;
          break;
        }
      }
      if (!clash) {
        layer.push_back(pr);
        placed = true;
        break;
      }
    }
    if (!placed) sched.layers.push_back({pr});
  }
  return sched;
}

TransformerModel build_match3_multilayer(int n, int m_mod, int m_embed) {
  register_construction_maps();
  check_sequence_dims(n, m_mod, "match3-multilayer");
  const PairSchedule sched = build_pair_schedule(n, m_embed);
  const int ell = sched.ell;
  const int period = n + 1;
  const double carried = std::max(static_cast<double>(n), 2.0 * (m_mod + 1));
  const double c_sched = std::log(4.0 * m_mod * n) + 1.0;
  const double c_id = (std::log(8.0 * n * carried) + 1.0) / (1.0 - std::cos(kTwoPi / period));
  const FixedFormat fmt = FixedFormat::covering(std::max({c_id, carried, double(m_mod)}), ceil_log2(c_id) + 10);
  Json schedule = Json::array();
  for (const auto& layer : sched.layers) {
    Json lj = Json::array();
    for (const auto& pr : layer) lj.push_back({pr.first, pr.second});
    schedule.push_back(lj);
  }
  Json params{{"N", n}, {"M", m_mod}, {"ell", ell}, {"P", period}, {"schedule", schedule}};
  const std::size_t feat = 2 * ell + 6, out = 2 * ell + 2;
  // Features (cos, sin, one, flag, slots[2 ell], i, code).
  Matrix q_sched(feat, 2), k_sched(feat, 2), v_sched(feat, out);
  q_sched(2, 0) = c_sched;
  k_sched(3, 0) = 1.0;
  put_block(v_sched, 4, 0, 2 * ell, 1.0);
  Matrix q_id(feat, 2), k_id(feat, 2), v_id(feat, out);
  q_id(0, 0) = c_id;
  q_id(1, 1) = c_id;
  k_id(0, 0) = 1.0;
  k_id(1, 1) = 1.0;
  v_id(4 + 2 * ell, 2 * ell) = 1.0;
  v_id(5 + 2 * ell, 2 * ell + 1) = 1.0;
  const AttentionUnit sched_head = make_attention_unit(q_sched, k_sched, v_sched, fmt);
  const AttentionUnit id_head = make_attention_unit(q_id, k_id, v_id, fmt);

  TransformerModel model;
  model.input_dim = 2;
  for (int layer = 0; layer < sched.depth(); ++layer) {
    Json p = params;
    p["decode_layer"] = layer - 1;
    model.mlps.push_back(make_mlp("multilayer.step", p, layer == 0 ? 2 : out, feat, fmt));
    model.layers.push_back({{sched_head, id_head}});
  }
  Json p = params;
  p["decode_layer"] = sched.depth() - 1;
  model.mlps.push_back(make_mlp("multilayer.step", p, out, 1, fmt));
  model.provenance = provenance("match3-multilayer", Json{{"N", n}, {"M", m_mod}, {"m", m_embed}},
                                Json{{"ell", ell}, {"depth", sched.depth()}, {"c_schedule", c_sched},
                                     {"c_identity", c_id}, {"total_bits", fmt.total_bits()},
                                     {"frac_bits", fmt.frac_bits()}});
  validate_model(model);
  return model;
}

TransformerModel build_match3_restricted_twolayer(int n, int m) {
  register_construction_maps();
  if (n < 3 || n % 2 == 0) throw PreconditionError("match3-restricted: N must be odd and at least 3");
  if (m < n + 3) throw PreconditionError("match3-restricted: M must be at least N + 3");
  const double c1 = match_scale(n, m);
  const double c2 = 2.0 * std::log(6.0 * n);
  const FixedFormat fmt = FixedFormat::covering(std::max({c1, double(n + 1), double(m)}), ceil_log2(c1) + 6);
  TransformerModel model;
  model.input_dim = 2;
  model.append_end = true;
  model.mlps.push_back(make_mlp("restricted.phi1", Json{{"N", n}, {"M", m}}, 2, 6, fmt));
  // Shifted pair test x_i + x_j + 1 = 0: rotate the query by 2 pi / M.
  const double delta = kTwoPi / m;
  Matrix q1 = sparse(6, 3, {{0, 0, c1 * std::cos(delta)}, {0, 1, c1 * std::sin(delta)},
                            {1, 0, -c1 * std::sin(delta)}, {1, 1, c1 * std::cos(delta)}, {2, 2, c1}});
  Matrix k1 = sparse(6, 3, {{0, 0, 1.0}, {1, 1, -1.0}, {3, 2, 1.0}});
  Matrix v1 = sparse(6, 3, {{4, 0, 1.0}, {5, 1, 1.0}, {3, 2, 1.0}});
  model.layers.push_back({{make_attention_unit(q1, k1, v1, fmt)}});
  model.mlps.push_back(make_mlp("restricted.phi2", Json{{"N", n}}, 3, 3, fmt));
  // Features (g, is_end, one): real cells score c2 g, <END> scores c2 / 2.
  Matrix q2 = sparse(3, 2, {{2, 0, c2}, {2, 1, c2}});
  Matrix k2 = sparse(3, 2, {{0, 0, 1.0}, {1, 1, 0.5}});
  Matrix v2 = sparse(3, 1, {{0, 0, 1.0}});
  model.layers.push_back({{make_attention_unit(q2, k2, v2, fmt)}});
  model.mlps.push_back(ramp_layer(fmt));
  model.provenance = provenance("match3-restricted", Json{{"N", n}, {"M", m}},
                                Json{{"c_match", c1}, {"c_select", c2}, {"total_bits", fmt.total_bits()},
                                     {"frac_bits", fmt.frac_bits()}});
  validate_model(model);
  return model;
}

TransformerModel build_cycle_detector(CycleKind kind, int n) {
  register_construction_maps();
  if (n < 1) throw PreconditionError("cycle detector: N must be positive");
  const int s = kind == CycleKind::kCycle5 ? 5 : 3;
  double cells = 1.0;
  for (int k = 0; k < s; ++k) cells *= n + 1;
  if (cells > static_cast<double>(kMaxScoreCells)) {
    throw BudgetError("cycle detector: (N+1)^" + std::to_string(s) + " score cells exceed the desk-scale budget");
  }
  const double c = graph_scale(n);
  const FixedFormat fmt(16, 8);
  TransformerModel model;
  model.input_dim = static_cast<std::size_t>(n);
  model.append_end = true;
  model.end_token.assign(n, -1.0);
  model.adjacency_input = true;
  model.mlps.push_back(make_mlp("cycle.phi", Json::object(), n, 3, fmt));
  // Features (one, is_end, real); only the all-<END> cell has score 1.
  Matrix q = sparse(3, 1, {{0, 0, 1.0}});
  Matrix k = sparse(3, 1, {{1, 0, 1.0}});
  Matrix v = sparse(3, 1, {{2, 0, 1.0}});
  GraphAttentionUnit unit{make_higher_order_unit(q, std::vector<Matrix>(s - 1, k), std::vector<Matrix>(s - 1, v), fmt),
                          make_kappa("cycle_pattern", Json{{"s", s}, {"c", c}})};
  model.layers.push_back({{std::move(unit)}});
  model.mlps.push_back(ramp_layer(fmt));
  model.provenance = provenance(cycle_name(kind), Json{{"N", n}}, Json{{"c", c}, {"order", s}});
  validate_model(model);
  return model;
}

}  // namespace attnrep
