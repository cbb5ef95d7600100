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

#include "attnrep/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "attnrep/rng.hpp"

namespace attnrep {
namespace {

std::vector<int> sorted_subset(std::vector<int> y, int n, int q) {
  std::sort(y.begin(), y.end());
  if (y.empty()) throw PreconditionError("certificate: empty subset");
  if (static_cast<int>(y.size()) > q) {
    throw PreconditionError("certificate: |y| = " + std::to_string(y.size()) +
                            " exceeds the design sparsity q = " + std::to_string(q));
  }
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] < 1 || y[k] > n) throw PreconditionError("certificate: index outside [N]");
    if (k > 0 && y[k] == y[k - 1]) throw PreconditionError("certificate: repeated index");
  }
  return y;
}

std::vector<std::vector<int>> sample_subsets(int n, int q, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> out;
  std::vector<int> idx(n);
  for (int c = 0; c < count; ++c) {
    for (int i = 0; i < n; ++i) idx[i] = i + 1;
    for (int k = 0; k < q; ++k) {
      const int pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - k)));
      std::swap(idx[k], idx[pick]);
    }
    out.emplace_back(idx.begin(), idx.begin() + q);
  }
  return out;
}

}  // namespace

std::vector<double> KeyBank::column(int i) const {
  std::vector<double> c(m_prime);
  for (int r = 0; r < m_prime; ++r) c[r] = u(r, i - 1);
  return c;
}

int key_bank_dim(int n, int q, double c0) {
  if (n < 1 || q < 1 || q > n) throw PreconditionError("key bank: need N >= q >= 1");
  const double raw = std::ceil(c0 * q * std::log(static_cast<double>(n)));
  return std::max(q, static_cast<int>(raw));
}

KeyBank rademacher_bank(int n, int q, int m_prime, std::uint64_t seed) {
  KeyBank bank;
  bank.n = n;
  bank.q = q;
  bank.m_prime = m_prime;
  bank.seed = seed;
  bank.base_seed = seed;
  bank.u = Matrix(m_prime, n);
  Rng rng(seed);
  const double mag = 1.0 / std::sqrt(static_cast<double>(m_prime));
  for (int r = 0; r < m_prime; ++r)
    for (int c = 0; c < n; ++c) bank.u(r, c) = rng.coin() ? mag : -mag;
  return bank;
}

KeyBank sample_key_bank(int n, int q, std::uint64_t seed, double c0,
                        const std::vector<std::vector<int>>& probes) {
  const int m_prime = key_bank_dim(n, q, c0);
  const std::vector<std::vector<int>> subsets =
      probes.empty() ? sample_subsets(n, q, 100, mix_seed(seed, 0x5eed)) : probes;
  std::ostringstream diag;
  for (int attempt = 0; attempt <= kMaxResamples; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : mix_seed(seed, static_cast<std::uint64_t>(attempt));
    KeyBank bank = rademacher_bank(n, q, m_prime, s);
    bank.base_seed = seed;
    bank.resamples = attempt;
    bank.c0 = c0;
    bool ok = true;
    for (const auto& y : subsets) {
      try {
        dual_certificate(bank, y);
      } catch (const CertificateError& e) {
        diag << "  attempt " << attempt << " (seed " << s << "): " << e.what() << "\n";
        ok = false;
        break;
      }
    }
    if (ok) return bank;
  }
  throw CertificateError("key bank validation failed after " + std::to_string(kMaxResamples) +
                         " resamples for N = " + std::to_string(n) + ", q = " + std::to_string(q) +
                         ", m' = " + std::to_string(m_prime) + " (C0 may be too small):\n" +
                         diag.str());
}

KeyBank hadamard_bank(int n, int q) {
  if (n < 1 || q < 1 || q > n) throw PreconditionError("hadamard bank: need N >= q >= 1");
  int m = 1;
  while (m < n) m *= 2;
  KeyBank bank;
  bank.n = n;
  bank.q = q;
  bank.m_prime = m;
  bank.u = Matrix(m, n);
  const double mag = 1.0 / std::sqrt(static_cast<double>(m));
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) {
      // Sylvester construction: H[r][c] = (-1)^{popcount(r & c)}.
      bank.u(r, c) = (__builtin_popcount(static_cast<unsigned>(r & c)) % 2 == 0) ? mag : -mag;
    }
  }
  return bank;
}

DualCertificate dual_certificate(const KeyBank& bank, std::vector<int> y) {
  y = sorted_subset(std::move(y), bank.n, bank.q);
  const std::size_t k = y.size();
  const int m = bank.m_prime;
  Matrix gram(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      double acc = 0.0;
      for (int r = 0; r < m; ++r) acc += bank.u(r, y[a] - 1) * bank.u(r, y[b] - 1);
      gram(a, b) = acc;
    }
  }
  const std::vector<double> ones(k, 1.0);
  const auto coeff = solve_spd(gram, ones);
  if (!coeff) throw CertificateError("certificate: Gram matrix of the support is singular");

  DualCertificate cert;
  cert.y = y;
  cert.w.assign(m, 0.0);
  for (std::size_t a = 0; a < k; ++a)
    for (int r = 0; r < m; ++r) cert.w[r] += (*coeff)[a] * bank.u(r, y[a] - 1);
  cert.norm = norm2(cert.w);
  cert.min_on = std::numeric_limits<double>::infinity();
  cert.max_on = -std::numeric_limits<double>::infinity();
  std::size_t next = 0;
  for (int i = 1; i <= bank.n; ++i) {
    double ip = 0.0;
    for (int r = 0; r < m; ++r) ip += bank.u(r, i - 1) * cert.w[r];
    if (next < k && y[next] == i) {
      ++next;
      cert.min_on = std::min(cert.min_on, ip);
      cert.max_on = std::max(cert.max_on, ip);
    } else {
      cert.max_off = std::max(cert.max_off, std::abs(ip));
    }
  }
  std::ostringstream why;
  if (cert.min_on < 1.0 - kOnSupportTol || cert.max_on > 1.0 + kOnSupportTol) {
    why << "on-support inner products in [" << cert.min_on << ", " << cert.max_on << "]";
  } else if (cert.max_off > kOffSupportBound) {
    why << "off-support inner product " << cert.max_off << " exceeds " << kOffSupportBound;
  } else if (cert.norm > 2.0 * std::sqrt(static_cast<double>(bank.q))) {
    why << "norm " << cert.norm << " exceeds 2 sqrt(q)";
  }
  if (!why.str().empty()) throw CertificateError("certificate failure: " + why.str());
  return cert;
}

std::vector<double> quantize_certificate(const std::vector<double>& w, int frac_bits) {
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    out[i] = std::ldexp(std::nearbyint(std::ldexp(w[i], frac_bits)), -frac_bits) + 0.0;
  return out;
}

CyclicPolytope cyclic_keys(int n, int q, double spacing) {
  if (q < 1 || n < 2 * q) throw PreconditionError("cyclic_keys: need N >= 2q and q >= 1");
  if (spacing == 0.0) spacing = 1.0 / n;
  if (!(spacing > 0.0)) throw PreconditionError("cyclic_keys: spacing must be positive");
  CyclicPolytope poly;
  poly.n = n;
  poly.q = q;
  poly.m_prime = 2 * q;
  poly.keys = Matrix(n, poly.m_prime);
  for (int i = 1; i <= n; ++i) {
    const double t = i * spacing;
    poly.t.push_back(t);
    double p = 1.0;
    for (int k = 0; k < poly.m_prime; ++k) {
      p *= t;
      poly.keys(i - 1, k) = p;
    }
  }
  return poly;
}

double FaceHyperplane::evaluate(const std::vector<double>& theta) const {
  return dot(w, theta) + b;
}

FaceHyperplane face_hyperplane(const CyclicPolytope& poly, std::vector<int> y) {
  y = sorted_subset(std::move(y), poly.n, poly.q);
  // Coefficients (ascending powers) of prod_{j in y} (t - t_j)^2.
  std::vector<double> c{1.0};
  for (int j : y) {
    const double tj = poly.t[j - 1];
    for (int rep = 0; rep < 2; ++rep) {
      std::vector<double> next(c.size() + 1, 0.0);
      for (std::size_t k = 0; k < c.size(); ++k) {
        next[k + 1] += c[k];
        next[k] -= tj * c[k];
      }
      c = std::move(next);
    }
  }
  c.resize(poly.m_prime + 1, 0.0);

  FaceHyperplane h;
  h.y = y;
  h.raw_gap = std::numeric_limits<double>::infinity();
  std::size_t next = 0;
  for (int i = 1; i <= poly.n; ++i) {
    if (next < y.size() && y[next] == i) {
      ++next;
      continue;
    }
    double p = 1.0;
    for (int j : y) p *= (poly.t[i - 1] - poly.t[j - 1]) * (poly.t[i - 1] - poly.t[j - 1]);
    h.raw_gap = std::min(h.raw_gap, p);
  }
  if (h.raw_gap < kMinRawGap) {
    throw CertificateError("face hyperplane: off-face gap " + std::to_string(h.raw_gap) +
                           " is below 2^-40; the t spacing is too fine for q = " +
                           std::to_string(poly.q));
  }
  h.gamma = std::isinf(h.raw_gap) ? 1.0 : 1.0 / h.raw_gap;
  h.w.resize(poly.m_prime);
  for (int k = 0; k < poly.m_prime; ++k) h.w[k] = -h.gamma * c[k + 1];
  h.b = 1.0 - h.gamma * c[0];
  h.gap = std::numeric_limits<double>::infinity();
  next = 0;
  for (int i = 1; i <= poly.n; ++i) {
    if (next < y.size() && y[next] == i) {
      ++next;
      continue;
    }
    const auto row = poly.keys.row(i - 1);
    h.gap = std::min(h.gap, 1.0 - h.evaluate(std::vector<double>(row.begin(), row.end())));
  }
  return h;
}

}  // namespace attnrep
