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

// Key geometry for sparse-averaging attention: Rademacher key banks with
// dual certificates, and moment-curve keys with face hyperplanes.

#ifndef ATTNREP_CERTIFICATES_HPP_
#define ATTNREP_CERTIFICATES_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnrep/numerics.hpp"

namespace attnrep {

class CertificateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultC0 = 16.0;
inline constexpr int kMaxResamples = 10;
inline constexpr double kOnSupportTol = 1e-9;
inline constexpr double kOffSupportBound = 0.5;
// Face hyperplanes refuse parameter sets whose unnormalized off-face gap
// falls below this value.
inline constexpr double kMinRawGap = 0x1.0p-40;

struct KeyBank {
  int n = 0;
  int q = 0;
  int m_prime = 0;
  std::uint64_t seed = 0;       // seed actually used (after resampling)
  std::uint64_t base_seed = 0;  // seed requested by the caller
  int resamples = 0;
  double c0 = 0.0;  // constant behind m_prime, 0 when m_prime was explicit
  Matrix u;  // m' x n, column i is u_{i+1}

  std::vector<double> column(int i) const;  // 1-based
};

struct DualCertificate {
  std::vector<int> y;  // 1-based, sorted
  std::vector<double> w;
  double norm = 0.0;
  double min_on = 0.0, max_on = 0.0;  // inner products on y
  double max_off = 0.0;               // largest |<u_i, w>| off y
};

// m' = max(q, ceil(c0 * q * ln N)).
int key_bank_dim(int n, int q, double c0 = kDefaultC0);

// Entries +-1/sqrt(m'). Validated by building certificates for `probes`
// (1-based subsets), or for 100 sampled q-subsets when `probes` is empty;
// up to kMaxResamples fresh banks are drawn on failure.
KeyBank sample_key_bank(int n, int q, std::uint64_t seed, double c0 = kDefaultC0,
                        const std::vector<std::vector<int>>& probes = {});
// Rademacher bank from an explicit seed, no validation.
KeyBank rademacher_bank(int n, int q, int m_prime, std::uint64_t seed);
// Orthonormal columns taken from a Sylvester-Hadamard matrix (m' = next power
// of two >= n).
KeyBank hadamard_bank(int n, int q);

DualCertificate dual_certificate(const KeyBank& bank, std::vector<int> y);

// Entry-wise quantization of w with `frac_bits` fractional bits.
std::vector<double> quantize_certificate(const std::vector<double>& w, int frac_bits);

struct CyclicPolytope {
  int n = 0;
  int q = 0;
  int m_prime = 0;  // 2q
  std::vector<double> t;
  Matrix keys;  // n x m', row i is (t_i, t_i^2, ..., t_i^{m'})
};

CyclicPolytope cyclic_keys(int n, int q, double spacing = 0.0);  // 0 means 1/N

struct FaceHyperplane {
  std::vector<int> y;
  std::vector<double> w;  // m'
  double b = 0.0;
  double gamma = 0.0;
  double raw_gap = 0.0;  // min over off-face vertices of prod (t - t_j)^2
  double gap = 0.0;      // min over off-face vertices of 1 - (<w, theta> + b)

  double evaluate(const std::vector<double>& theta) const;
};

// gamma normalizes the smallest off-face gap to 1.
FaceHyperplane face_hyperplane(const CyclicPolytope& poly, std::vector<int> y);

}  // namespace attnrep

#endif  // ATTNREP_CERTIFICATES_HPP_
