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

// Self-attention, s-order attention, graph attention, element-wise MLP
// layers and their composition into transformer models.
//
// A model is mlp_0, attn_1, mlp_1, ..., attn_D, mlp_D. Each attention layer
// sums its heads. MLP layers quantize both their inputs and their outputs
// to the layer format; attention parameters are quantized when a unit is
// constructed.

#ifndef ATTNREP_TRANSFORMER_HPP_
#define ATTNREP_TRANSFORMER_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "attnrep/numerics.hpp"
#include "json.hpp"

namespace attnrep {

using Json = nlohmann::json;

// Raised when a dense score tensor would exceed the desk-scale cell budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxScoreCells = std::size_t{1} << 24;

struct AttentionUnit {
  Matrix query;  // d x m
  Matrix key;    // d x m
  Matrix value;  // d x d_out
  Precision fmt;

  std::size_t in_dim() const { return query.rows(); }
  std::size_t embed_dim() const { return query.cols(); }
  std::size_t out_dim() const { return value.cols(); }
};

// Quantizes Q, K, V to `fmt` (throws if an entry saturates) and checks shapes.
AttentionUnit make_attention_unit(Matrix query, Matrix key, Matrix value, Precision fmt);

struct HigherOrderUnit {
  int order = 2;                // s
  Matrix query;                 // d x m
  std::vector<Matrix> keys;     // s - 1 matrices, d x m
  std::vector<Matrix> values;   // s - 1 matrices, d x d_out
  Precision fmt;

  std::size_t in_dim() const { return query.rows(); }
  std::size_t embed_dim() const { return query.cols(); }
  std::size_t out_dim() const { return values.front().cols(); }
};

HigherOrderUnit make_higher_order_unit(Matrix query, std::vector<Matrix> keys,
                                       std::vector<Matrix> values, Precision fmt);

// Cell-wise post-processing of graph attention scores. `edges` lists the
// s(s-1) bits A[i_a][i_b] for ordered position pairs (a, b), a != b, in
// lexicographic order of (a, b).
using KappaFn = std::function<double(std::span<const std::uint8_t> edges, double score)>;

struct Kappa {
  std::string name;
  Json params;
  KappaFn fn;
};

struct GraphAttentionUnit {
  HigherOrderUnit base;
  Kappa kappa;
};

using AttentionHead = std::variant<AttentionUnit, HigherOrderUnit, GraphAttentionUnit>;

std::size_t head_in_dim(const AttentionHead& head);
std::size_t head_embed_dim(const AttentionHead& head);
std::size_t head_out_dim(const AttentionHead& head);
int head_order(const AttentionHead& head);

struct MultiHeadLayer {
  std::vector<AttentionHead> heads;
};

using ElementFn = std::function<std::vector<double>(std::span<const double>)>;

struct MlpLayer {
  std::string name;
  Json params;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  ElementFn fn;
  Precision fmt;
};

struct TransformerModel {
  std::size_t input_dim = 0;
  bool append_end = false;
  std::vector<double> end_token;  // empty means all zeros
  // The first input_dim columns of the (pre-<END>) input form a square 0/1
  // adjacency matrix consumed by graph attention heads.
  bool adjacency_input = false;
  std::vector<MlpLayer> mlps;          // depth + 1 entries
  std::vector<MultiHeadLayer> layers;  // depth entries
  Json provenance = Json::object();

  std::size_t depth() const { return layers.size(); }
  std::size_t output_dim() const { return mlps.back().out_dim; }
  std::size_t max_heads() const;
  // Largest query/key or value width among all heads.
  std::size_t max_embed_dim() const;
  // Widest fixed-point format used by any layer (nullopt if none quantized).
  Precision widest_format() const;
};

// Throws DimensionError if layer widths do not chain.
void validate_model(const TransformerModel& model);

Matrix attend(const AttentionUnit& unit, const Matrix& x);
// Attention weights softmax(X Q K^T X^T), N x N.
Matrix attention_weights(const AttentionUnit& unit, const Matrix& x);
Matrix attend_higher_order(const HigherOrderUnit& unit, const Matrix& x);
Matrix attend_graph(const GraphAttentionUnit& unit, const Matrix& x, const Matrix& adjacency);
Matrix apply_head(const AttentionHead& head, const Matrix& x, const Matrix* adjacency);
Matrix apply_multi_head(const MultiHeadLayer& layer, const Matrix& x, const Matrix* adjacency);
Matrix apply_mlp(const MlpLayer& mlp, const Matrix& x);

struct LayerTrace {
  Matrix mlp_input;
  Matrix mlp_output;
  Matrix attention_output;  // empty for the final MLP
};

struct ModelTrace {
  Matrix interior_input;  // input with <END> appended if requested
  std::vector<LayerTrace> layers;
  Matrix output;
};

// Adds the <END> row if the model asks for it.
Matrix with_end_row(const TransformerModel& model, const Matrix& x);
// Adjacency seen by graph heads: the square input block, padded with zero
// edges for the <END> row.
Matrix interior_adjacency(const TransformerModel& model, const Matrix& x);

Matrix run_transformer(const TransformerModel& model, const Matrix& x);
ModelTrace run_transformer_traced(const TransformerModel& model, const Matrix& x);

// Registries that let serialized models refer to element maps by name.
using MlpFactory = std::function<ElementFn(const Json& params)>;
using KappaFactory = std::function<KappaFn(const Json& params)>;

void register_mlp(const std::string& name, MlpFactory factory);
void register_kappa(const std::string& name, KappaFactory factory);
MlpLayer make_mlp(const std::string& name, const Json& params, std::size_t in_dim,
                  std::size_t out_dim, Precision fmt);
Kappa make_kappa(const std::string& name, const Json& params);

Json format_to_json(const Precision& fmt);
Precision format_from_json(const Json& j);
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json model_to_json(const TransformerModel& model);
TransformerModel model_from_json(const Json& j);

// Residual-style carry: a head whose weights concentrate on the diagonal so
// that its output reproduces the payload columns of its input. Element i
// carries a fixed Gaussian key g_i (seeded) in the last `key_dim` columns of
// its features; the query is beta * g_i.
struct ApproxIdentity {
  std::size_t payload_dim;
  std::size_t key_dim;
  double beta;
  Matrix keys;  // max_n x key_dim, row i is g_{i+1}

  // Features (payload, g_i) for rows of `payload` in order.
  Matrix features(const Matrix& payload) const;
  AttentionUnit unit() const;
};

ApproxIdentity make_approx_identity(std::size_t max_n, std::size_t payload_dim,
                                    std::size_t key_dim, double beta, std::uint64_t seed);

}  // namespace attnrep

#endif  // ATTNREP_TRANSFORMER_HPP_
