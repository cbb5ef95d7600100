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

#include "attnrep/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "attnrep/rng.hpp"

namespace attnrep {
namespace {

struct Registry {
  std::mutex mu;
  std::map<std::string, MlpFactory> mlps;
  std::map<std::string, KappaFactory> kappas;
};

Registry& registry() {
  static Registry* r = [] {
    auto* reg = new Registry;
    reg->mlps["identity"] = [](const Json&) -> ElementFn {
      return [](std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); };
    };
    reg->kappas["score"] = [](const Json&) -> KappaFn {
      return [](std::span<const std::uint8_t>, double s) { return s; };
    };
    return reg;
  }();
  return *r;
}

void check_cols(const Matrix& x, std::size_t d, const char* what) {
  if (x.cols() != d) {
    throw DimensionError(std::string(what) + ": input has " + std::to_string(x.cols()) +
                         " columns, unit expects " + std::to_string(d));
  }
}

std::size_t checked_cells(std::size_t n, int order) {
  std::size_t cells = n;
  for (int k = 1; k < order; ++k) {
    if (cells > kMaxScoreCells / std::max<std::size_t>(n, 1)) {
      throw BudgetError("score tensor for N = " + std::to_string(n) + ", s = " +
                        std::to_string(order) + " exceeds " + std::to_string(kMaxScoreCells) +
                        " cells");
    }
    cells *= n;
  }
  if (cells > kMaxScoreCells) {
    throw BudgetError("score tensor exceeds " + std::to_string(kMaxScoreCells) + " cells");
  }
  return cells / std::max<std::size_t>(n, 1);
}

// Row-major Khatri-Rao chain (first factor most significant).
Matrix chain_khatri_rao(const std::vector<Matrix>& factors) {
  Matrix acc = factors.front();
  for (std::size_t k = 1; k < factors.size(); ++k) acc = khatri_rao(acc, factors[k]);
  return acc;
}

Matrix higher_order_scores(const HigherOrderUnit& unit, const Matrix& x, Matrix* value_cells) {
  check_cols(x, unit.in_dim(), "attend_higher_order");
  checked_cells(x.rows(), unit.order);
  std::vector<Matrix> keys, values;
  for (const Matrix& k : unit.keys) keys.push_back(matmul(x, k));
  for (const Matrix& v : unit.values) values.push_back(matmul(x, v));
  const Matrix xq = matmul(x, unit.query);
  if (value_cells) *value_cells = chain_khatri_rao(values);
  return matmul_transposed(xq, chain_khatri_rao(keys));
}

}  // namespace

AttentionUnit make_attention_unit(Matrix query, Matrix key, Matrix value, Precision fmt) {
  if (query.rows() != key.rows() || query.cols() != key.cols() || value.rows() != query.rows()) {
    throw DimensionError("attention unit: Q, K must be d x m and V must be d x d_out");
  }
  AttentionUnit u;
  u.query = quantize_matrix(query, fmt, "query");
  u.key = quantize_matrix(key, fmt, "key");
  u.value = quantize_matrix(value, fmt, "value");
  u.fmt = fmt;
  return u;
}

HigherOrderUnit make_higher_order_unit(Matrix query, std::vector<Matrix> keys,
                                       std::vector<Matrix> values, Precision fmt) {
  if (keys.empty() || keys.size() != values.size()) {
    throw DimensionError("higher-order unit: need s - 1 >= 1 key and value matrices");
  }
  HigherOrderUnit u;
  u.order = static_cast<int>(keys.size()) + 1;
  u.query = quantize_matrix(query, fmt, "query");
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (keys[k].rows() != query.rows() || keys[k].cols() != query.cols()) {
      throw DimensionError("higher-order unit: key " + std::to_string(k + 1) + " shape");
    }
    if (values[k].rows() != query.rows() || values[k].cols() != values[0].cols()) {
      throw DimensionError("higher-order unit: value " + std::to_string(k + 1) + " shape");
    }
    u.keys.push_back(quantize_matrix(keys[k], fmt, "key"));
    u.values.push_back(quantize_matrix(values[k], fmt, "value"));
  }
  u.fmt = fmt;
  return u;
}

std::size_t head_in_dim(const AttentionHead& head) {
  return std::visit(
      [](const auto& h) -> std::size_t {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, GraphAttentionUnit>) return h.base.in_dim();
        else return h.in_dim();
      },
      head);
}

std::size_t head_embed_dim(const AttentionHead& head) {
  return std::visit(
      [](const auto& h) -> std::size_t {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, GraphAttentionUnit>) return h.base.embed_dim();
        else return h.embed_dim();
      },
      head);
}

std::size_t head_out_dim(const AttentionHead& head) {
  return std::visit(
      [](const auto& h) -> std::size_t {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, GraphAttentionUnit>) return h.base.out_dim();
        else return h.out_dim();
      },
      head);
}

int head_order(const AttentionHead& head) {
  if (const auto* h = std::get_if<HigherOrderUnit>(&head)) return h->order;
  if (const auto* g = std::get_if<GraphAttentionUnit>(&head)) return g->base.order;
  return 2;
}

std::size_t TransformerModel::max_heads() const {
  std::size_t h = 0;
  for (const auto& layer : layers) h = std::max(h, layer.heads.size());
  return h;
}

std::size_t TransformerModel::max_embed_dim() const {
  std::size_t m = 0;
  for (const auto& layer : layers)
    for (const auto& head : layer.heads)
      m = std::max({m, head_embed_dim(head), head_out_dim(head)});
  return m;
}

Precision TransformerModel::widest_format() const {
  Precision best;
  auto consider = [&](const Precision& p) {
    if (p && (!best || p->total_bits() > best->total_bits())) best = p;
  };
  for (const auto& mlp : mlps) consider(mlp.fmt);
  for (const auto& layer : layers) {
    for (const auto& head : layer.heads) {
      std::visit(
          [&](const auto& h) {
            using T = std::decay_t<decltype(h)>;
            if constexpr (std::is_same_v<T, GraphAttentionUnit>) consider(h.base.fmt);
            else consider(h.fmt);
          },
          head);
    }
  }
  return best;
}

void validate_model(const TransformerModel& model) {
  if (model.mlps.size() != model.layers.size() + 1) {
    throw DimensionError("model needs exactly one more MLP layer than attention layers");
  }
  if (model.mlps.front().in_dim != model.input_dim) {
    throw DimensionError("first MLP width does not match the model input width");
  }
  if (!model.end_token.empty() && model.end_token.size() != model.input_dim) {
    throw DimensionError("<END> token width does not match the model input width");
  }
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& heads = model.layers[k].heads;
    if (heads.empty()) throw DimensionError("attention layer " + std::to_string(k) + " has no heads");
    const std::size_t out = head_out_dim(heads.front());
    for (const auto& head : heads) {
      if (head_in_dim(head) != model.mlps[k].out_dim) {
        throw DimensionError("layer " + std::to_string(k) + ": head input width " +
                             std::to_string(head_in_dim(head)) + " != MLP output width " +
                             std::to_string(model.mlps[k].out_dim));
      }
      if (head_out_dim(head) != out) {
        throw DimensionError("layer " + std::to_string(k) + ": heads disagree on output width");
      }
      if (std::holds_alternative<GraphAttentionUnit>(head) && !model.adjacency_input) {
        throw DimensionError("graph attention head in a model without adjacency input");
      }
    }
    if (model.mlps[k + 1].in_dim != out) {
      throw DimensionError("layer " + std::to_string(k) + ": attention output width " +
                           std::to_string(out) + " != next MLP input width " +
                           std::to_string(model.mlps[k + 1].in_dim));
    }
  }
}

Matrix attention_weights(const AttentionUnit& unit, const Matrix& x) {
  check_cols(x, unit.in_dim(), "attend");
  const Matrix xq = matmul(x, unit.query);
  const Matrix xk = matmul(x, unit.key);
  return row_softmax(matmul_transposed(xq, xk));
}

Matrix attend(const AttentionUnit& unit, const Matrix& x) {
  return matmul(attention_weights(unit, x), matmul(x, unit.value));
}

Matrix attend_higher_order(const HigherOrderUnit& unit, const Matrix& x) {
  Matrix cells;
  Matrix scores = higher_order_scores(unit, x, &cells);
  return matmul(row_softmax(scores), cells);
}

Matrix attend_graph(const GraphAttentionUnit& unit, const Matrix& x, const Matrix& adjacency) {
  const std::size_t n = x.rows();
  if (adjacency.rows() != n || adjacency.cols() != n) {
    throw DimensionError("attend_graph: adjacency must be " + std::to_string(n) + " x " +
                         std::to_string(n));
  }
  for (double a : adjacency.data()) {
    if (a != 0.0 && a != 1.0) throw PreconditionError("attend_graph: adjacency is not binary");
  }
  Matrix cells;
  Matrix scores = higher_order_scores(unit.base, x, &cells);
  const int s = unit.base.order;
  std::vector<std::size_t> idx(s);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(s * (s - 1)));
  for (std::size_t i = 0; i < n; ++i) {
    idx[0] = i;
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      std::size_t rest = c;
      for (int k = s - 1; k >= 1; --k) {
        idx[k] = rest % n;
        rest /= n;
      }
      std::size_t e = 0;
      for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b)
          if (a != b) bits[e++] = adjacency(idx[a], idx[b]) != 0.0 ? 1 : 0;
      scores(i, c) = unit.kappa.fn(bits, scores(i, c));
    }
  }
  return matmul(row_softmax(scores), cells);
}

Matrix apply_head(const AttentionHead& head, const Matrix& x, const Matrix* adjacency) {
  if (const auto* u = std::get_if<AttentionUnit>(&head)) return attend(*u, x);
  if (const auto* h = std::get_if<HigherOrderUnit>(&head)) return attend_higher_order(*h, x);
  const auto& g = std::get<GraphAttentionUnit>(head);
  if (!adjacency) throw PreconditionError("graph attention head needs an adjacency matrix");
  return attend_graph(g, x, *adjacency);
}

Matrix apply_multi_head(const MultiHeadLayer& layer, const Matrix& x, const Matrix* adjacency) {
  Matrix out = apply_head(layer.heads.front(), x, adjacency);
  for (std::size_t h = 1; h < layer.heads.size(); ++h) out = add(out, apply_head(layer.heads[h], x, adjacency));
  return out;
}

Matrix apply_mlp(const MlpLayer& mlp, const Matrix& x) {
  check_cols(x, mlp.in_dim, mlp.name.c_str());
  Matrix out(x.rows(), mlp.out_dim);
  std::vector<double> in(mlp.in_dim);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < mlp.in_dim; ++c) {
      if (!mlp.fmt) {
        in[c] = x(r, c);
        continue;
      }
      const Quantized q = quantize(x(r, c), *mlp.fmt);
      if (q.saturated) {
        throw PreconditionError(mlp.name + ": input " + std::to_string(x(r, c)) +
                                " exceeds the layer's fixed-point range");
      }
      in[c] = q.value;
    }
    const std::vector<double> y = mlp.fn(in);
    if (y.size() != mlp.out_dim) {
      throw DimensionError(mlp.name + ": element map returned " + std::to_string(y.size()) +
                           " values, expected " + std::to_string(mlp.out_dim));
    }
    for (std::size_t c = 0; c < mlp.out_dim; ++c) {
      if (!mlp.fmt) {
        out(r, c) = y[c];
        continue;
      }
      const Quantized q = quantize(y[c], *mlp.fmt);
      if (q.saturated) {
        throw PreconditionError(mlp.name + ": output " + std::to_string(y[c]) +
                                " exceeds the layer's fixed-point range");
      }
      out(r, c) = q.value;
    }
  }
  return out;
}

Matrix with_end_row(const TransformerModel& model, const Matrix& x) {
  check_cols(x, model.input_dim, "run_transformer");
  if (!model.append_end) return x;
  Matrix out(x.rows() + 1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy(x.row(r).begin(), x.row(r).end(), out.row(r).begin());
  if (!model.end_token.empty())
    std::copy(model.end_token.begin(), model.end_token.end(), out.row(x.rows()).begin());
  return out;
}

Matrix interior_adjacency(const TransformerModel& model, const Matrix& x) {
  if (x.cols() < x.rows()) {
    throw DimensionError("adjacency input needs at least N columns");
  }
  const std::size_t n = x.rows();
  const std::size_t total = model.append_end ? n + 1 : n;
  Matrix adj(total, total);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (x(i, j) != 0.0 && x(i, j) != 1.0) {
        throw PreconditionError("adjacency input is not binary");
      }
      adj(i, j) = x(i, j);
    }
  }
  return adj;
}

ModelTrace run_transformer_traced(const TransformerModel& model, const Matrix& x) {
  ModelTrace trace;
  trace.interior_input = with_end_row(model, x);
  std::optional<Matrix> adjacency;
  if (model.adjacency_input) adjacency = interior_adjacency(model, x);
  Matrix h = trace.interior_input;
  for (std::size_t k = 0; k < model.mlps.size(); ++k) {
    LayerTrace lt;
    lt.mlp_input = h;
    lt.mlp_output = apply_mlp(model.mlps[k], h);
    if (k < model.layers.size()) {
      lt.attention_output =
          apply_multi_head(model.layers[k], lt.mlp_output, adjacency ? &*adjacency : nullptr);
      h = lt.attention_output;
    } else {
      h = lt.mlp_output;
    }
    trace.layers.push_back(std::move(lt));
  }
  if (model.append_end) {
    Matrix trimmed(h.rows() - 1, h.cols());
    for (std::size_t r = 0; r + 1 < h.rows(); ++r)
      std::copy(h.row(r).begin(), h.row(r).end(), trimmed.row(r).begin());
    h = std::move(trimmed);
  }
  trace.output = std::move(h);
  return trace;
}

Matrix run_transformer(const TransformerModel& model, const Matrix& x) {
  return run_transformer_traced(model, x).output;
}

void register_mlp(const std::string& name, MlpFactory factory) {
  Registry& r = registry();
  std::lock_guard<std::mutex> lock(r.mu);
  r.mlps[name] = std::move(factory);
}

void register_kappa(const std::string& name, KappaFactory factory) {
  Registry& r = registry();
  std::lock_guard<std::mutex> lock(r.mu);
  r.kappas[name] = std::move(factory);
}

MlpLayer make_mlp(const std::string& name, const Json& params, std::size_t in_dim,
                  std::size_t out_dim, Precision fmt) {
  MlpFactory factory;
  {
    Registry& r = registry();
    std::lock_guard<std::mutex> lock(r.mu);
    auto it = r.mlps.find(name);
    if (it == r.mlps.end()) throw PreconditionError("unknown MLP element map '" + name + "'");
    factory = it->second;
  }
  return MlpLayer{name, params, in_dim, out_dim, factory(params), fmt};
}

Kappa make_kappa(const std::string& name, const Json& params) {
  KappaFactory factory;
  {
    Registry& r = registry();
    std::lock_guard<std::mutex> lock(r.mu);
    auto it = r.kappas.find(name);
    if (it == r.kappas.end()) throw PreconditionError("unknown kappa '" + name + "'");
    factory = it->second;
  }
  return Kappa{name, params, factory(params)};
}

Json format_to_json(const Precision& fmt) {
  if (!fmt) return nullptr;
  return Json{{"total_bits", fmt->total_bits()}, {"frac_bits", fmt->frac_bits()}};
}

Precision format_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return FixedFormat(j.at("total_bits").get<int>(), j.at("frac_bits").get<int>());
}

Json matrix_to_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const Json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

namespace {

Json higher_order_json(const HigherOrderUnit& h) {
  Json keys = Json::array(), values = Json::array();
  for (const auto& k : h.keys) keys.push_back(matrix_to_json(k));
  for (const auto& v : h.values) values.push_back(matrix_to_json(v));
  return Json{{"order", h.order},
              {"fmt", format_to_json(h.fmt)},
              {"query", matrix_to_json(h.query)},
              {"keys", keys},
              {"values", values}};
}

// Parameters are stored already quantized, so reloading skips requantization
// and reproduces the exact doubles.
HigherOrderUnit higher_order_from_json(const Json& j) {
  HigherOrderUnit h;
  h.order = j.at("order").get<int>();
  h.fmt = format_from_json(j.at("fmt"));
  h.query = matrix_from_json(j.at("query"));
  for (const auto& k : j.at("keys")) h.keys.push_back(matrix_from_json(k));
  for (const auto& v : j.at("values")) h.values.push_back(matrix_from_json(v));
  return h;
}

}  // namespace

Json model_to_json(const TransformerModel& model) {
  Json j;
  j["schema"] = "attnrep.model/1";
  j["input_dim"] = model.input_dim;
  j["append_end"] = model.append_end;
  j["end_token"] = model.end_token;
  j["adjacency_input"] = model.adjacency_input;
  j["provenance"] = model.provenance;
  Json mlps = Json::array();
  for (const auto& m : model.mlps) {
    mlps.push_back(Json{{"name", m.name},
                        {"params", m.params},
                        {"in_dim", m.in_dim},
                        {"out_dim", m.out_dim},
                        {"fmt", format_to_json(m.fmt)}});
  }
  j["mlps"] = mlps;
  Json layers = Json::array();
  for (const auto& layer : model.layers) {
    Json heads = Json::array();
    for (const auto& head : layer.heads) {
      if (const auto* u = std::get_if<AttentionUnit>(&head)) {
        heads.push_back(Json{{"kind", "standard"},
                             {"fmt", format_to_json(u->fmt)},
                             {"query", matrix_to_json(u->query)},
                             {"key", matrix_to_json(u->key)},
                             {"value", matrix_to_json(u->value)}});
      } else if (const auto* h = std::get_if<HigherOrderUnit>(&head)) {
        Json hj = higher_order_json(*h);
        hj["kind"] = "higher_order";
        heads.push_back(hj);
      } else {
        const auto& g = std::get<GraphAttentionUnit>(head);
        Json hj = higher_order_json(g.base);
        hj["kind"] = "graph";
        hj["kappa"] = Json{{"name", g.kappa.name}, {"params", g.kappa.params}};
        heads.push_back(hj);
      }
    }
    layers.push_back(Json{{"heads", heads}});
  }
  j["layers"] = layers;
  return j;
}

TransformerModel model_from_json(const Json& j) {
  if (j.value("schema", "") != "attnrep.model/1") {
    throw PreconditionError("model JSON: unsupported schema");
  }
  TransformerModel model;
  model.input_dim = j.at("input_dim").get<std::size_t>();
  model.append_end = j.at("append_end").get<bool>();
  model.end_token = j.at("end_token").get<std::vector<double>>();
  model.adjacency_input = j.at("adjacency_input").get<bool>();
  model.provenance = j.at("provenance");
  for (const auto& m : j.at("mlps")) {
    model.mlps.push_back(make_mlp(m.at("name").get<std::string>(), m.at("params"),
                                  m.at("in_dim").get<std::size_t>(),
                                  m.at("out_dim").get<std::size_t>(), format_from_json(m.at("fmt"))));
  }
  for (const auto& lj : j.at("layers")) {
    MultiHeadLayer layer;
    for (const auto& hj : lj.at("heads")) {
      const std::string kind = hj.at("kind").get<std::string>();
      if (kind == "standard") {
        AttentionUnit u;
        u.fmt = format_from_json(hj.at("fmt"));
        u.query = matrix_from_json(hj.at("query"));
        u.key = matrix_from_json(hj.at("key"));
        u.value = matrix_from_json(hj.at("value"));
        layer.heads.emplace_back(std::move(u));
      } else if (kind == "higher_order") {
        layer.heads.emplace_back(higher_order_from_json(hj));
      } else if (kind == "graph") {
        GraphAttentionUnit g{higher_order_from_json(hj),
                             make_kappa(hj.at("kappa").at("name").get<std::string>(),
                                        hj.at("kappa").at("params"))};
        layer.heads.emplace_back(std::move(g));
      } else {
        throw PreconditionError("model JSON: unknown head kind '" + kind + "'");
      }
    }
    model.layers.push_back(std::move(layer));
  }
  validate_model(model);
  return model;
}

Matrix ApproxIdentity::features(const Matrix& payload) const {
  if (payload.cols() != payload_dim) throw DimensionError("approx identity: payload width");
  if (payload.rows() > keys.rows()) throw DimensionError("approx identity: too many rows");
  Matrix out(payload.rows(), payload_dim + key_dim);
  for (std::size_t r = 0; r < payload.rows(); ++r) {
    for (std::size_t c = 0; c < payload_dim; ++c) out(r, c) = payload(r, c);
    for (std::size_t c = 0; c < key_dim; ++c) out(r, payload_dim + c) = keys(r, c);
  }
  return out;
}

AttentionUnit ApproxIdentity::unit() const {
  const std::size_t d = payload_dim + key_dim;
  Matrix q(d, key_dim), k(d, key_dim), v(d, payload_dim);
  for (std::size_t c = 0; c < key_dim; ++c) {
    q(payload_dim + c, c) = beta;
    k(payload_dim + c, c) = 1.0;
  }
  for (std::size_t c = 0; c < payload_dim; ++c) v(c, c) = 1.0;
  return make_attention_unit(q, k, v, std::nullopt);
}

ApproxIdentity make_approx_identity(std::size_t max_n, std::size_t payload_dim,
                                    std::size_t key_dim, double beta, std::uint64_t seed) {
  if (key_dim == 0 || max_n == 0) throw PreconditionError("approx identity: empty key bank");
  ApproxIdentity id{payload_dim, key_dim, beta, Matrix(max_n, key_dim)};
  Rng rng(seed);
  for (std::size_t r = 0; r < max_n; ++r) {
    auto row = id.keys.row(r);
    for (double& v : row) v = rng.gaussian();
    const double norm = norm2(row);
    for (double& v : row) v /= norm;
  }
  return id;
}

}  // namespace attnrep
