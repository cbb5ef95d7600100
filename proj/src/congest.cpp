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

#include "attnrep/congest.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace attnrep {

int CongestTree::height() const { return *std::max_element(depth.begin(), depth.end()); }

std::string CongestGraph::label(int id) const {
  if (is_root(id)) return "u" + std::to_string(id + 1);
  if (is_leaf(id)) {
    const int k = id - n;
    return "v" + std::to_string(k / n + 1) + "," + std::to_string(k % n + 1);
  }
  return "w" + std::to_string(id);
}

int CongestGraph::tree_depth() const {
  int d = 0;
  for (const auto& t : trees) d = std::max(d, t.height());
  return d;
}

std::vector<std::vector<int>> CongestGraph::adjacency() const {
  std::vector<std::vector<int>> adj(num_nodes);
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

int CongestGraph::max_degree() const {
  std::vector<int> deg(num_nodes, 0);
  for (const auto& [a, b] : edges) {
    ++deg[a];
    ++deg[b];
  }
  return num_nodes == 0 ? 0 : *std::max_element(deg.begin(), deg.end());
}

int CongestGraph::diameter() const {
  const auto adj = adjacency();
  int best = 0;
  std::vector<int> dist(num_nodes);
  for (int s = 0; s < num_nodes; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<int> bfs;
    dist[s] = 0;
    bfs.push(s);
    while (!bfs.empty()) {
      const int v = bfs.front();
      bfs.pop();
      for (int w : adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          bfs.push(w);
        }
      }
    }
    for (int d : dist) {
      if (d < 0) return -1;  // disconnected
      best = std::max(best, d);
    }
  }
  return best;
}

CongestGraph build_congest_graph(int n) {
  if (n < 1) throw PreconditionError("congest graph: N must be positive");
  CongestGraph g;
  g.n = n;
  g.num_nodes = n + n * n;
  for (int i = 1; i <= n; ++i) {
    CongestTree t;
    t.root_index = i;
    t.local_of_leaf.assign(static_cast<std::size_t>(n) * n, -1);
    auto add_node = [&](int global, int parent, int depth) {
      const int local = static_cast<int>(t.nodes.size());
      t.nodes.push_back(global);
      t.parent.push_back(parent);
      t.children.push_back({-1, -1});
      t.depth.push_back(depth);
      t.leaf_pair.emplace_back(0, 0);
      if (parent < 0) {
        t.parent_edge.push_back(-1);
      } else {
        t.parent_edge.push_back(static_cast<int>(g.edges.size()));
        g.edges.emplace_back(t.nodes[parent], global);
        g.edge_tree.push_back(i);
        auto& slots = t.children[parent];
        (slots[0] < 0 ? slots[0] : slots[1]) = local;
      }
      return local;
    };
    // Ordered leaf list v_{i,1}, v_{1,i}, v_{i,2}, v_{2,i}, ... with v_{i,i} once.
    std::vector<std::pair<int, int>> order;
    for (int j = 1; j <= n; ++j) {
      order.emplace_back(i, j);
      if (j != i) order.emplace_back(j, i);
    }
    std::function<void(int, int, int, int)> build = [&](int lo, int hi, int parent, int depth) {
      if (hi - lo == 1) {
        const auto [a, b] = order[lo];
        const int local = add_node(g.leaf(a, b), parent, depth);
        t.leaf_pair[local] = {a, b};
        t.leaves.push_back(local);
        t.local_of_leaf[static_cast<std::size_t>(a - 1) * n + (b - 1)] = local;
        return;
      }
      const int self = parent < 0 ? add_node(g.root(i), -1, 0) : add_node(g.num_nodes++, parent, depth);
      const int mid = lo + (hi - lo) / 2;
      build(lo, mid, self, depth + 1);
      build(mid, hi, self, depth + 1);
    };
    if (order.size() == 1) {
      // A single leaf hangs directly below u_i.
      const int root = add_node(g.root(i), -1, 0);
      build(0, 1, root, 1);
    } else {
      build(0, static_cast<int>(order.size()), -1, 0);
    }
    g.trees.push_back(std::move(t));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Partition

Partition alice_bob_partition(const CongestGraph& g) {
  Partition p;
  p.alice.assign(g.num_nodes, 0);
  const double half = g.n / 2.0;
  for (const auto& t : g.trees) {
    const bool root_alice = t.root_index <= half;
    // Children carry larger local ids than their parents, so a reverse sweep
    // labels bottom-up.
    std::vector<std::uint8_t> side(t.nodes.size(), 0);
    for (int local = static_cast<int>(t.nodes.size()) - 1; local >= 0; --local) {
      std::uint8_t s;
      if (t.is_leaf(local)) {
        s = std::min(t.leaf_pair[local].first, t.leaf_pair[local].second) <= half ? 1 : 0;
      } else if (local == 0) {
        s = root_alice ? 1 : 0;
      } else {
        const auto [l, r] = t.children[local];
        if (r < 0) s = side[l];
        else if (side[l] == side[r]) s = side[l];  // rules (a) and (b)
        else s = root_alice ? 1 : 0;               // rule (c)
      }
      side[local] = s;
      p.alice[t.nodes[local]] = s;
    }
  }
  return p;
}

bool partition_level_ordered(const CongestGraph& g, const Partition& p) {
  for (const auto& t : g.trees) {
    std::vector<int> level{0};
    while (!level.empty()) {
      bool seen_bob = false;
      std::vector<int> next;
      for (int local : level) {
        const bool a = p.on_alice(t.nodes[local]);
        if (a && seen_bob) return false;
        seen_bob = seen_bob || !a;
        for (int c : t.children[local])
          if (c >= 0) next.push_back(c);
      }
      level = std::move(next);
    }
  }
  return true;
}

int cut_size(const CongestGraph& g, const Partition& p) {
  int cut = 0;
  for (const auto& [a, b] : g.edges) cut += p.alice[a] != p.alice[b] ? 1 : 0;
  return cut;
}

int cut_bound(const CongestGraph& g) { return g.n * (g.tree_depth() + 1); }

// ---------------------------------------------------------------------------
// Round engine

namespace {

struct Msg {
  int tree = 0;      // 0-based
  int from_local = 0;
  int to_local = 0;
  int index = 0;
  double value = 0.0;
};

class Engine {
 public:
  // `first_round` is the global round number before this stage starts.
  Engine(const CongestGraph& g, const Partition& part, ProtocolTrace& trace, bool keep_log, int first_round)
      : g_(g), part_(part), trace_(trace), keep_log_(keep_log), first_round_(first_round),
        queues_(2 * g.edges.size()) {}

  void send(int tree, int from_local, int to_local, int index, double value) {
    const CongestTree& t = g_.trees[tree];
    // The edge joins a node to its parent; find which end is the child.
    const bool upward = t.parent[from_local] == to_local;
    const int edge = upward ? t.parent_edge[from_local] : t.parent_edge[to_local];
    const int q = 2 * edge + (upward ? 1 : 0);
    if (queues_[q].empty()) busy_.insert(q);
    queues_[q].push_back({tree, from_local, to_local, index, value});
  }

  // Runs rounds until every queue drains; returns the number of rounds.
  int run(const std::function<void(const Msg&)>& deliver, long long* messages) {
    int rounds = 0;
    std::vector<Msg> arrived;
    while (!busy_.empty()) {
      ++rounds;
      arrived.clear();
      // One payload per directed edge per round.
      for (auto it = busy_.begin(); it != busy_.end();) {
        auto& q = queues_[*it];
        arrived.push_back(q.front());
        q.pop_front();
        it = q.empty() ? busy_.erase(it) : std::next(it);
      }
      trace_.max_edge_load = std::max(trace_.max_edge_load, 1);
      for (const Msg& m : arrived) {
        const CongestTree& t = g_.trees[m.tree];
        const int from = t.nodes[m.from_local], to = t.nodes[m.to_local];
        ++*messages;
        if (part_.alice[from] != part_.alice[to]) ++trace_.cut_messages;
        if (keep_log_) trace_.log.push_back({first_round_ + rounds, from, to, m.tree + 1});
      }
      for (const Msg& m : arrived) deliver(m);
    }
    return rounds;
  }

 private:
  const CongestGraph& g_;
  const Partition& part_;
  ProtocolTrace& trace_;
  bool keep_log_;
  int first_round_;
  std::vector<std::deque<Msg>> queues_;
  std::set<int> busy_;
};

enum class Combine { kMax, kSum };

class Simulator {
 public:
  Simulator(const CongestGraph& g, const Partition& part, ProtocolTrace& trace, bool keep_log)
      : g_(g), part_(part), trace_(trace), keep_log_(keep_log) {}

  // Pipelined broadcast of payload[t] from each root to every leaf of its
  // tree. Returns per tree, per local leaf, the received vector.
  std::vector<std::vector<std::vector<double>>> broadcast(const std::vector<std::vector<double>>& payload,
                                                          StageRounds& stats) {
    std::vector<std::vector<std::vector<double>>> store(g_.trees.size());
    Engine engine(g_, part_, trace_, keep_log_, elapsed_);
    for (std::size_t t = 0; t < g_.trees.size(); ++t) {
      const CongestTree& tree = g_.trees[t];
      store[t].resize(tree.nodes.size());
      for (int c : tree.children[0]) {
        if (c < 0) continue;
        for (std::size_t k = 0; k < payload[t].size(); ++k)
          engine.send(static_cast<int>(t), 0, c, static_cast<int>(k), payload[t][k]);
      }
    }
    stats.rounds = engine.run(
        [&](const Msg& m) {
          const CongestTree& tree = g_.trees[m.tree];
          if (tree.is_leaf(m.to_local)) {
            auto& slot = store[m.tree][m.to_local];
            if (static_cast<int>(slot.size()) != m.index) throw std::logic_error("broadcast out of order");
            slot.push_back(m.value);
            return;
          }
          for (int c : tree.children[m.to_local])
            if (c >= 0) engine.send(m.tree, m.to_local, c, m.index, m.value);
        },
        &stats.messages);
    elapsed_ += stats.rounds;
    return store;
  }

  // Pipelined convergecast: contributing leaves (non-empty vectors) send
  // their values up; internal nodes combine left child first.
  std::vector<std::vector<double>> convergecast(const std::vector<std::vector<std::vector<double>>>& leaf_values,
                                                std::size_t width, Combine op, StageRounds& stats) {
    const std::size_t trees = g_.trees.size();
    std::vector<std::vector<double>> result(trees);
    std::vector<std::vector<std::uint8_t>> active(trees);
    std::vector<std::vector<std::array<std::vector<double>, 2>>> inbox(trees);
    std::vector<std::vector<std::size_t>> emitted(trees);
    Engine engine(g_, part_, trace_, keep_log_, elapsed_);
    for (std::size_t t = 0; t < trees; ++t) {
      const CongestTree& tree = g_.trees[t];
      active[t].assign(tree.nodes.size(), 0);
      inbox[t].resize(tree.nodes.size());
      emitted[t].assign(tree.nodes.size(), 0);
      for (int local = static_cast<int>(tree.nodes.size()) - 1; local >= 0; --local) {
        if (tree.is_leaf(local)) {
          active[t][local] = leaf_values[t][local].empty() ? 0 : 1;
        } else {
          for (int c : tree.children[local])
            if (c >= 0 && active[t][c]) active[t][local] = 1;
        }
      }
      for (int local : tree.leaves) {
        const auto& v = leaf_values[t][local];
        if (v.empty()) continue;
        if (v.size() != width) throw std::logic_error("convergecast width mismatch");
        for (std::size_t k = 0; k < width; ++k)
          engine.send(static_cast<int>(t), local, tree.parent[local], static_cast<int>(k), v[k]);
      }
    }
    stats.rounds = engine.run(
        [&](const Msg& m) {
          const CongestTree& tree = g_.trees[m.tree];
          const int p = m.to_local;
          const auto& kids = tree.children[p];
          const int slot = kids[0] == m.from_local ? 0 : 1;
          inbox[m.tree][p][slot].push_back(m.value);
          auto& next = emitted[m.tree][p];
          while (next < width) {
            bool ready = true;
            for (int s = 0; s < 2; ++s)
              if (kids[s] >= 0 && active[m.tree][kids[s]] && inbox[m.tree][p][s].size() <= next) ready = false;
            if (!ready) break;
            std::optional<double> acc;
            for (int s = 0; s < 2; ++s) {
              if (kids[s] < 0 || !active[m.tree][kids[s]]) continue;
              const double v = inbox[m.tree][p][s][next];
              if (!acc) acc = v;
              else acc = op == Combine::kMax ? std::max(*acc, v) : *acc + v;
            }
            if (p == 0) result[m.tree].push_back(*acc);
            else engine.send(m.tree, p, tree.parent[p], static_cast<int>(next), *acc);
            ++next;
          }
        },
        &stats.messages);
    elapsed_ += stats.rounds;
    return result;
  }

 private:
  const CongestGraph& g_;
  const Partition& part_;
  ProtocolTrace& trace_;
  bool keep_log_;
  int elapsed_ = 0;  // rounds used by earlier stages
};

Matrix row_of(const Matrix& h, std::size_t r) {
  Matrix out(1, h.cols());
  std::copy(h.row(r).begin(), h.row(r).end(), out.row(0).begin());
  return out;
}

struct HeadView {
  const Matrix* query;
  const Matrix* key;
  const Matrix* value;
  const Kappa* kappa;  // null for standard heads
};

HeadView view_head(const AttentionHead& head) {
  if (const auto* u = std::get_if<AttentionUnit>(&head)) return {&u->query, &u->key, &u->value, nullptr};
  if (const auto* h = std::get_if<HigherOrderUnit>(&head)) {
    if (h->order != 2) throw PreconditionError("congest simulation supports second-order heads only");
    return {&h->query, &h->keys.front(), &h->values.front(), nullptr};
  }
  const auto& gu = std::get<GraphAttentionUnit>(head);
  if (gu.base.order != 2) throw PreconditionError("congest simulation supports second-order graph heads only");
  return {&gu.base.query, &gu.base.keys.front(), &gu.base.values.front(), &gu.kappa};
}

int ceil_log2_int(int n) {
  int k = 0;
  while ((1 << k) < n) ++k;
  return k;
}

}  // namespace

int simulation_graph_size(const TransformerModel& model, int n) { return model.append_end ? n + 1 : n; }

long long round_bound(const TransformerModel& model, int n) {
  return static_cast<long long>(kRoundBoundConstant) * static_cast<long long>(model.max_heads()) *
         static_cast<long long>(model.depth()) *
         (static_cast<long long>(model.max_embed_dim()) + ceil_log2_int(n));
}

SimulationResult simulate_transformer(const CongestGraph& g, const TransformerModel& model, const Matrix& x,
                                      const SimulationOptions& options) {
  validate_model(model);
  const Matrix interior = with_end_row(model, x);
  const int n = static_cast<int>(interior.rows());
  if (g.n != n) {
    throw PreconditionError("congest simulation: graph has " + std::to_string(g.n) + " roots but the model sees " +
                            std::to_string(n) + " elements");
  }
  std::optional<Matrix> adjacency;
  if (model.adjacency_input) adjacency = interior_adjacency(model, x);

  SimulationResult res;
  ProtocolTrace& trace = res.trace;
  trace.graph_n = n;
  const Precision widest = model.widest_format();
  trace.payload_bits = widest ? widest->total_bits() : 64;
  const Partition part = alice_bob_partition(g);
  trace.cut_size = cut_size(g, part);
  Simulator sim(g, part, trace, options.keep_log);
  const int loglog = std::max(1, ceil_log2_int(std::max(2, ceil_log2_int(n))));

  // Each root holds its own row; MLPs run locally.
  Matrix h = interior;
  for (std::size_t layer = 0; layer < model.mlps.size(); ++layer) {
    Matrix mlp_out(n, model.mlps[layer].out_dim);
    for (int i = 0; i < n; ++i) {
      const Matrix row = apply_mlp(model.mlps[layer], row_of(h, i));
      std::copy(row.row(0).begin(), row.row(0).end(), mlp_out.row(i).begin());
    }
    if (layer == model.layers.size()) {
      h = std::move(mlp_out);
      break;
    }
    LayerRounds lr;
    lr.layer = static_cast<int>(layer);
    const auto& heads = model.layers[layer].heads;
    Matrix attn(n, head_out_dim(heads.front()));
    for (std::size_t hd = 0; hd < heads.size(); ++hd) {
      const HeadView hv = view_head(heads[hd]);
      const Matrix xq = matmul(mlp_out, *hv.query);
      const Matrix xk = matmul(mlp_out, *hv.key);
      const Matrix xv = matmul(mlp_out, *hv.value);
      const std::size_t m = xq.cols(), dv = xv.cols();

      // Stage 1-2: u_i sends (Q y_i, K y_i, V y_i) down B_i.
      std::vector<std::vector<double>> payload(n);
      for (int i = 0; i < n; ++i) {
        auto& p = payload[i];
        p.insert(p.end(), xq.row(i).begin(), xq.row(i).end());
        p.insert(p.end(), xk.row(i).begin(), xk.row(i).end());
        p.insert(p.end(), xv.row(i).begin(), xv.row(i).end());
      }
      auto stage = [&](const char* name) {
        StageRounds s;
        s.layer = static_cast<int>(layer);
        s.head = static_cast<int>(hd);
        s.stage = name;
        return s;
      };
      StageRounds s_bcast = stage("broadcast");
      const auto store = sim.broadcast(payload, s_bcast);

      // Stage 3: leaf v_{a,b} scores cell (a, b) from q_a (via B_a) and
      // k_b (via B_b). Only row leaves of B_a contribute to its sums.
      std::vector<std::vector<std::vector<double>>> scores(n);
      for (int t = 0; t < n; ++t) {
        const CongestTree& tree = g.trees[t];
        scores[t].resize(tree.nodes.size());
        for (int local : tree.leaves) {
          const auto [a, b] = tree.leaf_pair[local];
          if (a != t + 1) continue;
          const CongestTree& col = g.trees[b - 1];
          const auto& from_row = store[t][local];
          const auto& from_col = store[b - 1][col.local_of_leaf[static_cast<std::size_t>(a - 1) * n + (b - 1)]];
          double sc = dot(std::span<const double>(from_row.data(), m), std::span<const double>(from_col.data() + m, m));
          if (hv.kappa) {
            const std::uint8_t bits[2] = {static_cast<std::uint8_t>((*adjacency)(a - 1, b - 1) != 0.0),
                                          static_cast<std::uint8_t>((*adjacency)(b - 1, a - 1) != 0.0)};
            sc = hv.kappa->fn(bits, sc);
          }
          if (!std::isfinite(sc)) throw PreconditionError("congest simulation: non-finite score");
          scores[t][local] = {sc};
        }
      }
      StageRounds s_max = stage("max_up");
      const auto maxima = sim.convergecast(scores, 1, Combine::kMax, s_max);
      std::vector<std::vector<double>> max_payload(n);
      for (int t = 0; t < n; ++t) max_payload[t] = {maxima[t][0]};
      StageRounds s_down = stage("max_down");
      const auto max_store = sim.broadcast(max_payload, s_down);

      // Stage 4-5: (alpha, alpha V y_b) summed up B_a.
      std::vector<std::vector<std::vector<double>>> sums(n);
      for (int t = 0; t < n; ++t) {
        const CongestTree& tree = g.trees[t];
        sums[t].resize(tree.nodes.size());
        for (int local : tree.leaves) {
          if (scores[t][local].empty()) continue;
          const auto [a, b] = tree.leaf_pair[local];
          const CongestTree& col = g.trees[b - 1];
          const auto& from_col = store[b - 1][col.local_of_leaf[static_cast<std::size_t>(a - 1) * n + (b - 1)]];
          const double alpha = std::exp(scores[t][local][0] - max_store[t][local][0]);
          auto& out = sums[t][local];
          out.push_back(alpha);
          for (std::size_t k = 0; k < dv; ++k) out.push_back(alpha * from_col[2 * m + k]);
        }
      }
      StageRounds s_sum = stage("sum_up");
      const auto totals = sim.convergecast(sums, dv + 1, Combine::kSum, s_sum);
      for (int i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dv; ++k) attn(i, k) += totals[i][k + 1] / totals[i][0];

      for (StageRounds* s : {&s_bcast, &s_max, &s_down, &s_sum}) {
        lr.rounds += s->rounds;
        lr.messages += s->messages;
        trace.stages.push_back(*s);
      }
      trace.normalizer_bits_analytic += static_cast<long long>(n) * trace.payload_bits * loglog;
    }
    trace.rounds += lr.rounds;
    trace.messages += lr.messages;
    trace.layers.push_back(lr);
    res.attention_outputs.push_back(attn);
    h = std::move(attn);
  }
  trace.bits_total = trace.messages * trace.payload_bits;
  trace.cut_bits = trace.cut_messages * trace.payload_bits;
  if (model.append_end) {
    Matrix trimmed(h.rows() - 1, h.cols());
    for (std::size_t r = 0; r + 1 < h.rows(); ++r)
      std::copy(h.row(r).begin(), h.row(r).end(), trimmed.row(r).begin());
    h = std::move(trimmed);
  }
  res.output = std::move(h);
  return res;
}

SimulationResult simulate_transformer(const TransformerModel& model, const Matrix& x,
                                      const SimulationOptions& options) {
  const CongestGraph g = build_congest_graph(simulation_graph_size(model, static_cast<int>(x.rows())));
  return simulate_transformer(g, model, x, options);
}

Json trace_to_json(const ProtocolTrace& trace, const std::string& model_tag) {
  Json layers = Json::array();
  for (const auto& l : trace.layers) layers.push_back({{"layer", l.layer}, {"rounds", l.rounds}, {"messages", l.messages}});
  Json stages = Json::array();
  for (const auto& s : trace.stages) {
    stages.push_back({{"layer", s.layer}, {"head", s.head}, {"stage", s.stage}, {"rounds", s.rounds},
                      {"messages", s.messages}});
  }
  Json j{{"N", trace.graph_n},
         {"model", model_tag},
         {"payload_bits", trace.payload_bits},
         {"rounds", trace.rounds},
         {"messages", trace.messages},
         {"bits_total", trace.bits_total},
         {"cut_size", trace.cut_size},
         {"cut_messages", trace.cut_messages},
         {"cut_bits", trace.cut_bits},
         {"normalizer_bits_analytic", trace.normalizer_bits_analytic},
         {"max_edge_load", trace.max_edge_load},
         {"layers", layers},
         {"stages", stages}};
  if (!trace.log.empty()) {
    Json log = Json::array();
    for (const auto& r : trace.log) log.push_back({r.round, r.from, r.to, r.tree});
    j["log"] = log;
  }
  return j;
}

std::string trace_csv_header() { return "model,N,payload_bits,rounds,messages,bits_total,cut_size,cut_bits"; }

std::string trace_csv_row(const ProtocolTrace& t, const std::string& model_tag) {
  std::ostringstream os;
  os << model_tag << ',' << t.graph_n << ',' << t.payload_bits << ',' << t.rounds << ',' << t.messages << ','
     << t.bits_total << ',' << t.cut_size << ',' << t.cut_bits;
  return os.str();
}

}  // namespace attnrep
