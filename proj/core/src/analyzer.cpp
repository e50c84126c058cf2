#include "qkdlab/analyzer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "qkdlab/rng.hpp"

namespace qkdlab {

namespace {

std::vector<std::vector<int>> adjacency_of(int n, const std::vector<NodePair>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

std::vector<int> component_labels(int n, const std::vector<std::vector<int>>& adj,
                                  int& count) {
  std::vector<int> label(n, -1);
  count = 0;
  for (int s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    label[s] = count;
    std::deque<int> q{s};
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (int w : adj[v])
        if (label[w] < 0) {
          label[w] = count;
          q.push_back(w);
        }
    }
    ++count;
  }
  return label;
}

/// Dinic max-flow on unit-ish capacity graphs, with an optional cutoff so a
/// search can stop once it cannot improve the current best.
class MaxFlow {
 public:
  explicit MaxFlow(int n) : head_(n, -1) {}

  void add_edge(int u, int v, int cap) {
    edges_.push_back({v, head_[u], cap});
    head_[u] = static_cast<int>(edges_.size()) - 1;
    edges_.push_back({u, head_[v], 0});
    head_[v] = static_cast<int>(edges_.size()) - 1;
  }

  int solve(int s, int t, int cutoff = std::numeric_limits<int>::max()) {
    int flow = 0;
    while (flow < cutoff && bfs(s, t)) {
      iter_ = head_;
      while (flow < cutoff) {
        int f = dfs(s, t, cutoff - flow);
        if (f <= 0) break;
        flow += f;
      }
    }
    return flow;
  }

 private:
  struct Edge {
    int to;
    int next;
    int cap;
  };

  bool bfs(int s, int t) {
    level_.assign(head_.size(), -1);
    std::deque<int> q{s};
    level_[s] = 0;
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (int e = head_[v]; e != -1; e = edges_[e].next) {
        if (edges_[e].cap > 0 && level_[edges_[e].to] < 0) {
          level_[edges_[e].to] = level_[v] + 1;
          q.push_back(edges_[e].to);
        }
      }
    }
    return level_[t] >= 0;
  }

  int dfs(int v, int t, int limit) {
    if (v == t) return limit;
    for (int& e = iter_[v]; e != -1; e = edges_[e].next) {
      Edge& ed = edges_[e];
      if (ed.cap > 0 && level_[ed.to] == level_[v] + 1) {
        int f = dfs(ed.to, t, std::min(limit, ed.cap));
        if (f > 0) {
          ed.cap -= f;
          edges_[e ^ 1].cap += f;
          return f;
        }
      }
    }
    return 0;
  }

  std::vector<Edge> edges_;
  std::vector<int> head_;
  std::vector<int> level_;
  std::vector<int> iter_;
};

}  // namespace

std::vector<double> laplacian_eigenvalues(int n, const std::vector<NodePair>& edges) {
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [u, v] : edges) {
    lap(u, u) += 1.0;
    lap(v, v) += 1.0;
    lap(u, v) -= 1.0;
    lap(v, u) -= 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap,
                                                        Eigen::EigenvaluesOnly);
  std::vector<double> eigs(solver.eigenvalues().data(),
                           solver.eigenvalues().data() + n);
  std::sort(eigs.begin(), eigs.end());
  return eigs;
}

double algebraic_connectivity(int n, const std::vector<NodePair>& edges) {
  if (n < 2) return 0.0;
  std::vector<double> eigs = laplacian_eigenvalues(n, edges);
  double lambda2 = eigs[1];
  return lambda2 < 1e-9 ? 0.0 : lambda2;
}

int edge_connectivity(int n, const std::vector<NodePair>& edges) {
  if (n < 2) return 0;
  auto adj = adjacency_of(n, edges);
  int comps = 0;
  component_labels(n, adj, comps);
  if (comps > 1) return 0;

  // lambda = min over t != s of maxflow(s, t) for a fixed s: some min cut
  // separates s from at least one vertex.
  int best = std::numeric_limits<int>::max();
  for (int t = 1; t < n; ++t) {
    MaxFlow mf(n);
    for (const auto& [u, v] : edges) {
      mf.add_edge(u, v, 1);
      mf.add_edge(v, u, 1);
    }
    best = std::min(best, mf.solve(0, t, best));
  }
  return best;
}

int node_connectivity(int n, const std::vector<NodePair>& edges) {
  if (n < 2) return 0;
  auto adj = adjacency_of(n, edges);
  int comps = 0;
  component_labels(n, adj, comps);
  if (comps > 1) return 0;
  const std::size_t complete = static_cast<std::size_t>(n) * (n - 1) / 2;
  if (edges.size() == complete) return n - 1;  // convention for K_n

  std::vector<std::vector<bool>> is_adj(n, std::vector<bool>(n, false));
  for (const auto& [u, v] : edges) {
    is_adj[u][v] = true;
    is_adj[v][u] = true;
  }

  // Vertex cuts via node splitting: v_in = 2v, v_out = 2v+1.
  auto vertex_flow = [&](int s, int t, int cutoff) {
    MaxFlow mf(2 * n);
    const int inf = n;
    for (int v = 0; v < n; ++v)
      mf.add_edge(2 * v, 2 * v + 1, (v == s || v == t) ? inf : 1);
    for (const auto& [u, v] : edges) {
      mf.add_edge(2 * u + 1, 2 * v, inf);
      mf.add_edge(2 * v + 1, 2 * u, inf);
    }
    return mf.solve(2 * s + 1, 2 * t, cutoff);
  };

  // A minimum cut either avoids a fixed min-degree vertex v0 or one of its
  // neighbors, so scanning sources {v0} ∪ N(v0) against their non-neighbors
  // is exhaustive.
  int v0 = 0;
  for (int v = 1; v < n; ++v)
    if (adj[v].size() < adj[v0].size()) v0 = v;
  std::vector<int> sources{v0};
  sources.insert(sources.end(), adj[v0].begin(), adj[v0].end());

  int best = n - 1;
  for (int s : sources)
    for (int t = 0; t < n; ++t) {
      if (t == s || is_adj[s][t]) continue;
      best = std::min(best, vertex_flow(s, t, best));
    }
  return best;
}

double average_clustering(int n, const std::vector<NodePair>& edges) {
  if (n == 0) return 0.0;
  auto adj = adjacency_of(n, edges);
  std::vector<std::vector<bool>> is_adj(n, std::vector<bool>(n, false));
  for (const auto& [u, v] : edges) {
    is_adj[u][v] = true;
    is_adj[v][u] = true;
  }
  double total = 0.0;
  for (int v = 0; v < n; ++v) {
    const std::size_t k = adj[v].size();
    if (k < 2) continue;
    long triangles = 0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b)
        if (is_adj[adj[v][a]][adj[v][b]]) ++triangles;
    total += 2.0 * static_cast<double>(triangles) / (static_cast<double>(k) * (k - 1));
  }
  return total / n;
}

double average_path_length(int n, const std::vector<NodePair>& edges) {
  if (n == 0) return 0.0;
  auto adj = adjacency_of(n, edges);
  int comps = 0;
  std::vector<int> label = component_labels(n, adj, comps);
  std::vector<int> size(comps, 0);
  for (int v = 0; v < n; ++v) ++size[label[v]];
  int big = 0;
  for (int c = 1; c < comps; ++c)
    if (size[c] > size[big]) big = c;
  if (size[big] < 2) return 0.0;

  double total = 0.0;
  long pairs = 0;
  std::vector<int> dist(n);
  for (int s = 0; s < n; ++s) {
    if (label[s] != big) continue;
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    std::deque<int> q{s};
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (int w : adj[v])
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push_back(w);
        }
    }
    for (int t = 0; t < n; ++t)
      if (t != s && label[t] == big) {
        total += dist[t];
        ++pairs;
      }
  }
  return total / static_cast<double>(pairs);
}

NetworkReport analyze(const QkdNetwork& net) {
  const NetworkTopology& t = net.topology;
  const int n = t.num_nodes();
  if (n == 0) throw std::invalid_argument("analyze: empty graph");

  std::vector<NodePair> edges;
  edges.reserve(t.links.size());
  for (const Link& l : t.links) edges.push_back({l.u, l.v});

  NetworkReport r;
  r.num_nodes = n;
  r.num_edges = static_cast<int>(edges.size());
  r.avg_degree = 2.0 * static_cast<double>(edges.size()) / n;

  double rate_sum = 0.0, qber_sum = 0.0, dist_sum = 0.0;
  int keyed = 0;
  for (std::size_t i = 0; i < t.links.size(); ++i) {
    const ChannelMetrics& m = net.link_metrics[i];
    rate_sum += m.secure_key_rate_bps;
    dist_sum += t.links[i].distance_km;
    r.max_distance_km = std::max(r.max_distance_km, t.links[i].distance_km);
    if (!m.no_key) {
      qber_sum += m.qber;
      ++keyed;
    }
  }
  r.total_key_rate_bps = rate_sum;
  r.avg_key_rate_bps = edges.empty() ? 0.0 : rate_sum / static_cast<double>(edges.size());
  r.avg_qber = keyed > 0 ? qber_sum / keyed : 0.0;
  r.avg_distance_km = edges.empty() ? 0.0 : dist_sum / static_cast<double>(edges.size());

  r.edge_connectivity = edge_connectivity(n, edges);
  r.node_connectivity = node_connectivity(n, edges);
  r.algebraic_connectivity = algebraic_connectivity(n, edges);
  r.avg_clustering = average_clustering(n, edges);
  r.avg_path_length = average_path_length(n, edges);
  return r;
}

std::string report_to_json_string(const NetworkReport& r) {
  nlohmann::json j;
  j["table1"] = {
      {"Num. Edges", r.num_edges},
      {"Avg. Degree", r.avg_degree},
      {"Key Rate (bits/s)", r.avg_key_rate_bps},
      {"Avg. QBER", r.avg_qber},
      {"Max. Dist. (km)", r.max_distance_km},
      {"Edge Conn.", r.edge_connectivity},
      {"Node Conn.", r.node_connectivity},
      {"Alg. Conn.", r.algebraic_connectivity},
  };
  j["details"] = {
      {"num_nodes", r.num_nodes},
      {"total_key_rate_bps", r.total_key_rate_bps},
      {"avg_distance_km", r.avg_distance_km},
      {"avg_clustering", r.avg_clustering},
      {"avg_path_length", r.avg_path_length},
  };
  return j.dump(2) + "\n";
}

void save_report_json(const std::string& path, const NetworkReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << report_to_json_string(r);
}

const char* attack_strategy_name(AttackStrategy s) {
  switch (s) {
    case AttackStrategy::random: return "random";
    case AttackStrategy::degree_targeted: return "degree_targeted";
    case AttackStrategy::betweenness_targeted: return "betweenness_targeted";
    case AttackStrategy::link_targeted: return "link_targeted";
  }
  return "unknown";
}

AttackStrategy attack_strategy_from_name(const std::string& name) {
  if (name == "random") return AttackStrategy::random;
  if (name == "degree_targeted") return AttackStrategy::degree_targeted;
  if (name == "betweenness_targeted") return AttackStrategy::betweenness_targeted;
  if (name == "link_targeted") return AttackStrategy::link_targeted;
  throw std::invalid_argument("unknown attack strategy: " + name);
}

namespace {

/// Edge betweenness (Brandes variant accumulating on edges).
std::vector<double> edge_betweenness(int n, const std::vector<NodePair>& edges) {
  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, edge idx)
  for (std::size_t e = 0; e < edges.size(); ++e) {
    adj[edges[e].first].push_back({edges[e].second, static_cast<int>(e)});
    adj[edges[e].second].push_back({edges[e].first, static_cast<int>(e)});
  }
  std::vector<double> eb(edges.size(), 0.0);
  std::vector<int> dist(n), sigma(n);
  std::vector<double> delta(n);
  std::vector<std::vector<std::pair<int, int>>> preds(n);  // (pred, edge idx)
  std::vector<int> order;

  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(sigma.begin(), sigma.end(), 0);
    std::fill(delta.begin(), delta.end(), 0.0);
    for (auto& p : preds) p.clear();
    order.clear();
    dist[s] = 0;
    sigma[s] = 1;
    std::deque<int> q{s};
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      order.push_back(v);
      for (const auto& [w, e] : adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back({v, e});
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      int w = *it;
      for (const auto& [v, e] : preds[w]) {
        double c = (static_cast<double>(sigma[v]) / sigma[w]) * (1.0 + delta[w]);
        eb[e] += c;
        delta[v] += c;
      }
    }
  }
  return eb;
}

double largest_component_fraction(int original_n, const std::vector<bool>& alive,
                                  const std::vector<NodePair>& edges) {
  const int n = original_n;
  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<bool> seen(n, false);
  int best = 0;
  for (int s = 0; s < n; ++s) {
    if (!alive[s] || seen[s]) continue;
    int size = 0;
    std::deque<int> q{s};
    seen[s] = true;
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      ++size;
      for (int w : adj[v])
        if (alive[w] && !seen[w]) {
          seen[w] = true;
          q.push_back(w);
        }
    }
    best = std::max(best, size);
  }
  return static_cast<double>(best) / n;
}

}  // namespace

std::vector<AttackStep> attack_simulation(const QkdNetwork& net, AttackStrategy strategy,
                                          double removal_fraction, std::uint64_t seed) {
  if (!(removal_fraction >= 0.0 && removal_fraction < 1.0))
    throw std::invalid_argument("attack: removal_fraction must lie in [0,1)");
  const NetworkTopology& t = net.topology;
  const int n = t.num_nodes();

  std::vector<bool> node_alive(n, true);
  std::vector<bool> link_alive(t.links.size(), true);

  auto surviving_edges = [&]() {
    std::vector<NodePair> alive;
    for (std::size_t i = 0; i < t.links.size(); ++i)
      if (link_alive[i] && node_alive[t.links[i].u] && node_alive[t.links[i].v])
        alive.push_back({t.links[i].u, t.links[i].v});
    return alive;
  };
  auto surviving_rate = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < t.links.size(); ++i)
      if (link_alive[i] && node_alive[t.links[i].u] && node_alive[t.links[i].v])
        total += net.link_metrics[i].secure_key_rate_bps;
    return total;
  };

  std::vector<AttackStep> curve;
  curve.push_back({0, -1, largest_component_fraction(n, node_alive, surviving_edges()),
                   surviving_rate()});

  const bool link_attack = strategy == AttackStrategy::link_targeted;
  const int steps = link_attack
                        ? static_cast<int>(removal_fraction * static_cast<double>(t.links.size()))
                        : static_cast<int>(removal_fraction * static_cast<double>(n));

  Rng rng(Rng::mix(seed, 0xA77ACULL));
  std::vector<int> random_order(n);
  std::iota(random_order.begin(), random_order.end(), 0);
  rng.shuffle(random_order);
  std::size_t random_pos = 0;

  for (int step = 1; step <= steps; ++step) {
    int victim = -1;
    std::vector<NodePair> edges = surviving_edges();
    switch (strategy) {
      case AttackStrategy::random:
        victim = random_order[random_pos++];
        node_alive[victim] = false;
        break;
      case AttackStrategy::degree_targeted: {
        std::vector<int> deg(n, 0);
        for (const auto& [u, v] : edges) {
          ++deg[u];
          ++deg[v];
        }
        int best = -1;
        for (int v = 0; v < n; ++v)
          if (node_alive[v] && (best < 0 || deg[v] > deg[best])) best = v;
        victim = best;
        node_alive[victim] = false;
        break;
      }
      case AttackStrategy::betweenness_targeted: {
        // centralities recomputed on the compacted surviving graph
        std::vector<int> ids;
        std::vector<int> remap(n, -1);
        for (int v = 0; v < n; ++v)
          if (node_alive[v]) {
            remap[v] = static_cast<int>(ids.size());
            ids.push_back(v);
          }
        std::vector<NodePair> compact;
        for (const auto& [u, v] : edges) compact.push_back({remap[u], remap[v]});
        std::vector<double> bc =
            betweenness_centrality(static_cast<int>(ids.size()), compact);
        int best = 0;
        for (std::size_t i = 1; i < bc.size(); ++i)
          if (bc[i] > bc[best]) best = static_cast<int>(i);
        victim = ids[best];
        node_alive[victim] = false;
        break;
      }
      case AttackStrategy::link_targeted: {
        std::vector<int> live_idx;
        std::vector<NodePair> live_edges;
        for (std::size_t i = 0; i < t.links.size(); ++i)
          if (link_alive[i] && node_alive[t.links[i].u] && node_alive[t.links[i].v]) {
            live_idx.push_back(static_cast<int>(i));
            live_edges.push_back({t.links[i].u, t.links[i].v});
          }
        if (live_edges.empty()) {
          victim = -1;
          break;
        }
        std::vector<double> eb = edge_betweenness(n, live_edges);
        int best = 0;
        for (std::size_t i = 1; i < eb.size(); ++i)
          if (eb[i] > eb[best]) best = static_cast<int>(i);
        victim = live_idx[best];
        link_alive[victim] = false;
        break;
      }
    }
    curve.push_back({step, victim,
                     largest_component_fraction(n, node_alive, surviving_edges()),
                     surviving_rate()});
  }
  return curve;
}

void save_attack_csv(const std::string& path, const std::vector<AttackStep>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "step,removed_id,largest_component_fraction,surviving_key_rate_bps\n";
  char line[128];
  for (const AttackStep& s : curve) {
    std::snprintf(line, sizeof(line), "%d,%d,%.9g,%.9g\n", s.step, s.removed_id,
                  s.largest_component_fraction, s.surviving_key_rate_bps);
    out << line;
  }
}

}  // namespace qkdlab
