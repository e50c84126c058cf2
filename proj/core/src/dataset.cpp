#include "qkdlab/dataset.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "qkdlab/rng.hpp"

namespace qkdlab {

namespace {

std::uint64_t pair_key(int u, int v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
         static_cast<std::uint32_t>(v);
}

NodePair ordered(int u, int v) { return u < v ? NodePair{u, v} : NodePair{v, u}; }

}  // namespace

int GraphSample::und_row_of(int u, int v) const {
  auto it = edge_row_lookup.find(pair_key(u, v));
  return it == edge_row_lookup.end() ? -1 : it->second;
}

std::vector<double> betweenness_centrality(int n, const std::vector<NodePair>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }

  // Brandes accumulation; each unordered pair {s,t} contributes twice, so the
  // raw totals are halved before normalization.
  std::vector<double> bc(n, 0.0);
  std::vector<int> dist(n), sigma(n), order;
  std::vector<std::vector<int>> preds(n);
  std::vector<double> delta(n);
  order.reserve(n);

  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(sigma.begin(), sigma.end(), 0);
    std::fill(delta.begin(), delta.end(), 0.0);
    for (auto& p : preds) p.clear();
    order.clear();

    dist[s] = 0;
    sigma[s] = 1;
    std::deque<int> queue{s};
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      for (int w : adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      int w = *it;
      for (int v : preds[w])
        delta[v] += (static_cast<double>(sigma[v]) / sigma[w]) * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }

  if (n < 3) return std::vector<double>(n, 0.0);
  const double norm = (static_cast<double>(n) - 1.0) * (n - 2.0) / 2.0;
  for (double& b : bc) b = std::clamp(b / 2.0 / norm, 0.0, 1.0);
  return bc;
}

GraphSample build_sample(const QkdNetwork& net) {
  const NetworkTopology& t = net.topology;
  const int n = t.num_nodes();

  GraphSample s;
  s.num_nodes = n;
  s.und_edges.reserve(t.links.size());
  for (const Link& l : t.links) s.und_edges.push_back({l.u, l.v});
  std::sort(s.und_edges.begin(), s.und_edges.end());
  s.positive_pairs = s.und_edges;

  for (std::size_t i = 0; i < s.und_edges.size(); ++i)
    s.edge_row_lookup[pair_key(s.und_edges[i].first, s.und_edges[i].second)] =
        static_cast<int>(i);

  std::vector<int> deg = t.degrees();
  std::vector<double> bc = betweenness_centrality(n, s.und_edges);
  s.node_features.resize(n, kNodeFeatureDim);
  for (int i = 0; i < n; ++i) {
    s.node_features(i, 0) = t.nodes[i].x;
    s.node_features(i, 1) = t.nodes[i].y;
    s.node_features(i, 2) = deg[i];
    s.node_features(i, 3) = bc[i];
  }

  const std::size_t m = s.und_edges.size();
  double rate_min = 0.0, rate_max = 0.0;
  if (m > 0) {
    rate_min = rate_max = net.link_metrics[0].secure_key_rate_bps;
    for (const ChannelMetrics& cm : net.link_metrics) {
      rate_min = std::min(rate_min, cm.secure_key_rate_bps);
      rate_max = std::max(rate_max, cm.secure_key_rate_bps);
    }
  }
  const double rate_span = rate_max - rate_min;

  s.und_edge_features.resize(m, kEdgeFeatureDim);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& [u, v] = s.und_edges[i];
    int li = t.link_index(u, v);
    const ChannelMetrics& cm = net.link_metrics[li];
    double rate_norm =
        rate_span > 0.0 ? (cm.secure_key_rate_bps - rate_min) / rate_span : 0.0;
    s.und_edge_features(i, 0) = cm.distance_km;
    s.und_edge_features(i, 1) = cm.qber;
    s.und_edge_features(i, 2) = rate_norm;
    s.und_edge_features(i, 3) = cm.loss_db;
    s.und_edge_features(i, 4) = cm.medium == Medium::free_space ? 1.0 : 0.0;
  }

  s.edge_index.reserve(2 * m);
  s.edge_features.resize(2 * m, kEdgeFeatureDim);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& [u, v] = s.und_edges[i];
    s.edge_index.push_back({u, v});
    s.edge_index.push_back({v, u});
    s.edge_features.row(2 * i) = s.und_edge_features.row(i);
    s.edge_features.row(2 * i + 1) = s.und_edge_features.row(i);
  }
  return s;
}

std::size_t count_non_edges(const GraphSample& sample) {
  std::size_t total = static_cast<std::size_t>(sample.num_nodes) *
                      (sample.num_nodes - 1) / 2;
  return total - sample.und_edges.size();
}

std::vector<NodePair> sample_negatives(const GraphSample& sample, std::size_t count,
                                       std::uint64_t seed,
                                       const std::vector<NodePair>& exclusions) {
  std::vector<NodePair> pool;
  std::unordered_map<std::uint64_t, bool> excluded;
  for (const auto& [u, v] : exclusions) excluded[pair_key(u, v)] = true;
  for (int u = 0; u < sample.num_nodes; ++u) {
    for (int v = u + 1; v < sample.num_nodes; ++v) {
      if (sample.is_edge(u, v)) continue;
      if (excluded.count(pair_key(u, v))) continue;
      pool.push_back({u, v});
    }
  }
  if (count > pool.size())
    throw std::invalid_argument(
        "sample_negatives: requested " + std::to_string(count) + " but only " +
        std::to_string(pool.size()) + " non-edges are available");
  Rng rng(Rng::mix(seed, 0x4e65ULL));
  rng.shuffle(pool);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<FoldSplit> make_folds(const GraphSample& sample, int k_folds,
                                  std::uint64_t seed) {
  if (k_folds < 2) throw std::invalid_argument("make_folds: K must be >= 2");
  const std::size_t p = sample.positive_pairs.size();
  if (p < static_cast<std::size_t>(k_folds))
    throw std::invalid_argument("make_folds: fewer positives than folds");

  std::vector<NodePair> positives = sample.positive_pairs;
  Rng rng(Rng::mix(seed, 0xF01DULL));
  rng.shuffle(positives);

  const std::size_t base = p / k_folds;
  const std::size_t rem = p % k_folds;

  std::vector<FoldSplit> folds;
  folds.reserve(k_folds);
  std::size_t start = 0;
  for (int f = 0; f < k_folds; ++f) {
    std::size_t size = base + (static_cast<std::size_t>(f) < rem ? 1 : 0);
    FoldSplit split;
    split.fold_id = f;
    split.val_positive.assign(positives.begin() + start, positives.begin() + start + size);
    split.train_positive.assign(positives.begin(), positives.begin() + start);
    split.train_positive.insert(split.train_positive.end(),
                                positives.begin() + start + size, positives.end());
    start += size;

    // One draw of |positives| distinct non-edges per fold keeps train and
    // validation negatives disjoint.
    std::vector<NodePair> negatives =
        sample_negatives(sample, p, Rng::mix(seed, 0x4e47ULL, f));
    Rng neg_rng(Rng::mix(seed, 0x5e6dULL, f));
    neg_rng.shuffle(negatives);
    split.train_negative.assign(negatives.begin(),
                                negatives.begin() + split.train_positive.size());
    split.val_negative.assign(negatives.begin() + split.train_positive.size(),
                              negatives.begin() + p);
    split.message_edges = split.train_positive;
    folds.push_back(std::move(split));
  }
  return folds;
}

std::string sample_to_json_string(const GraphSample& sample) {
  nlohmann::json j;
  j["num_nodes"] = sample.num_nodes;
  auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["node_features"] = matrix(sample.node_features);
  j["edge_features"] = matrix(sample.edge_features);
  nlohmann::json ei = nlohmann::json::array();
  for (const auto& [u, v] : sample.edge_index) ei.push_back({u, v});
  j["edge_index"] = std::move(ei);
  return j.dump(2) + "\n";
}

void save_sample_json(const std::string& path, const GraphSample& sample) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << sample_to_json_string(sample);
}

}  // namespace qkdlab
