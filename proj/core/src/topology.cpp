#include "qkdlab/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
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

}  // namespace

int TopologyConfig::resolved_clusters() const {
  if (num_clusters > 0) return std::min(num_clusters, num_nodes);
  return std::min(num_nodes, std::max(10, num_nodes / 5));
}

void TopologyConfig::validate() const {
  if (num_nodes < 1) throw std::invalid_argument("topology: num_nodes must be >= 1");
  if (num_clusters < 0) throw std::invalid_argument("topology: num_clusters must be >= 0");
  if (!(center_covariance > 0.0) || !std::isfinite(center_covariance))
    throw std::invalid_argument("topology: center_covariance must be positive and finite");
  if (!(node_covariance > 0.0) || !std::isfinite(node_covariance))
    throw std::invalid_argument("topology: node_covariance must be positive and finite");
  if (!(max_link_distance_units > 0.0) || !std::isfinite(max_link_distance_units))
    throw std::invalid_argument("topology: max_link_distance_units must be positive");
  if (!(unit_to_km > 0.0) || !std::isfinite(unit_to_km))
    throw std::invalid_argument("topology: unit_to_km must be positive");
}

bool NetworkTopology::has_link(int u, int v) const {
  return link_index(u, v) >= 0;
}

int NetworkTopology::link_index(int u, int v) const {
  auto it = link_lookup_.find(pair_key(u, v));
  return it == link_lookup_.end() ? -1 : it->second;
}

std::vector<int> NetworkTopology::degrees() const {
  std::vector<int> deg(nodes.size(), 0);
  for (const Link& l : links) {
    ++deg[l.u];
    ++deg[l.v];
  }
  return deg;
}

std::vector<std::vector<int>> NetworkTopology::adjacency() const {
  std::vector<std::vector<int>> adj(nodes.size());
  for (const Link& l : links) {
    adj[l.u].push_back(l.v);
    adj[l.v].push_back(l.u);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

void NetworkTopology::rebuild_link_index() {
  link_lookup_.clear();
  link_lookup_.reserve(links.size());
  for (std::size_t i = 0; i < links.size(); ++i)
    link_lookup_[pair_key(links[i].u, links[i].v)] = static_cast<int>(i);
}

NetworkTopology generate_topology(const TopologyConfig& cfg) {
  cfg.validate();

  const int n = cfg.num_nodes;
  const int k = cfg.resolved_clusters();
  Rng rng(cfg.seed);

  std::vector<std::pair<double, double>> centers(k);
  const double center_std = std::sqrt(cfg.center_covariance);
  for (int c = 0; c < k; ++c) {
    double x = rng.normal(0.0, center_std);
    double y = rng.normal(0.0, center_std);
    centers[c] = {x, y};
  }

  NetworkTopology t;
  t.config = cfg;
  t.nodes.reserve(n);
  const double node_std = std::sqrt(cfg.node_covariance);
  for (int i = 0; i < n; ++i) {
    const auto& c = centers[i % k];  // round-robin cluster assignment
    double x = c.first + rng.normal(0.0, node_std);
    double y = c.second + rng.normal(0.0, node_std);
    t.nodes.push_back(Node{i, x, y});
  }

  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      double dx = t.nodes[u].x - t.nodes[v].x;
      double dy = t.nodes[u].y - t.nodes[v].y;
      double dist_units = std::hypot(dx, dy);
      if (dist_units <= cfg.max_link_distance_units)
        t.links.push_back(Link{u, v, dist_units * cfg.unit_to_km});
    }
  }
  t.rebuild_link_index();
  return t;
}

double pairwise_distance(const NetworkTopology& t, int u, int v) {
  const int n = t.num_nodes();
  if (u < 0 || u >= n || v < 0 || v >= n)
    throw std::out_of_range("pairwise_distance: unknown node id");
  double dx = t.nodes[u].x - t.nodes[v].x;
  double dy = t.nodes[u].y - t.nodes[v].y;
  return std::hypot(dx, dy) * t.config.unit_to_km;
}

namespace {

nlohmann::json config_to_json(const TopologyConfig& cfg) {
  return nlohmann::json{
      {"num_nodes", cfg.num_nodes},
      {"num_clusters", cfg.num_clusters},
      {"center_covariance", cfg.center_covariance},
      {"node_covariance", cfg.node_covariance},
      {"max_link_distance_units", cfg.max_link_distance_units},
      {"unit_to_km", cfg.unit_to_km},
  };
}

TopologyConfig config_from_json(const nlohmann::json& j, std::uint64_t seed) {
  TopologyConfig cfg;
  cfg.num_nodes = j.at("num_nodes").get<int>();
  cfg.num_clusters = j.value("num_clusters", 0);
  cfg.center_covariance = j.at("center_covariance").get<double>();
  cfg.node_covariance = j.at("node_covariance").get<double>();
  cfg.max_link_distance_units = j.at("max_link_distance_units").get<double>();
  cfg.unit_to_km = j.at("unit_to_km").get<double>();
  cfg.seed = seed;
  return cfg;
}

}  // namespace

nlohmann::json topology_to_json(const NetworkTopology& t) {
  nlohmann::json j;
  j["meta"] = {{"seed", t.config.seed}, {"config", config_to_json(t.config)}};
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const Node& n : t.nodes)
    nodes.push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const Link& l : t.links)
    edges.push_back({{"u", l.u}, {"v", l.v}, {"distance_km", l.distance_km}});
  return j;
}

NetworkTopology topology_from_json(const nlohmann::json& j) {
  NetworkTopology t;
  const auto& meta = j.at("meta");
  t.config = config_from_json(meta.at("config"), meta.at("seed").get<std::uint64_t>());
  for (const auto& n : j.at("nodes"))
    t.nodes.push_back(Node{n.at("id").get<int>(), n.at("x").get<double>(),
                           n.at("y").get<double>()});
  for (const auto& e : j.at("edges")) {
    int u = e.at("u").get<int>();
    int v = e.at("v").get<int>();
    if (u > v) std::swap(u, v);
    if (u == v) throw std::invalid_argument("topology json: self-loop edge");
    t.links.push_back(Link{u, v, e.at("distance_km").get<double>()});
  }
  std::sort(t.links.begin(), t.links.end(), [](const Link& a, const Link& b) {
    return std::tie(a.u, a.v) < std::tie(b.u, b.v);
  });
  t.rebuild_link_index();
  return t;
}

std::string topology_to_json_string(const NetworkTopology& t) {
  return topology_to_json(t).dump(2) + "\n";
}

void save_topology_json(const std::string& path, const NetworkTopology& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << topology_to_json_string(t);
}

NetworkTopology load_topology_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  return topology_from_json(j);
}

}  // namespace qkdlab
