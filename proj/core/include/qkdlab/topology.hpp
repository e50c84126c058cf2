#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qkdlab {

/// Generation parameters for a clustered random geometric topology.
/// Covariances are variances in squared abstract units (isotropic).
struct TopologyConfig {
  int num_nodes = 20;
  int num_clusters = 0;  ///< 0 = auto: min(num_nodes, max(10, num_nodes / 5))
  double center_covariance = 22500.0;
  double node_covariance = 25.0;
  double max_link_distance_units = 100.0;
  double unit_to_km = 0.125;
  std::uint64_t seed = 1;

  int resolved_clusters() const;
  double link_cap_km() const { return max_link_distance_units * unit_to_km; }
  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct Node {
  int id;
  double x;  ///< abstract units
  double y;
};

/// Undirected link, endpoints stored with u < v.
struct Link {
  int u;
  int v;
  double distance_km;
};

class NetworkTopology {
 public:
  TopologyConfig config;
  std::vector<Node> nodes;
  std::vector<Link> links;  ///< sorted by (u, v)

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_links() const { return static_cast<int>(links.size()); }
  double link_cap_km() const { return config.link_cap_km(); }

  bool has_link(int u, int v) const;
  /// Index into links for (u, v) in either order, -1 if absent.
  int link_index(int u, int v) const;
  std::vector<int> degrees() const;
  std::vector<std::vector<int>> adjacency() const;

  void rebuild_link_index();

 private:
  std::unordered_map<std::uint64_t, int> link_lookup_;
};

/// Draws cluster centers from N(0, center_covariance·I), assigns nodes
/// round-robin to clusters, samples node offsets from N(0, node_covariance·I)
/// and connects every pair within max_link_distance_units. Deterministic for
/// a fixed config (including seed).
NetworkTopology generate_topology(const TopologyConfig& cfg);

/// Euclidean distance between two nodes in km. Throws on unknown ids.
double pairwise_distance(const NetworkTopology& t, int u, int v);

std::string topology_to_json_string(const NetworkTopology& t);
void save_topology_json(const std::string& path, const NetworkTopology& t);
NetworkTopology load_topology_json(const std::string& path);

}  // namespace qkdlab
