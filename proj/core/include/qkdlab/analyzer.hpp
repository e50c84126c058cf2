#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qkdlab/channel.hpp"
#include "qkdlab/dataset.hpp"

namespace qkdlab {

/// Structural and key-rate summary of one simulated network.
struct NetworkReport {
  int num_nodes = 0;
  int num_edges = 0;
  double avg_degree = 0.0;
  double avg_key_rate_bps = 0.0;
  double total_key_rate_bps = 0.0;
  double avg_qber = 0.0;  ///< over links that produced a key
  double max_distance_km = 0.0;
  double avg_distance_km = 0.0;
  int edge_connectivity = 0;
  int node_connectivity = 0;
  double algebraic_connectivity = 0.0;
  double avg_clustering = 0.0;
  double avg_path_length = 0.0;  ///< hops, largest component
};

/// Ascending eigenvalues of the combinatorial Laplacian.
std::vector<double> laplacian_eigenvalues(int n, const std::vector<NodePair>& edges);

/// Second-smallest Laplacian eigenvalue; 0 iff disconnected (values below
/// 1e-9 are snapped to zero).
double algebraic_connectivity(int n, const std::vector<NodePair>& edges);

/// Global min-cut with unit edge capacities (max-flow). 0 when disconnected.
int edge_connectivity(int n, const std::vector<NodePair>& edges);

/// Global vertex connectivity via node-split max-flow; n-1 for complete
/// graphs by convention.
int node_connectivity(int n, const std::vector<NodePair>& edges);

double average_clustering(int n, const std::vector<NodePair>& edges);

/// Mean shortest-path hops over ordered pairs of the largest component.
double average_path_length(int n, const std::vector<NodePair>& edges);

NetworkReport analyze(const QkdNetwork& net);

std::string report_to_json_string(const NetworkReport& r);
void save_report_json(const std::string& path, const NetworkReport& r);

enum class AttackStrategy { random, degree_targeted, betweenness_targeted, link_targeted };

const char* attack_strategy_name(AttackStrategy s);
AttackStrategy attack_strategy_from_name(const std::string& name);

struct AttackStep {
  int step = 0;               ///< 0 = intact network
  int removed_id = -1;        ///< node id, or link index for link attacks
  double largest_component_fraction = 1.0;  ///< relative to the original n
  double surviving_key_rate_bps = 0.0;
};

/// Removes floor(fraction × n) nodes (or links for link_targeted) one per
/// step; targeted strategies recompute centralities after every removal.
std::vector<AttackStep> attack_simulation(const QkdNetwork& net,
                                          AttackStrategy strategy,
                                          double removal_fraction,
                                          std::uint64_t seed);

void save_attack_csv(const std::string& path, const std::vector<AttackStep>& curve);

}  // namespace qkdlab
