#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qkdlab/channel.hpp"

namespace qkdlab {

using NodePair = std::pair<int, int>;

/// Numeric view of one simulated network for link prediction.
/// Node features: x, y, degree, betweenness (normalized to [0,1]).
/// Edge features: distance_km, qber, min-max normalized key rate, loss_db,
/// medium flag (0 fiber / 1 free space).
struct GraphSample {
  int num_nodes = 0;
  Eigen::MatrixXd node_features;      // n × 4
  std::vector<NodePair> und_edges;    // (u, v) with u < v, sorted
  Eigen::MatrixXd und_edge_features;  // |E| × 5
  std::vector<NodePair> edge_index;   // both directions of every undirected edge
  Eigen::MatrixXd edge_features;      // |edge_index| × 5, rows duplicated per direction
  std::vector<NodePair> positive_pairs;  // == und_edges

  /// Row of und_edge_features for (u, v) in either order, -1 if not an edge.
  int und_row_of(int u, int v) const;
  bool is_edge(int u, int v) const { return und_row_of(u, v) >= 0; }

  std::unordered_map<std::uint64_t, int> edge_row_lookup;
};

static constexpr int kNodeFeatureDim = 4;
static constexpr int kEdgeFeatureDim = 5;

/// Exact betweenness centrality (Brandes), normalized by (n-1)(n-2)/2.
std::vector<double> betweenness_centrality(int n,
                                           const std::vector<NodePair>& edges);

GraphSample build_sample(const QkdNetwork& net);

/// Uniform sample without replacement over unordered non-adjacent pairs,
/// excluding `exclusions`; deterministic per seed. Throws when count exceeds
/// the available non-edges.
std::vector<NodePair> sample_negatives(const GraphSample& sample,
                                       std::size_t count, std::uint64_t seed,
                                       const std::vector<NodePair>& exclusions = {});

std::size_t count_non_edges(const GraphSample& sample);

/// One cross-validation fold. message_edges == train_positive: validation
/// pairs never participate in feature propagation.
struct FoldSplit {
  int fold_id = 0;
  std::vector<NodePair> train_positive;
  std::vector<NodePair> val_positive;
  std::vector<NodePair> train_negative;
  std::vector<NodePair> val_negative;
  std::vector<NodePair> message_edges;
};

/// Shuffles positives, partitions them into K validation blocks and samples
/// negatives 1:1 for train and validation (disjoint within each fold).
/// Throws when positives < K or when the graph lacks enough non-edges.
std::vector<FoldSplit> make_folds(const GraphSample& sample, int k_folds,
                                  std::uint64_t seed);

/// Flat JSON export of feature matrices for cross-implementation checks.
std::string sample_to_json_string(const GraphSample& sample);
void save_sample_json(const std::string& path, const GraphSample& sample);

}  // namespace qkdlab
