#pragma once

#include <cstdint>
#include <string>

#include "qkdlab/analyzer.hpp"
#include "qkdlab/evaluation.hpp"

namespace qkdlab {

struct OptimizationConfig {
  double candidate_radius_km = 0.0;  ///< 0 = auto: 2 × baseline link cap
  double score_threshold = 0.5;      ///< must lie in (0, 1)
  int degree_budget = 0;             ///< 0 = unlimited
  // single objective: maximize total secure key rate

  void validate() const;
  double resolved_radius_km(const NetworkTopology& baseline) const;
};

/// Scores every node pair within the candidate radius with the trained
/// model, keeps pairs with probability >= score_threshold (greedy by
/// descending score under the optional per-node degree budget) and simulates
/// BB84 on every retained link.
QkdNetwork optimize_topology(const QkdNetwork& baseline, const ModelParams& params,
                             const OptimizationConfig& ocfg, std::uint64_t seed);

struct ComparisonReport {
  NetworkReport baseline;
  NetworkReport optimized;
  double delta_total_key_rate_bps = 0.0;
  double delta_avg_key_rate_bps = 0.0;
  double delta_avg_qber = 0.0;
  double delta_avg_distance_km = 0.0;
  double delta_num_edges = 0.0;
  /// Mean fraction of clicks caused by dark counts (analytic, per link).
  double dark_fraction_baseline = 0.0;
  double dark_fraction_optimized = 0.0;
};

/// Analyzer reports for both networks plus signed deltas. Throws when the
/// node sets differ.
ComparisonReport compare(const QkdNetwork& baseline, const QkdNetwork& optimized);

std::string comparison_to_json_string(const ComparisonReport& r);
void save_comparison_json(const std::string& path, const ComparisonReport& r);
/// Human-readable side-by-side table.
std::string comparison_summary_text(const ComparisonReport& r);

}  // namespace qkdlab
