#include "qkdlab/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "qkdlab/dataset.hpp"
#include "qkdlab/rng.hpp"

namespace qkdlab {

void OptimizationConfig::validate() const {
  if (!(candidate_radius_km >= 0.0) || !std::isfinite(candidate_radius_km))
    throw std::invalid_argument("optimization: candidate_radius_km must be finite and >= 0");
  if (!(score_threshold > 0.0 && score_threshold < 1.0))
    throw std::invalid_argument("optimization: score_threshold must lie in (0,1)");
  if (degree_budget < 0)
    throw std::invalid_argument("optimization: degree_budget must be >= 0");
}

double OptimizationConfig::resolved_radius_km(const NetworkTopology& baseline) const {
  return candidate_radius_km > 0.0 ? candidate_radius_km : 2.0 * baseline.link_cap_km();
}

QkdNetwork optimize_topology(const QkdNetwork& baseline, const ModelParams& params,
                             const OptimizationConfig& ocfg, std::uint64_t seed) {
  ocfg.validate();
  const NetworkTopology& t = baseline.topology;
  const int n = t.num_nodes();
  const double radius = ocfg.resolved_radius_km(t);

  GraphSample sample = build_sample(baseline);

  std::vector<NodePair> candidates;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (pairwise_distance(t, u, v) <= radius) candidates.push_back({u, v});

  std::vector<LinkScore> scored = score_pairs(params, sample, candidates);

  struct Retained {
    NodePair pair;
    double probability;
  };
  std::vector<Retained> retained;
  for (const LinkScore& s : scored)
    if (s.probability >= ocfg.score_threshold) retained.push_back({s.pair, s.probability});

  // Greedy, deterministic order: descending score, pair id as tiebreak.
  std::sort(retained.begin(), retained.end(), [](const Retained& a, const Retained& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.pair < b.pair;
  });

  std::vector<int> degree(n, 0);
  std::vector<NodePair> kept;
  for (const Retained& r : retained) {
    if (ocfg.degree_budget > 0 && (degree[r.pair.first] >= ocfg.degree_budget ||
                                   degree[r.pair.second] >= ocfg.degree_budget))
      continue;
    kept.push_back(r.pair);
    ++degree[r.pair.first];
    ++degree[r.pair.second];
  }
  std::sort(kept.begin(), kept.end());

  NetworkTopology opt;
  opt.config = t.config;
  opt.nodes = t.nodes;
  opt.links.reserve(kept.size());
  for (const auto& [u, v] : kept)
    opt.links.push_back(Link{u, v, pairwise_distance(t, u, v)});
  opt.rebuild_link_index();

  return simulate_network(std::move(opt), baseline.channel, Rng::mix(seed, 0x09C7ULL));
}

namespace {

double mean_dark_fraction(const QkdNetwork& net) {
  if (net.topology.links.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < net.topology.links.size(); ++i) {
    ExpectedChannel e = expected_metrics(net.topology.links[i].distance_km,
                                         net.link_metrics[i].medium, net.channel);
    total += e.p_click > 0.0 ? e.p_dark_total / e.p_click : 0.0;
  }
  return total / static_cast<double>(net.topology.links.size());
}

}  // namespace

ComparisonReport compare(const QkdNetwork& baseline, const QkdNetwork& optimized) {
  if (baseline.topology.num_nodes() != optimized.topology.num_nodes())
    throw std::invalid_argument("compare: node sets differ");
  for (int i = 0; i < baseline.topology.num_nodes(); ++i) {
    const Node& a = baseline.topology.nodes[i];
    const Node& b = optimized.topology.nodes[i];
    if (a.id != b.id || a.x != b.x || a.y != b.y)
      throw std::invalid_argument("compare: node sets differ");
  }

  ComparisonReport r;
  r.baseline = analyze(baseline);
  r.optimized = analyze(optimized);
  r.delta_total_key_rate_bps = r.optimized.total_key_rate_bps - r.baseline.total_key_rate_bps;
  r.delta_avg_key_rate_bps = r.optimized.avg_key_rate_bps - r.baseline.avg_key_rate_bps;
  r.delta_avg_qber = r.optimized.avg_qber - r.baseline.avg_qber;
  r.delta_avg_distance_km = r.optimized.avg_distance_km - r.baseline.avg_distance_km;
  r.delta_num_edges = r.optimized.num_edges - r.baseline.num_edges;
  r.dark_fraction_baseline = mean_dark_fraction(baseline);
  r.dark_fraction_optimized = mean_dark_fraction(optimized);
  return r;
}

namespace {

nlohmann::json report_json(const NetworkReport& r) {
  return nlohmann::json{
      {"num_nodes", r.num_nodes},
      {"num_edges", r.num_edges},
      {"avg_degree", r.avg_degree},
      {"avg_key_rate_bps", r.avg_key_rate_bps},
      {"total_key_rate_bps", r.total_key_rate_bps},
      {"avg_qber", r.avg_qber},
      {"max_distance_km", r.max_distance_km},
      {"avg_distance_km", r.avg_distance_km},
      {"edge_connectivity", r.edge_connectivity},
      {"node_connectivity", r.node_connectivity},
      {"algebraic_connectivity", r.algebraic_connectivity},
      {"avg_clustering", r.avg_clustering},
      {"avg_path_length", r.avg_path_length},
  };
}

}  // namespace

std::string comparison_to_json_string(const ComparisonReport& r) {
  nlohmann::json j;
  j["baseline"] = report_json(r.baseline);
  j["optimized"] = report_json(r.optimized);
  j["deltas"] = {
      {"total_key_rate_bps", r.delta_total_key_rate_bps},
      {"avg_key_rate_bps", r.delta_avg_key_rate_bps},
      {"avg_qber", r.delta_avg_qber},
      {"avg_distance_km", r.delta_avg_distance_km},
      {"num_edges", r.delta_num_edges},
  };
  j["dark_click_fraction"] = {
      {"baseline", r.dark_fraction_baseline},
      {"optimized", r.dark_fraction_optimized},
      {"relative_change", r.dark_fraction_baseline > 0.0
                              ? (r.dark_fraction_optimized - r.dark_fraction_baseline) /
                                    r.dark_fraction_baseline
                              : 0.0},
  };
  return j.dump(2) + "\n";
}

void save_comparison_json(const std::string& path, const ComparisonReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << comparison_to_json_string(r);
}

std::string comparison_summary_text(const ComparisonReport& r) {
  char buf[256];
  std::string out;
  out += "metric                     baseline      optimized     delta\n";
  auto row = [&](const char* name, double b, double o) {
    std::snprintf(buf, sizeof(buf), "%-26s %-13.4g %-13.4g %+.4g\n", name, b, o, o - b);
    out += buf;
  };
  row("num_edges", r.baseline.num_edges, r.optimized.num_edges);
  row("total_key_rate_bps", r.baseline.total_key_rate_bps, r.optimized.total_key_rate_bps);
  row("avg_key_rate_bps", r.baseline.avg_key_rate_bps, r.optimized.avg_key_rate_bps);
  row("avg_qber", r.baseline.avg_qber, r.optimized.avg_qber);
  row("avg_distance_km", r.baseline.avg_distance_km, r.optimized.avg_distance_km);
  row("dark_click_fraction", r.dark_fraction_baseline, r.dark_fraction_optimized);
  return out;
}

}  // namespace qkdlab
