#include "qkdlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "json_io.hpp"
#include "qkdlab/rng.hpp"
#include "svg.hpp"

namespace qkdlab {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (node_counts.empty())
    throw std::invalid_argument("experiment: node_counts must be nonempty");
  if (!std::is_sorted(node_counts.begin(), node_counts.end()))
    throw std::invalid_argument("experiment: node_counts must be ascending");
  for (int n : node_counts)
    if (n < 2) throw std::invalid_argument("experiment: node counts must be >= 2");
  if (seeds_per_size < 1)
    throw std::invalid_argument("experiment: seeds_per_size must be >= 1");
  channel.validate();
  model.validate();
  training.validate();
  optimization.validate();
}

namespace {

SweepCell run_cell(const ExperimentConfig& cfg, int nodes, int rep) {
  SweepCell cell;
  cell.nodes = nodes;
  cell.rep = rep;
  cell.seed = Rng::mix(cfg.master_seed, static_cast<std::uint64_t>(nodes),
                       static_cast<std::uint64_t>(rep));
  TopologyConfig tcfg = cfg.topology;
  tcfg.num_nodes = nodes;
  tcfg.seed = cell.seed;

  NetworkTopology topo = generate_topology(tcfg);
  QkdNetwork net = simulate_network(std::move(topo), cfg.channel, Rng::mix(cell.seed, 2));

  cell.report = analyze(net);
  for (std::size_t i = 0; i < net.topology.links.size(); ++i) {
    cell.link_distances_km.push_back(net.topology.links[i].distance_km);
    cell.link_key_rates_bps.push_back(net.link_metrics[i].secure_key_rate_bps);
    if (!net.link_metrics[i].no_key) cell.link_qbers.push_back(net.link_metrics[i].qber);
  }

  GraphSample sample = build_sample(net);
  TrainConfig train = cfg.training;
  auto it = cfg.folds_by_size.find(nodes);
  if (it != cfg.folds_by_size.end()) train.k_folds = it->second;
  train.seed = Rng::mix(cell.seed, 3);

  CrossValidationResult cv = cross_validate(sample, cfg.model, train);
  if (cv.folds.empty())
    throw std::runtime_error("all folds failed: " +
                             (cv.failures.empty() ? "no detail" : cv.failures.front()));
  for (const FoldResult& f : cv.folds) {
    cell.fold_auc.push_back(f.val_auc);
    cell.fold_ap.push_back(f.val_ap);
  }
  cell.train_loss_curve = cv.folds.front().train_loss_curve;
  cell.val_loss_curve = cv.folds.front().val_loss_curve;
  cell.val_auc_curve = cv.folds.front().val_auc_curve;
  cell.ok = true;
  return cell;
}

void mean_std(const std::vector<double>& xs, double& mean, double& stdev) {
  mean = stdev = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  stdev = std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace

std::vector<SizeAggregate> aggregate_cells(const std::vector<SweepCell>& cells,
                                           const std::vector<int>& node_counts) {
  std::vector<SizeAggregate> rows;
  for (int nodes : node_counts) {
    SizeAggregate agg;
    agg.nodes = nodes;
    std::vector<double> aucs, aps;
    for (const SweepCell& c : cells) {
      if (c.nodes != nodes) continue;
      if (!c.ok) {
        ++agg.cells_failed;
        continue;
      }
      ++agg.cells_ok;
      agg.num_edges += c.report.num_edges;
      agg.avg_degree += c.report.avg_degree;
      agg.key_rate_bps += c.report.avg_key_rate_bps;
      agg.avg_qber += c.report.avg_qber;
      agg.max_distance_km += c.report.max_distance_km;
      agg.edge_connectivity += c.report.edge_connectivity;
      agg.node_connectivity += c.report.node_connectivity;
      agg.algebraic_connectivity += c.report.algebraic_connectivity;
      aucs.insert(aucs.end(), c.fold_auc.begin(), c.fold_auc.end());
      aps.insert(aps.end(), c.fold_ap.begin(), c.fold_ap.end());
    }
    if (agg.cells_ok > 0) {
      const double inv = 1.0 / agg.cells_ok;
      agg.num_edges *= inv;
      agg.avg_degree *= inv;
      agg.key_rate_bps *= inv;
      agg.avg_qber *= inv;
      agg.max_distance_km *= inv;
      agg.edge_connectivity *= inv;
      agg.node_connectivity *= inv;
      agg.algebraic_connectivity *= inv;
    }
    mean_std(aucs, agg.auc_mean, agg.auc_std);
    mean_std(aps, agg.ap_mean, agg.ap_std);
    rows.push_back(agg);
  }
  return rows;
}

ExperimentReport run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  ExperimentReport report;
  report.config = cfg;
  for (int nodes : cfg.node_counts) {
    for (int rep = 0; rep < cfg.seeds_per_size; ++rep) {
      try {
        report.cells.push_back(run_cell(cfg, nodes, rep));
      } catch (const std::exception& e) {
        SweepCell failed;
        failed.nodes = nodes;
        failed.rep = rep;
        failed.seed = Rng::mix(cfg.master_seed, static_cast<std::uint64_t>(nodes),
                               static_cast<std::uint64_t>(rep));
        failed.ok = false;
        failed.error = e.what();
        report.cells.push_back(std::move(failed));
      }
    }
  }
  report.rows = aggregate_cells(report.cells, cfg.node_counts);

  save_experiment_config(fs::path(cfg.output_dir) / "sweep_config.json", cfg);
  save_cells_json(fs::path(cfg.output_dir) / "cells.json", report);
  write_report_files(report, cfg.output_dir);
  return report;
}

namespace {

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_table(const std::string& path, const ExperimentReport& report,
                 const std::vector<std::pair<std::string, std::function<double(const SizeAggregate&)>>>& metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# qkdlab sweep: master_seed=" << report.config.master_seed
      << " seeds_per_size=" << report.config.seeds_per_size << "\n";
  out << "Metric";
  for (const SizeAggregate& r : report.rows) out << "," << r.nodes;
  out << "\n";
  for (const auto& [name, fn] : metrics) {
    out << name;
    for (const SizeAggregate& r : report.rows) out << "," << csv_num(fn(r));
    out << "\n";
  }
}

}  // namespace

void write_report_files(const ExperimentReport& report, const std::string& dir) {
  fs::create_directories(dir);

  write_table(fs::path(dir) / "tables1.csv", report,
              {
                  {"Num. Edges", [](const SizeAggregate& r) { return r.num_edges; }},
                  {"Avg. Degree", [](const SizeAggregate& r) { return r.avg_degree; }},
                  {"Key Rate (bits/s)", [](const SizeAggregate& r) { return r.key_rate_bps; }},
                  {"Avg. QBER", [](const SizeAggregate& r) { return r.avg_qber; }},
                  {"Max. Dist. (km)", [](const SizeAggregate& r) { return r.max_distance_km; }},
                  {"Edge Conn.", [](const SizeAggregate& r) { return r.edge_connectivity; }},
                  {"Node Conn.", [](const SizeAggregate& r) { return r.node_connectivity; }},
                  {"Alg. Conn.", [](const SizeAggregate& r) { return r.algebraic_connectivity; }},
              });
  write_table(fs::path(dir) / "tables2.csv", report,
              {
                  {"AUC (mean)", [](const SizeAggregate& r) { return r.auc_mean; }},
                  {"AUC (std)", [](const SizeAggregate& r) { return r.auc_std; }},
                  {"AP (mean)", [](const SizeAggregate& r) { return r.ap_mean; }},
                  {"AP (std)", [](const SizeAggregate& r) { return r.ap_std; }},
              });

  // Reference curves: first successful cell of the median size with curves.
  const SweepCell* reference = nullptr;
  for (const SweepCell& c : report.cells)
    if (c.ok && !c.train_loss_curve.empty() &&
        (!reference || std::abs(c.nodes - 50) < std::abs(reference->nodes - 50)))
      reference = &c;

  std::vector<svg::Series> loss_series, auc_series;
  if (reference) {
    svg::Series train{"train", "", {}, {}};
    svg::Series val{"validation", "", {}, {}};
    for (std::size_t e = 0; e < reference->train_loss_curve.size(); ++e) {
      train.x.push_back(static_cast<double>(e + 1));
      train.y.push_back(reference->train_loss_curve[e]);
      val.x.push_back(static_cast<double>(e + 1));
      val.y.push_back(reference->val_loss_curve[e]);
    }
    loss_series = {train, val};
    svg::Series auc{"val AUC", "", {}, {}};
    for (std::size_t e = 0; e < reference->val_auc_curve.size(); ++e) {
      auc.x.push_back(static_cast<double>(e + 1));
      auc.y.push_back(reference->val_auc_curve[e]);
    }
    auc_series = {auc};
  }
  svg::write_line_plot(fs::path(dir) / "training_loss.svg", "Training loss evolution",
                       "epoch", "BCE loss", loss_series);
  svg::write_line_plot(fs::path(dir) / "validation_auc.svg", "Validation AUC evolution",
                       "epoch", "AUC", auc_series);

  std::vector<double> dist, rate, qbers;
  for (const SweepCell& c : report.cells) {
    if (!c.ok) continue;
    dist.insert(dist.end(), c.link_distances_km.begin(), c.link_distances_km.end());
    rate.insert(rate.end(), c.link_key_rates_bps.begin(), c.link_key_rates_bps.end());
    qbers.insert(qbers.end(), c.link_qbers.begin(), c.link_qbers.end());
  }
  if (dist.size() > 2500) {  // thin deterministically for plot size
    std::vector<double> d2, r2;
    const std::size_t stride = dist.size() / 2500 + 1;
    for (std::size_t i = 0; i < dist.size(); i += stride) {
      d2.push_back(dist[i]);
      r2.push_back(rate[i]);
    }
    dist = std::move(d2);
    rate = std::move(r2);
  }
  svg::write_scatter_plot(fs::path(dir) / "key_rate_vs_distance.svg",
                          "Secure key rate vs distance", "distance (km)",
                          "key rate (bits/s)", dist, rate);
  svg::write_histogram(fs::path(dir) / "qber_histogram.svg", "QBER distribution",
                       "QBER", qbers, 24);
}

// ---------------------------------------------------------------------------
// JSON round trips
// ---------------------------------------------------------------------------

namespace {

nlohmann::json topology_config_json(const TopologyConfig& t) {
  return nlohmann::json{
      {"num_nodes", t.num_nodes},
      {"num_clusters", t.num_clusters},
      {"center_covariance", t.center_covariance},
      {"node_covariance", t.node_covariance},
      {"max_link_distance_units", t.max_link_distance_units},
      {"unit_to_km", t.unit_to_km},
  };
}

TopologyConfig topology_config_from(const nlohmann::json& j) {
  TopologyConfig t;
  t.num_nodes = j.value("num_nodes", t.num_nodes);
  t.num_clusters = j.value("num_clusters", t.num_clusters);
  t.center_covariance = j.value("center_covariance", t.center_covariance);
  t.node_covariance = j.value("node_covariance", t.node_covariance);
  t.max_link_distance_units = j.value("max_link_distance_units", t.max_link_distance_units);
  t.unit_to_km = j.value("unit_to_km", t.unit_to_km);
  return t;
}

nlohmann::json model_config_json(const ModelConfig& m) {
  return nlohmann::json{
      {"d_in", m.d_in},
      {"d_e", m.d_e},
      {"hidden", m.hidden},
      {"heads", m.heads},
      {"dropout", m.dropout},
      {"leaky_relu_slope", m.leaky_relu_slope},
      {"layernorm_epsilon", m.layernorm_epsilon},
      {"symmetrize_decoder", m.symmetrize_decoder},
  };
}

ModelConfig model_config_from(const nlohmann::json& j) {
  ModelConfig m;
  m.d_in = j.value("d_in", m.d_in);
  m.d_e = j.value("d_e", m.d_e);
  m.hidden = j.value("hidden", m.hidden);
  m.heads = j.value("heads", m.heads);
  m.dropout = j.value("dropout", m.dropout);
  m.leaky_relu_slope = j.value("leaky_relu_slope", m.leaky_relu_slope);
  m.layernorm_epsilon = j.value("layernorm_epsilon", m.layernorm_epsilon);
  m.symmetrize_decoder = j.value("symmetrize_decoder", m.symmetrize_decoder);
  return m;
}

nlohmann::json train_config_json(const TrainConfig& t) {
  return nlohmann::json{
      {"epochs", t.epochs},
      {"patience", t.patience},
      {"k_folds", t.k_folds},
      {"learning_rate", t.learning_rate},
      {"weight_decay", t.weight_decay},
      {"plateau_factor", t.plateau_factor},
      {"plateau_patience", t.plateau_patience},
      {"improvement_tolerance", t.improvement_tolerance},
      {"monitor_auc", t.monitor_auc},
      {"resample_negatives", t.resample_negatives},
  };
}

TrainConfig train_config_from(const nlohmann::json& j) {
  TrainConfig t;
  t.epochs = j.value("epochs", t.epochs);
  t.patience = j.value("patience", t.patience);
  t.k_folds = j.value("k_folds", t.k_folds);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.plateau_factor = j.value("plateau_factor", t.plateau_factor);
  t.plateau_patience = j.value("plateau_patience", t.plateau_patience);
  t.improvement_tolerance = j.value("improvement_tolerance", t.improvement_tolerance);
  t.monitor_auc = j.value("monitor_auc", t.monitor_auc);
  t.resample_negatives = j.value("resample_negatives", t.resample_negatives);
  return t;
}

nlohmann::json optimization_config_json(const OptimizationConfig& o) {
  return nlohmann::json{
      {"candidate_radius_km", o.candidate_radius_km},
      {"score_threshold", o.score_threshold},
      {"degree_budget", o.degree_budget},
      {"objective", "max_total_key_rate"},
  };
}

OptimizationConfig optimization_config_from(const nlohmann::json& j) {
  OptimizationConfig o;
  o.candidate_radius_km = j.value("candidate_radius_km", o.candidate_radius_km);
  o.score_threshold = j.value("score_threshold", o.score_threshold);
  o.degree_budget = j.value("degree_budget", o.degree_budget);
  if (j.contains("objective") && j.at("objective") != "max_total_key_rate")
    throw std::invalid_argument("optimization: unknown objective");
  return o;
}

}  // namespace

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["node_counts"] = cfg.node_counts;
  j["seeds_per_size"] = cfg.seeds_per_size;
  j["master_seed"] = cfg.master_seed;
  nlohmann::json folds = nlohmann::json::object();
  for (const auto& [nodes, k] : cfg.folds_by_size) folds[std::to_string(nodes)] = k;
  j["folds_by_size"] = std::move(folds);
  j["topology"] = topology_config_json(cfg.topology);
  j["channel"] = channel_params_json(cfg.channel);
  j["model"] = model_config_json(cfg.model);
  j["training"] = train_config_json(cfg.training);
  j["optimization"] = optimization_config_json(cfg.optimization);
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ExperimentConfig cfg;
  cfg.node_counts = j.value("node_counts", cfg.node_counts);
  cfg.seeds_per_size = j.value("seeds_per_size", cfg.seeds_per_size);
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  if (j.contains("folds_by_size"))
    for (const auto& [key, value] : j.at("folds_by_size").items())
      cfg.folds_by_size[std::stoi(key)] = value.get<int>();
  if (j.contains("topology")) cfg.topology = topology_config_from(j.at("topology"));
  if (j.contains("channel")) cfg.channel = channel_params_from(j.at("channel"));
  if (j.contains("model")) cfg.model = model_config_from(j.at("model"));
  if (j.contains("training")) cfg.training = train_config_from(j.at("training"));
  if (j.contains("optimization"))
    cfg.optimization = optimization_config_from(j.at("optimization"));
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return experiment_config_from_json(text);
}

void save_experiment_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << experiment_config_to_json(cfg);
}

void save_cells_json(const std::string& path, const ExperimentReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const SweepCell& c : report.cells) {
    nlohmann::json j;
    j["nodes"] = c.nodes;
    j["rep"] = c.rep;
    j["seed"] = c.seed;
    j["ok"] = c.ok;
    if (!c.ok) {
      j["error"] = c.error;
      cells.push_back(std::move(j));
      continue;
    }
    j["report"] = {
        {"num_nodes", c.report.num_nodes},
        {"num_edges", c.report.num_edges},
        {"avg_degree", c.report.avg_degree},
        {"avg_key_rate_bps", c.report.avg_key_rate_bps},
        {"total_key_rate_bps", c.report.total_key_rate_bps},
        {"avg_qber", c.report.avg_qber},
        {"max_distance_km", c.report.max_distance_km},
        {"avg_distance_km", c.report.avg_distance_km},
        {"edge_connectivity", c.report.edge_connectivity},
        {"node_connectivity", c.report.node_connectivity},
        {"algebraic_connectivity", c.report.algebraic_connectivity},
        {"avg_clustering", c.report.avg_clustering},
        {"avg_path_length", c.report.avg_path_length},
    };
    j["fold_auc"] = c.fold_auc;
    j["fold_ap"] = c.fold_ap;
    j["train_loss_curve"] = c.train_loss_curve;
    j["val_loss_curve"] = c.val_loss_curve;
    j["val_auc_curve"] = c.val_auc_curve;
    j["link_distances_km"] = c.link_distances_km;
    j["link_key_rates_bps"] = c.link_key_rates_bps;
    j["link_qbers"] = c.link_qbers;
    cells.push_back(std::move(j));
  }
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(experiment_config_to_json(report.config));
  j["cells"] = std::move(cells);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

ExperimentReport load_cells_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;

  ExperimentReport report;
  report.config = experiment_config_from_json(j.at("config").dump());
  for (const auto& cj : j.at("cells")) {
    SweepCell c;
    c.nodes = cj.at("nodes").get<int>();
    c.rep = cj.at("rep").get<int>();
    c.seed = cj.at("seed").get<std::uint64_t>();
    c.ok = cj.at("ok").get<bool>();
    if (!c.ok) {
      c.error = cj.value("error", "");
      report.cells.push_back(std::move(c));
      continue;
    }
    const auto& r = cj.at("report");
    c.report.num_nodes = r.at("num_nodes").get<int>();
    c.report.num_edges = r.at("num_edges").get<int>();
    c.report.avg_degree = r.at("avg_degree").get<double>();
    c.report.avg_key_rate_bps = r.at("avg_key_rate_bps").get<double>();
    c.report.total_key_rate_bps = r.at("total_key_rate_bps").get<double>();
    c.report.avg_qber = r.at("avg_qber").get<double>();
    c.report.max_distance_km = r.at("max_distance_km").get<double>();
    c.report.avg_distance_km = r.at("avg_distance_km").get<double>();
    c.report.edge_connectivity = r.at("edge_connectivity").get<int>();
    c.report.node_connectivity = r.at("node_connectivity").get<int>();
    c.report.algebraic_connectivity = r.at("algebraic_connectivity").get<double>();
    c.report.avg_clustering = r.at("avg_clustering").get<double>();
    c.report.avg_path_length = r.at("avg_path_length").get<double>();
    c.fold_auc = cj.at("fold_auc").get<std::vector<double>>();
    c.fold_ap = cj.at("fold_ap").get<std::vector<double>>();
    c.train_loss_curve = cj.at("train_loss_curve").get<std::vector<double>>();
    c.val_loss_curve = cj.at("val_loss_curve").get<std::vector<double>>();
    c.val_auc_curve = cj.at("val_auc_curve").get<std::vector<double>>();
    c.link_distances_km = cj.at("link_distances_km").get<std::vector<double>>();
    c.link_key_rates_bps = cj.at("link_key_rates_bps").get<std::vector<double>>();
    c.link_qbers = cj.at("link_qbers").get<std::vector<double>>();
    report.cells.push_back(std::move(c));
  }
  report.rows = aggregate_cells(report.cells, report.config.node_counts);
  return report;
}

}  // namespace qkdlab
