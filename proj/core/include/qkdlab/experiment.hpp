#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qkdlab/analyzer.hpp"
#include "qkdlab/optimizer.hpp"
#include "qkdlab/training.hpp"

namespace qkdlab {

/// Configuration of the scaling sweep (sizes × seeds).
struct ExperimentConfig {
  std::vector<int> node_counts{10, 20, 50, 100, 250};
  int seeds_per_size = 5;
  std::uint64_t master_seed = 1;
  std::map<int, int> folds_by_size;  ///< per-size K override (e.g. 250 → 2)
  TopologyConfig topology;
  ChannelParams channel;
  ModelConfig model;
  TrainConfig training;
  OptimizationConfig optimization;
  std::string output_dir = "out";

  void validate() const;
};

/// One (size, seed) sweep cell.
struct SweepCell {
  int nodes = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  NetworkReport report;
  std::vector<double> fold_auc;
  std::vector<double> fold_ap;
  std::vector<double> train_loss_curve;  // fold 0
  std::vector<double> val_loss_curve;    // fold 0
  std::vector<double> val_auc_curve;     // fold 0
  std::vector<double> link_distances_km;
  std::vector<double> link_key_rates_bps;
  std::vector<double> link_qbers;
};

struct SizeAggregate {
  int nodes = 0;
  int cells_ok = 0;
  int cells_failed = 0;
  double num_edges = 0.0;
  double avg_degree = 0.0;
  double key_rate_bps = 0.0;
  double avg_qber = 0.0;
  double max_distance_km = 0.0;
  double edge_connectivity = 0.0;
  double node_connectivity = 0.0;
  double algebraic_connectivity = 0.0;
  double auc_mean = 0.0, auc_std = 0.0;
  double ap_mean = 0.0, ap_std = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<SweepCell> cells;
  std::vector<SizeAggregate> rows;
};

/// generate → simulate → dataset → cross-validate → analyze for every
/// (size, seed) cell; failures are isolated per cell. Writes cells.json,
/// both tables and the four plots into config.output_dir.
ExperimentReport run_sweep(const ExperimentConfig& cfg);

std::vector<SizeAggregate> aggregate_cells(const std::vector<SweepCell>& cells,
                                           const std::vector<int>& node_counts);

/// tables1.csv / tables2.csv with Table-style metric rows plus the four
/// static SVG plots (training loss, validation AUC, key rate vs distance,
/// QBER histogram).
void write_report_files(const ExperimentReport& report, const std::string& dir);

void save_cells_json(const std::string& path, const ExperimentReport& report);
ExperimentReport load_cells_json(const std::string& path);

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const std::string& path, const ExperimentConfig& cfg);

}  // namespace qkdlab
