#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qkdlab/evaluation.hpp"
#include "qkdlab/model.hpp"

namespace qkdlab {

struct TrainConfig {
  int epochs = 200;
  int patience = 20;
  int k_folds = 5;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double plateau_factor = 0.5;
  int plateau_patience = 10;
  double improvement_tolerance = 1e-6;
  bool monitor_auc = false;       ///< early-stop on val AUC instead of loss
  bool resample_negatives = false;  ///< fresh training negatives each epoch
  std::uint64_t seed = 1;

  void validate() const;
};

struct FoldResult {
  int fold_id = 0;
  int best_epoch = 0;  // 1-based
  std::vector<double> train_loss_curve;
  std::vector<double> val_loss_curve;
  std::vector<double> val_auc_curve;
  std::vector<double> lr_curve;
  double val_auc = 0.0;
  double val_ap = 0.0;
  ModelParams best_params;
};

/// Decoupled weight decay Adam (AdamW).
class AdamW {
 public:
  AdamW(const ModelParams& like, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double epsilon = 1e-8);
  void step(ModelParams& params, const ModelParams& grads, double lr);

 private:
  ModelParams m_, v_;
  double weight_decay_, beta1_, beta2_, epsilon_;
  long t_ = 0;
};

/// Tracks the best metric seen; improvement means dropping below
/// best - tolerance.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double tolerance)
      : patience_(patience), tolerance_(tolerance) {}
  /// Returns true when this observation improved on the best.
  bool observe(double value);
  bool should_stop() const { return stale_ >= patience_; }
  int best_index() const { return best_index_; }  // 1-based
  double best() const { return best_; }

 private:
  int patience_;
  double tolerance_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_index_ = 0;
  int stale_ = 0;
  int count_ = 0;
};

/// Halves the learning rate after `patience` epochs without improvement.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, double factor, int patience,
                   double tolerance)
      : lr_(initial_lr), factor_(factor), patience_(patience), tolerance_(tolerance) {}
  double lr() const { return lr_; }
  void observe(double value);

 private:
  double lr_, factor_;
  int patience_;
  double tolerance_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

/// Full-batch training of one fold. Returns the parameters of the best
/// validation epoch. Throws std::runtime_error with a diagnostic when the
/// loss turns non-finite.
FoldResult train_fold(const GraphSample& sample, const FoldSplit& split,
                      const ModelConfig& mcfg, const TrainConfig& tcfg,
                      std::uint64_t fold_seed);

struct CrossValidationResult {
  std::vector<FoldResult> folds;  // successful folds only, order preserved
  std::vector<std::string> failures;
  double auc_mean = 0.0, auc_std = 0.0;
  double ap_mean = 0.0, ap_std = 0.0;
};

/// K independent trainings from fresh initializations; aggregates use the
/// population standard deviation.
CrossValidationResult cross_validate(const GraphSample& sample,
                                     const ModelConfig& mcfg,
                                     const TrainConfig& tcfg);

/// CSV: epoch, fold, train_loss, val_loss, lr.
void write_training_log_csv(const std::string& path,
                            const std::vector<FoldResult>& folds);

}  // namespace qkdlab
