#include "qkdlab/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "qkdlab/rng.hpp"

namespace qkdlab {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("training: patience must be >= 1");
  if (k_folds < 2) throw std::invalid_argument("training: k_folds must be >= 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("training: weight_decay must be >= 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
    throw std::invalid_argument("training: plateau_factor must lie in (0,1)");
  if (plateau_patience < 1) throw std::invalid_argument("training: plateau_patience must be >= 1");
}

AdamW::AdamW(const ModelParams& like, double weight_decay, double beta1, double beta2,
             double epsilon)
    : m_(ModelParams::zeros(like.config)),
      v_(ModelParams::zeros(like.config)),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {}

void AdamW::step(ModelParams& params, const ModelParams& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  // for_each_tensor visits in a fixed order, so the four parameter sets can
  // be zipped positionally.
  std::vector<Eigen::MatrixXd*> thetas, ms, vs;
  std::vector<const Eigen::MatrixXd*> gs;
  params.for_each_tensor([&](const std::string&, Eigen::MatrixXd& t) { thetas.push_back(&t); });
  m_.for_each_tensor([&](const std::string&, Eigen::MatrixXd& t) { ms.push_back(&t); });
  v_.for_each_tensor([&](const std::string&, Eigen::MatrixXd& t) { vs.push_back(&t); });
  grads.for_each_tensor([&](const std::string&, const Eigen::MatrixXd& t) { gs.push_back(&t); });

  for (std::size_t i = 0; i < thetas.size(); ++i) {
    Eigen::MatrixXd& theta = *thetas[i];
    Eigen::MatrixXd& m = *ms[i];
    Eigen::MatrixXd& v = *vs[i];
    const Eigen::MatrixXd& g = *gs[i];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    // Decoupled weight decay: applied to the parameter directly, never mixed
    // into the gradient moments.
    theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + epsilon_);
    theta -= lr * weight_decay_ * theta;
  }
}

bool EarlyStopper::observe(double value) {
  ++count_;
  if (value < best_ - tolerance_) {
    best_ = value;
    best_index_ = count_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

void PlateauScheduler::observe(double value) {
  if (value < best_ - tolerance_) {
    best_ = value;
    stale_ = 0;
    return;
  }
  if (++stale_ >= patience_) {
    lr_ *= factor_;
    stale_ = 0;
  }
}

FoldResult train_fold(const GraphSample& sample, const FoldSplit& split,
                      const ModelConfig& mcfg, const TrainConfig& tcfg,
                      std::uint64_t fold_seed) {
  mcfg.validate();
  tcfg.validate();

  GraphContext ctx(sample, split.message_edges);
  LinkBatch train_batch =
      LinkBatch::from_pairs(sample, split.train_positive, split.train_negative);
  LinkBatch val_batch =
      LinkBatch::from_pairs(sample, split.val_positive, split.val_negative);

  ModelParams params = ModelParams::init(mcfg, Rng::mix(fold_seed, 0x111ULL));
  AdamW opt(params, tcfg.weight_decay);
  EarlyStopper stopper(tcfg.patience, tcfg.improvement_tolerance);
  PlateauScheduler scheduler(tcfg.learning_rate, tcfg.plateau_factor,
                             tcfg.plateau_patience, tcfg.improvement_tolerance);

  FoldResult result;
  result.fold_id = split.fold_id;
  ModelParams best = params;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    if (tcfg.resample_negatives && epoch > 1) {
      std::vector<NodePair> fresh = sample_negatives(
          sample, split.train_positive.size(), Rng::mix(fold_seed, 0x4e45ULL, epoch));
      train_batch = LinkBatch::from_pairs(sample, split.train_positive, fresh);
    }

    LossAndGrads lg = loss_and_gradients(params, ctx, train_batch, /*training=*/true,
                                         Rng::mix(fold_seed, 0xD0ULL, epoch));
    if (!std::isfinite(lg.loss))
      throw std::runtime_error("train_fold: training loss diverged (non-finite) at epoch " +
                               std::to_string(epoch) + " of fold " +
                               std::to_string(split.fold_id));
    const double lr = scheduler.lr();
    opt.step(params, lg.grads, lr);

    ForwardResult val_fwd = forward(params, ctx, val_batch, /*training=*/false);
    const double val_loss = bce_with_logits(val_fwd.logits, val_batch.labels);
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train_fold: validation loss diverged (non-finite) at epoch " +
                               std::to_string(epoch) + " of fold " +
                               std::to_string(split.fold_id));

    double val_auc = 0.5;
    {
      std::vector<double> scores(val_fwd.logits.data(),
                                 val_fwd.logits.data() + val_fwd.logits.size());
      std::vector<int> labels(scores.size());
      for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = val_batch.labels(static_cast<Eigen::Index>(i)) > 0.5 ? 1 : 0;
      val_auc = auc_score(scores, labels);
    }

    result.train_loss_curve.push_back(lg.loss);
    result.val_loss_curve.push_back(val_loss);
    result.val_auc_curve.push_back(val_auc);
    result.lr_curve.push_back(lr);

    const double monitored = tcfg.monitor_auc ? -val_auc : val_loss;
    if (stopper.observe(monitored)) {
      best = params;
      best_epoch = epoch;
    }
    scheduler.observe(monitored);
    if (stopper.should_stop()) break;
  }

  result.best_epoch = best_epoch;
  result.best_params = std::move(best);

  MetricReport report =
      evaluate_pairs(result.best_params, sample, split.val_positive,
                     split.val_negative, &split.message_edges);
  result.val_auc = report.auc;
  result.val_ap = report.ap;
  return result;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& std_out) {
  mean = 0.0;
  std_out = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  std_out = std::sqrt(ss / static_cast<double>(xs.size()));  // population
}

}  // namespace

CrossValidationResult cross_validate(const GraphSample& sample, const ModelConfig& mcfg,
                                     const TrainConfig& tcfg) {
  tcfg.validate();
  std::vector<FoldSplit> splits =
      make_folds(sample, tcfg.k_folds, Rng::mix(tcfg.seed, 0xF01D5ULL));

  CrossValidationResult cv;
  for (const FoldSplit& split : splits) {
    try {
      cv.folds.push_back(
          train_fold(sample, split, mcfg, tcfg, Rng::mix(tcfg.seed, split.fold_id + 1)));
    } catch (const std::exception& e) {
      cv.failures.emplace_back(e.what());
    }
  }

  std::vector<double> aucs, aps;
  for (const FoldResult& f : cv.folds) {
    aucs.push_back(f.val_auc);
    aps.push_back(f.val_ap);
  }
  mean_std(aucs, cv.auc_mean, cv.auc_std);
  mean_std(aps, cv.ap_mean, cv.ap_std);
  return cv;
}

void write_training_log_csv(const std::string& path,
                            const std::vector<FoldResult>& folds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "epoch,fold,train_loss,val_loss,lr\n";
  char line[160];
  for (const FoldResult& f : folds) {
    for (std::size_t e = 0; e < f.train_loss_curve.size(); ++e) {
      std::snprintf(line, sizeof(line), "%zu,%d,%.9g,%.9g,%.9g\n", e + 1, f.fold_id,
                    f.train_loss_curve[e], f.val_loss_curve[e], f.lr_curve[e]);
      out << line;
    }
  }
}

}  // namespace qkdlab
