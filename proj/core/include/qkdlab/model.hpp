#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qkdlab/dataset.hpp"

namespace qkdlab {

struct ModelConfig {
  int d_in = kNodeFeatureDim;
  int d_e = kEdgeFeatureDim;
  int hidden = 64;
  int heads = 4;
  double dropout = 0.2;
  double leaky_relu_slope = 0.2;
  double layernorm_epsilon = 1e-5;
  bool symmetrize_decoder = false;

  int head_dim() const { return hidden / heads; }
  void validate() const;
};

/// Every learned tensor of the link predictor. Bias vectors are stored as
/// k×1 matrices so the whole set can be visited uniformly.
struct ModelParams {
  ModelConfig config;

  // transformer graph convolution (query/key/value + output bias)
  Eigen::MatrixXd tc_wq, tc_wk, tc_wv;   // hidden × d_in, head blocks stacked
  Eigen::MatrixXd tc_bq, tc_bk, tc_bv;   // hidden × 1
  Eigen::MatrixXd tc_bias;               // hidden × 1, pre-ReLU

  // GATv2 attention layer
  Eigen::MatrixXd ga_wl, ga_wr;  // hidden × hidden, head blocks stacked
  Eigen::MatrixXd ga_att;        // hidden × 1, per-head attention vectors
  Eigen::MatrixXd ga_battn;      // hidden × 1, bias inside the LeakyReLU
  Eigen::MatrixXd ga_bias;       // hidden × 1, pre-activation output bias

  // edge feature MLP: W2(Dropout(ReLU(LayerNorm(W1 E))))
  Eigen::MatrixXd em_w1;              // hidden × d_e
  Eigen::MatrixXd em_b1;              // hidden × 1
  Eigen::MatrixXd em_gamma, em_beta;  // hidden × 1
  Eigen::MatrixXd em_w2;              // hidden × hidden
  Eigen::MatrixXd em_b2;              // hidden × 1

  // decoder: W4(Dropout(ReLU(LayerNorm(W3 [z_u||z_v||e']))))
  Eigen::MatrixXd dec_w1;               // hidden × 3·hidden
  Eigen::MatrixXd dec_b1;               // hidden × 1
  Eigen::MatrixXd dec_gamma, dec_beta;  // hidden × 1
  Eigen::MatrixXd dec_w2;               // 1 × hidden
  Eigen::MatrixXd dec_b2;               // 1 × 1

  /// Fan-in scaled uniform initialization; biases zero, LayerNorm gains one.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& cfg);

  void for_each_tensor(const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const;
  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Message-passing context: which undirected edges propagate features and
/// which feature rows back the imputation mean (Eq.-style mean over the
/// processed context edges).
struct GraphContext {
  const GraphSample* sample = nullptr;
  std::vector<NodePair> message_edges;  // subset of sample->und_edges

  GraphContext() = default;
  GraphContext(const GraphSample& s, std::vector<NodePair> msg)
      : sample(&s), message_edges(std::move(msg)) {}
  /// Context over every edge of the sample.
  explicit GraphContext(const GraphSample& s)
      : sample(&s), message_edges(s.und_edges) {}
};

/// Candidate pairs to score. feature_rows[i] indexes und_edge_features for
/// existing links, or -1 to use the imputed mean row.
struct LinkBatch {
  std::vector<NodePair> pairs;
  std::vector<int> feature_rows;
  Eigen::VectorXd labels;  // empty when only scoring

  static LinkBatch from_pairs(const GraphSample& sample,
                              const std::vector<NodePair>& pos,
                              const std::vector<NodePair>& neg);
};

/// Intermediates kept for the backward pass.
struct ForwardCache;

struct ForwardResult {
  Eigen::VectorXd logits;
  Eigen::MatrixXd h1;  // post transformer conv
  Eigen::MatrixXd h2;  // post GATv2
  std::shared_ptr<ForwardCache> cache;
};

/// Full forward pass over a candidate batch. `dropout_seed` fixes the
/// dropout masks, so replaying the same seed reproduces the same stochastic
/// function (used by the finite-difference harness). Dropout is inactive
/// when training = false.
ForwardResult forward(const ModelParams& params, const GraphContext& ctx,
                      const LinkBatch& batch, bool training,
                      std::uint64_t dropout_seed = 0);

/// Mean binary cross-entropy in the numerically stable logit form.
/// Throws on an empty batch or mismatched lengths.
double bce_with_logits(const Eigen::VectorXd& logits,
                       const Eigen::VectorXd& labels);

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

/// Loss plus exact gradients for every tensor in ModelParams.
LossAndGrads loss_and_gradients(const ModelParams& params,
                                const GraphContext& ctx, const LinkBatch& batch,
                                bool training, std::uint64_t dropout_seed = 0);

// --- standalone layer entry points (shared with the fused pipeline) ---

/// Multi-head scaled dot-product attention over in-neighbors plus self-loop,
/// concatenated heads, ReLU. Optionally returns per-node attention rows
/// (aligned with the neighbor lists used internally: sorted neighbors then
/// self).
Eigen::MatrixXd transformer_conv(const ModelParams& params,
                                 const Eigen::MatrixXd& X,
                                 const std::vector<NodePair>& und_edges,
                                 std::vector<std::vector<double>>* attention = nullptr);

/// GATv2 layer: aᵀ LeakyReLU(W_l h_i + W_r h_j + b), softmax per
/// neighborhood (self-loops included), per-head ELU, concatenation.
Eigen::MatrixXd gatv2_conv(const ModelParams& params, const Eigen::MatrixXd& H1,
                           const std::vector<NodePair>& und_edges,
                           std::vector<std::vector<double>>* attention = nullptr);

Eigen::MatrixXd edge_mlp(const ModelParams& params, const Eigen::MatrixXd& E,
                         bool training, std::uint64_t dropout_seed = 0);

/// Arithmetic mean over processed edge-feature rows. Throws on zero rows.
Eigen::RowVectorXd impute_negative_edge_features(const Eigen::MatrixXd& processed);

double decode(const ModelParams& params, const Eigen::RowVectorXd& z_u,
              const Eigen::RowVectorXd& z_v, const Eigen::RowVectorXd& e_uv,
              bool training, std::uint64_t dropout_seed = 0);

/// Row-wise layer normalization (biased variance, epsilon-stabilized).
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& X, const Eigen::MatrixXd& gamma,
                           const Eigen::MatrixXd& beta, double epsilon);

/// Versioned checkpoint: parameter name → shape + row-major float64 payload,
/// with the ModelConfig embedded. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace qkdlab
