#pragma once

#include <utility>
#include <vector>

#include "qkdlab/model.hpp"

namespace qkdlab {

struct MetricReport {
  double auc = 0.0;
  double ap = 0.0;
  int n_pos = 0;
  int n_neg = 0;
};

/// Probability that a random positive outranks a random negative; ties count
/// one half (normalized Mann-Whitney U). Throws when either class is absent.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

/// Step-wise area under the precision-recall curve; ties are broken by the
/// stable input order. Throws when no positive is present.
double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels);

struct LinkScore {
  NodePair pair;
  double logit = 0.0;
  double probability = 0.5;
};

/// Eval-mode forward over arbitrary candidate pairs. Existing edges use
/// their processed features, the rest the imputed mean. Message passing uses
/// `message_edges` when given, otherwise every edge of the sample. Throws on
/// out-of-range node ids.
std::vector<LinkScore> score_pairs(const ModelParams& params,
                                   const GraphSample& sample,
                                   const std::vector<NodePair>& pairs,
                                   const std::vector<NodePair>* message_edges = nullptr);

MetricReport evaluate_pairs(const ModelParams& params, const GraphSample& sample,
                            const std::vector<NodePair>& positives,
                            const std::vector<NodePair>& negatives,
                            const std::vector<NodePair>* message_edges = nullptr);

}  // namespace qkdlab
