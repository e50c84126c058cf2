#include "qkdlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qkdlab {

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y != 0);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auc: both classes must be present");

  // Mann-Whitney U via average ranks; tie groups share the mean rank, which
  // assigns ties exactly half credit.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]] != 0) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("ap: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y != 0);
  if (n_pos == 0) throw std::invalid_argument("ap: no positives present");

  // Descending by score; ties resolved by the stable input order.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t seen_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[idx[k]] != 0) {
      ++seen_pos;
      ap += static_cast<double>(seen_pos) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

std::vector<LinkScore> score_pairs(const ModelParams& params, const GraphSample& sample,
                                   const std::vector<NodePair>& pairs,
                                   const std::vector<NodePair>* message_edges) {
  if (pairs.empty()) return {};
  GraphContext ctx = message_edges ? GraphContext(sample, *message_edges)
                                   : GraphContext(sample);
  LinkBatch batch;
  batch.pairs = pairs;
  batch.feature_rows.reserve(pairs.size());
  for (const auto& [u, v] : pairs)
    batch.feature_rows.push_back(sample.und_row_of(u, v));

  ForwardResult fwd = forward(params, ctx, batch, /*training=*/false);
  std::vector<LinkScore> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i].pair = pairs[i];
    out[i].logit = fwd.logits(static_cast<Eigen::Index>(i));
    out[i].probability = 1.0 / (1.0 + std::exp(-out[i].logit));
  }
  return out;
}

MetricReport evaluate_pairs(const ModelParams& params, const GraphSample& sample,
                            const std::vector<NodePair>& positives,
                            const std::vector<NodePair>& negatives,
                            const std::vector<NodePair>* message_edges) {
  std::vector<NodePair> pairs = positives;
  pairs.insert(pairs.end(), negatives.begin(), negatives.end());
  std::vector<LinkScore> scored = score_pairs(params, sample, pairs, message_edges);
  std::vector<double> scores(scored.size());
  std::vector<int> labels(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    scores[i] = scored[i].probability;
    labels[i] = i < positives.size() ? 1 : 0;
  }
  MetricReport report;
  report.n_pos = static_cast<int>(positives.size());
  report.n_neg = static_cast<int>(negatives.size());
  report.auc = auc_score(scores, labels);
  report.ap = average_precision(scores, labels);
  return report;
}

}  // namespace qkdlab
