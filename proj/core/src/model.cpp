#include "qkdlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "qkdlab/rng.hpp"

namespace qkdlab {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

void ModelConfig::validate() const {
  if (d_in < 1 || d_e < 1) throw std::invalid_argument("model: feature dims must be >= 1");
  if (hidden < 1 || heads < 1) throw std::invalid_argument("model: hidden/heads must be >= 1");
  if (hidden % heads != 0)
    throw std::invalid_argument("model: hidden must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("model: dropout must lie in [0,1)");
  if (!(leaky_relu_slope > 0.0 && leaky_relu_slope < 1.0))
    throw std::invalid_argument("model: leaky_relu_slope must lie in (0,1)");
  if (!(layernorm_epsilon > 0.0))
    throw std::invalid_argument("model: layernorm_epsilon must be positive");
}

namespace {

struct TensorSpec {
  const char* name;
  int rows;
  int cols;
  int fan_in;  // 0: zero init, -1: ones init
};

std::vector<TensorSpec> tensor_specs(const ModelConfig& c) {
  const int h = c.hidden;
  return {
      {"tc_wq", h, c.d_in, c.d_in},   {"tc_wk", h, c.d_in, c.d_in},
      {"tc_wv", h, c.d_in, c.d_in},   {"tc_bq", h, 1, 0},
      {"tc_bk", h, 1, 0},             {"tc_bv", h, 1, 0},
      {"tc_bias", h, 1, 0},           {"ga_wl", h, h, h},
      {"ga_wr", h, h, h},             {"ga_att", h, 1, c.head_dim()},
      {"ga_battn", h, 1, 0},          {"ga_bias", h, 1, 0},
      {"em_w1", h, c.d_e, c.d_e},     {"em_b1", h, 1, 0},
      {"em_gamma", h, 1, -1},         {"em_beta", h, 1, 0},
      {"em_w2", h, h, h},             {"em_b2", h, 1, 0},
      {"dec_w1", h, 3 * h, 3 * h},    {"dec_b1", h, 1, 0},
      {"dec_gamma", h, 1, -1},        {"dec_beta", h, 1, 0},
      {"dec_w2", 1, h, h},            {"dec_b2", 1, 1, 0},
  };
}

template <class Params, class Fn>
void visit_tensors(Params& p, Fn&& fn) {
  fn("tc_wq", p.tc_wq);
  fn("tc_wk", p.tc_wk);
  fn("tc_wv", p.tc_wv);
  fn("tc_bq", p.tc_bq);
  fn("tc_bk", p.tc_bk);
  fn("tc_bv", p.tc_bv);
  fn("tc_bias", p.tc_bias);
  fn("ga_wl", p.ga_wl);
  fn("ga_wr", p.ga_wr);
  fn("ga_att", p.ga_att);
  fn("ga_battn", p.ga_battn);
  fn("ga_bias", p.ga_bias);
  fn("em_w1", p.em_w1);
  fn("em_b1", p.em_b1);
  fn("em_gamma", p.em_gamma);
  fn("em_beta", p.em_beta);
  fn("em_w2", p.em_w2);
  fn("em_b2", p.em_b2);
  fn("dec_w1", p.dec_w1);
  fn("dec_b1", p.dec_b1);
  fn("dec_gamma", p.dec_gamma);
  fn("dec_beta", p.dec_beta);
  fn("dec_w2", p.dec_w2);
  fn("dec_b2", p.dec_b2);
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  std::unordered_map<std::string, TensorSpec> specs;
  for (const TensorSpec& s : tensor_specs(cfg)) specs.emplace(s.name, s);
  visit_tensors(p, [&](const std::string& name, MatrixXd& t) {
    const TensorSpec& s = specs.at(name);
    t = MatrixXd::Zero(s.rows, s.cols);
  });
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  std::unordered_map<std::string, TensorSpec> specs;
  for (const TensorSpec& s : tensor_specs(cfg)) specs.emplace(s.name, s);
  Rng rng(Rng::mix(seed, 0x1417ULL));
  visit_tensors(p, [&](const std::string& name, MatrixXd& t) {
    const TensorSpec& s = specs.at(name);
    if (s.fan_in == -1) {
      t.setOnes();
    } else if (s.fan_in > 0) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c)
          t(r, c) = rng.uniform(-bound, bound);
    }
  });
  return p;
}

void ModelParams::for_each_tensor(
    const std::function<void(const std::string&, MatrixXd&)>& fn) {
  visit_tensors(*this, fn);
}

void ModelParams::for_each_tensor(
    const std::function<void(const std::string&, const MatrixXd&)>& fn) const {
  visit_tensors(*this, fn);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t count = 0;
  for_each_tensor([&](const std::string&, const MatrixXd& t) { count += t.size(); });
  return count;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](const std::string&, const MatrixXd& t) {
    if (!t.allFinite()) ok = false;
  });
  return ok;
}

// ---------------------------------------------------------------------------
// forward plumbing
// ---------------------------------------------------------------------------

namespace {

/// Per-node in-neighbors (sorted) with the self-loop appended last.
std::vector<std::vector<int>> neighbor_lists(int n, const std::vector<NodePair>& und_edges) {
  std::vector<std::vector<int>> nbr(n);
  for (const auto& [u, v] : und_edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw std::out_of_range("graph context: node id out of range");
    nbr[u].push_back(v);
    nbr[v].push_back(u);
  }
  for (int i = 0; i < n; ++i) {
    std::sort(nbr[i].begin(), nbr[i].end());
    nbr[i].erase(std::unique(nbr[i].begin(), nbr[i].end()), nbr[i].end());
    nbr[i].push_back(i);
  }
  return nbr;
}

struct LayerNormCache {
  MatrixXd xhat;
  VectorXd invstd;
};

MatrixXd ln_forward(const MatrixXd& x, const MatrixXd& gamma, const MatrixXd& beta,
                    double eps, LayerNormCache* cache) {
  const Eigen::Index m = x.rows(), d = x.cols();
  MatrixXd out(m, d);
  if (cache) {
    cache->xhat.resize(m, d);
    cache->invstd.resize(m);
  }
  for (Eigen::Index r = 0; r < m; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double invstd = 1.0 / std::sqrt(var + eps);
    RowVectorXd xhat = (x.row(r).array() - mu).matrix() * invstd;
    out.row(r) =
        (xhat.array() * gamma.col(0).transpose().array()).matrix() + beta.col(0).transpose();
    if (cache) {
      cache->xhat.row(r) = xhat;
      cache->invstd(r) = invstd;
    }
  }
  return out;
}

MatrixXd ln_backward(const MatrixXd& dout, const LayerNormCache& cache,
                     const MatrixXd& gamma, MatrixXd& dgamma, MatrixXd& dbeta) {
  const Eigen::Index m = dout.rows(), d = dout.cols();
  MatrixXd din(m, d);
  for (Eigen::Index r = 0; r < m; ++r) {
    RowVectorXd g =
        (dout.row(r).array() * gamma.col(0).transpose().array()).matrix();
    const double m1 = g.mean();
    const double m2 = (g.array() * cache.xhat.row(r).array()).mean();
    din.row(r) =
        cache.invstd(r) *
        (g.array() - m1 - cache.xhat.row(r).array() * m2).matrix();
    dgamma.col(0) += (dout.row(r).array() * cache.xhat.row(r).array()).matrix().transpose();
    dbeta.col(0) += dout.row(r).transpose();
  }
  return din;
}

/// Row-shared dropout: every feature of a row is kept or zeroed together.
VectorXd dropout_scales(Eigen::Index rows, double p, bool training, Rng& rng) {
  VectorXd scale = VectorXd::Ones(rows);
  if (!training || p <= 0.0) return scale;
  const double keep = 1.0 - p;
  for (Eigen::Index r = 0; r < rows; ++r)
    scale(r) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return scale;
}

struct TcCache {
  MatrixXd Q, K, V;                         // n × hidden
  std::vector<MatrixXd> alpha;              // per node: heads × |nbr|
  MatrixXd h1;                              // post-ReLU
};

MatrixXd tc_forward(const ModelParams& p, const MatrixXd& X,
                    const std::vector<std::vector<int>>& nbr, TcCache* cache) {
  const ModelConfig& c = p.config;
  const int n = static_cast<int>(X.rows());
  const int dh = c.head_dim();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixXd Q = (X * p.tc_wq.transpose()).rowwise() + p.tc_bq.col(0).transpose();
  MatrixXd K = (X * p.tc_wk.transpose()).rowwise() + p.tc_bk.col(0).transpose();
  MatrixXd V = (X * p.tc_wv.transpose()).rowwise() + p.tc_bv.col(0).transpose();

  MatrixXd msg = MatrixXd::Zero(n, c.hidden);
  std::vector<MatrixXd> alpha(n);
  for (int i = 0; i < n; ++i) {
    const auto& js = nbr[i];
    alpha[i].resize(c.heads, static_cast<Eigen::Index>(js.size()));
    for (int h = 0; h < c.heads; ++h) {
      const int hb = h * dh;
      Eigen::VectorXd logits(js.size());
      for (std::size_t a = 0; a < js.size(); ++a)
        logits(a) = Q.row(i).segment(hb, dh).dot(K.row(js[a]).segment(hb, dh)) * inv_sqrt_d;
      const double mx = logits.maxCoeff();
      Eigen::VectorXd w = (logits.array() - mx).exp();
      w /= w.sum();
      alpha[i].row(h) = w.transpose();
      for (std::size_t a = 0; a < js.size(); ++a)
        msg.row(i).segment(hb, dh) += w(a) * V.row(js[a]).segment(hb, dh);
    }
  }
  MatrixXd pre = msg.rowwise() + p.tc_bias.col(0).transpose();
  MatrixXd h1 = pre.cwiseMax(0.0);
  if (cache) {
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    cache->alpha = std::move(alpha);
    cache->h1 = h1;
  }
  return h1;
}

struct GaCache {
  MatrixXd Pl, Pr;              // n × hidden
  std::vector<MatrixXd> alpha;  // per node: heads × |nbr|
  MatrixXd aggb;                // pre-ELU
  MatrixXd h2;
};

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad_from_pre(double pre) { return pre > 0.0 ? 1.0 : std::exp(pre); }

MatrixXd ga_forward(const ModelParams& p, const MatrixXd& H1,
                    const std::vector<std::vector<int>>& nbr, GaCache* cache) {
  const ModelConfig& c = p.config;
  const int n = static_cast<int>(H1.rows());
  const int dh = c.head_dim();
  const double slope = c.leaky_relu_slope;

  MatrixXd Pl = H1 * p.ga_wl.transpose();
  MatrixXd Pr = H1 * p.ga_wr.transpose();

  MatrixXd agg = MatrixXd::Zero(n, c.hidden);
  std::vector<MatrixXd> alpha(n);
  for (int i = 0; i < n; ++i) {
    const auto& js = nbr[i];
    alpha[i].resize(c.heads, static_cast<Eigen::Index>(js.size()));
    for (int h = 0; h < c.heads; ++h) {
      const int hb = h * dh;
      Eigen::VectorXd logits(js.size());
      for (std::size_t a = 0; a < js.size(); ++a) {
        RowVectorXd pre = Pl.row(i).segment(hb, dh) + Pr.row(js[a]).segment(hb, dh) +
                          p.ga_battn.col(0).transpose().segment(hb, dh);
        RowVectorXd g = pre.unaryExpr(
            [slope](double x) { return x > 0.0 ? x : slope * x; });
        logits(a) = g.dot(p.ga_att.col(0).segment(hb, dh));
      }
      const double mx = logits.maxCoeff();
      Eigen::VectorXd w = (logits.array() - mx).exp();
      w /= w.sum();
      alpha[i].row(h) = w.transpose();
      for (std::size_t a = 0; a < js.size(); ++a)
        agg.row(i).segment(hb, dh) += w(a) * Pr.row(js[a]).segment(hb, dh);
    }
  }
  MatrixXd aggb = agg.rowwise() + p.ga_bias.col(0).transpose();
  MatrixXd h2 = aggb.unaryExpr([](double x) { return elu(x); });
  if (cache) {
    cache->Pl = std::move(Pl);
    cache->Pr = std::move(Pr);
    cache->alpha = std::move(alpha);
    cache->aggb = std::move(aggb);
    cache->h2 = h2;
  }
  return h2;
}

struct EdgeMlpCache {
  MatrixXd input;  // rows × d_e
  MatrixXd t1;     // pre-LN
  LayerNormCache ln;
  MatrixXd t2;     // post-LN affine (ReLU mask source)
  VectorXd drop;   // per-row dropout scale
  MatrixXd t4;     // input of W2
  MatrixXd out;
};

MatrixXd em_forward(const ModelParams& p, const MatrixXd& E, bool training,
                    Rng& drop_rng, EdgeMlpCache* cache) {
  const ModelConfig& c = p.config;
  MatrixXd t1 = (E * p.em_w1.transpose()).rowwise() + p.em_b1.col(0).transpose();
  LayerNormCache ln;
  MatrixXd t2 = ln_forward(t1, p.em_gamma, p.em_beta, c.layernorm_epsilon, &ln);
  MatrixXd t3 = t2.cwiseMax(0.0);
  VectorXd drop = dropout_scales(t3.rows(), c.dropout, training, drop_rng);
  MatrixXd t4 = drop.asDiagonal() * t3;
  MatrixXd out = (t4 * p.em_w2.transpose()).rowwise() + p.em_b2.col(0).transpose();
  if (cache) {
    cache->input = E;
    cache->t1 = std::move(t1);
    cache->ln = std::move(ln);
    cache->t2 = std::move(t2);
    cache->drop = std::move(drop);
    cache->t4 = std::move(t4);
    cache->out = out;
  }
  return out;
}

void em_backward(const ModelParams& p, const EdgeMlpCache& cache, const MatrixXd& dout,
                 ModelParams& g) {
  g.em_w2 += dout.transpose() * cache.t4;
  g.em_b2.col(0) += dout.colwise().sum().transpose();
  MatrixXd dt4 = dout * p.em_w2;
  MatrixXd dt3 = cache.drop.asDiagonal() * dt4;
  MatrixXd dt2 =
      (cache.t2.array() > 0.0).cast<double>().matrix().cwiseProduct(dt3);
  MatrixXd dt1 = ln_backward(dt2, cache.ln, p.em_gamma, g.em_gamma, g.em_beta);
  g.em_w1 += dt1.transpose() * cache.input;
  g.em_b1.col(0) += dt1.colwise().sum().transpose();
}

struct DecoderCache {
  MatrixXd input;  // rows × 3·hidden
  MatrixXd t1;
  LayerNormCache ln;
  MatrixXd t2;
  VectorXd drop;
  MatrixXd t4;
  VectorXd out;  // raw per-row logits (pre symmetrization)
};

VectorXd dec_forward(const ModelParams& p, const MatrixXd& C, bool training,
                     Rng& drop_rng, DecoderCache* cache) {
  const ModelConfig& c = p.config;
  MatrixXd t1 = (C * p.dec_w1.transpose()).rowwise() + p.dec_b1.col(0).transpose();
  LayerNormCache ln;
  MatrixXd t2 = ln_forward(t1, p.dec_gamma, p.dec_beta, c.layernorm_epsilon, &ln);
  MatrixXd t3 = t2.cwiseMax(0.0);
  VectorXd drop = dropout_scales(t3.rows(), c.dropout, training, drop_rng);
  MatrixXd t4 = drop.asDiagonal() * t3;
  VectorXd out = (t4 * p.dec_w2.transpose()).col(0).array() + p.dec_b2(0, 0);
  if (cache) {
    cache->input = C;
    cache->t1 = std::move(t1);
    cache->ln = std::move(ln);
    cache->t2 = std::move(t2);
    cache->drop = std::move(drop);
    cache->t4 = std::move(t4);
    cache->out = out;
  }
  return out;
}

MatrixXd dec_backward(const ModelParams& p, const DecoderCache& cache, const VectorXd& ds,
                      ModelParams& g) {
  g.dec_w2 += ds.transpose() * cache.t4;
  g.dec_b2(0, 0) += ds.sum();
  MatrixXd dt4 = ds * p.dec_w2;
  MatrixXd dt3 = cache.drop.asDiagonal() * dt4;
  MatrixXd dt2 =
      (cache.t2.array() > 0.0).cast<double>().matrix().cwiseProduct(dt3);
  MatrixXd dt1 = ln_backward(dt2, cache.ln, p.dec_gamma, g.dec_gamma, g.dec_beta);
  g.dec_w1 += dt1.transpose() * cache.input;
  g.dec_b1.col(0) += dt1.colwise().sum().transpose();
  return dt1 * p.dec_w1;  // gradient w.r.t. C
}

}  // namespace

struct ForwardCache {
  std::vector<std::vector<int>> nbr;
  TcCache tc;
  GaCache ga;
  EdgeMlpCache em;
  DecoderCache dec;
  std::vector<int> row_position;   // batch item → row in em.input, -1 = imputed
  int context_rows = 0;            // rows of em.* backing the imputation mean
  bool any_imputed = false;
  RowVectorXd imputed;
  int batch_size = 0;
  bool symmetrized = false;
};

namespace {

/// Assembles edge-MLP input rows: context (message) edges first, then any
/// extra candidate rows, deduplicated.
void gather_edge_rows(const GraphContext& ctx, const LinkBatch& batch,
                      MatrixXd& e_in, std::vector<int>& row_position,
                      int& context_rows) {
  const GraphSample& s = *ctx.sample;
  std::unordered_map<int, int> pos_of_row;
  std::vector<int> rows;
  rows.reserve(ctx.message_edges.size());
  for (const auto& [u, v] : ctx.message_edges) {
    int r = s.und_row_of(u, v);
    if (r < 0)
      throw std::invalid_argument("graph context: message edge is not an edge of the sample");
    if (pos_of_row.emplace(r, static_cast<int>(rows.size())).second) rows.push_back(r);
  }
  context_rows = static_cast<int>(rows.size());

  row_position.assign(batch.pairs.size(), -1);
  for (std::size_t t = 0; t < batch.pairs.size(); ++t) {
    int fr = batch.feature_rows[t];
    if (fr < 0) continue;
    auto [it, inserted] = pos_of_row.emplace(fr, static_cast<int>(rows.size()));
    if (inserted) rows.push_back(fr);
    row_position[t] = it->second;
  }

  e_in.resize(static_cast<Eigen::Index>(rows.size()), s.und_edge_features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    e_in.row(static_cast<Eigen::Index>(i)) = s.und_edge_features.row(rows[i]);
}

}  // namespace

LinkBatch LinkBatch::from_pairs(const GraphSample& sample,
                                const std::vector<NodePair>& pos,
                                const std::vector<NodePair>& neg) {
  LinkBatch b;
  b.pairs.reserve(pos.size() + neg.size());
  b.feature_rows.reserve(pos.size() + neg.size());
  b.labels.resize(static_cast<Eigen::Index>(pos.size() + neg.size()));
  Eigen::Index i = 0;
  for (const auto& pr : pos) {
    b.pairs.push_back(pr);
    b.feature_rows.push_back(sample.und_row_of(pr.first, pr.second));
    b.labels(i++) = 1.0;
  }
  for (const auto& pr : neg) {
    b.pairs.push_back(pr);
    b.feature_rows.push_back(sample.und_row_of(pr.first, pr.second));
    b.labels(i++) = 0.0;
  }
  return b;
}

ForwardResult forward(const ModelParams& params, const GraphContext& ctx,
                      const LinkBatch& batch, bool training,
                      std::uint64_t dropout_seed) {
  if (!ctx.sample) throw std::invalid_argument("forward: null sample in context");
  const GraphSample& s = *ctx.sample;
  const ModelConfig& c = params.config;
  const int n = s.num_nodes;
  if (s.node_features.cols() != c.d_in)
    throw std::invalid_argument("forward: node feature dim does not match config");
  for (const auto& [u, v] : batch.pairs)
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw std::out_of_range("forward: pair references unknown node id");

  auto cache = std::make_shared<ForwardCache>();
  cache->nbr = neighbor_lists(n, ctx.message_edges);
  cache->batch_size = static_cast<int>(batch.pairs.size());
  cache->symmetrized = c.symmetrize_decoder;

  MatrixXd h1 = tc_forward(params, s.node_features, cache->nbr, &cache->tc);
  MatrixXd h2 = ga_forward(params, h1, cache->nbr, &cache->ga);

  MatrixXd e_in;
  gather_edge_rows(ctx, batch, e_in, cache->row_position, cache->context_rows);

  Rng drop_rng(Rng::mix(dropout_seed, 0xD809ULL));
  MatrixXd e_proc = em_forward(params, e_in, training, drop_rng, &cache->em);

  cache->any_imputed = false;
  for (int rp : cache->row_position)
    if (rp < 0) cache->any_imputed = true;
  if (cache->any_imputed) {
    if (cache->context_rows == 0)
      throw std::invalid_argument(
          "forward: imputation requested but the context has no positive edges");
    cache->imputed =
        e_proc.topRows(cache->context_rows).colwise().mean();
  }

  const int B = cache->batch_size;
  const int rows = c.symmetrize_decoder ? 2 * B : B;
  MatrixXd C(rows, 3 * c.hidden);
  for (int t = 0; t < B; ++t) {
    const auto& [u, v] = batch.pairs[t];
    RowVectorXd e_row = cache->row_position[t] >= 0
                            ? RowVectorXd(e_proc.row(cache->row_position[t]))
                            : cache->imputed;
    if (c.symmetrize_decoder) {
      C.row(2 * t) << h2.row(u), h2.row(v), e_row;
      C.row(2 * t + 1) << h2.row(v), h2.row(u), e_row;
    } else {
      C.row(t) << h2.row(u), h2.row(v), e_row;
    }
  }
  VectorXd raw = dec_forward(params, C, training, drop_rng, &cache->dec);

  ForwardResult result;
  result.h1 = std::move(h1);
  result.h2 = std::move(h2);
  if (c.symmetrize_decoder) {
    result.logits.resize(B);
    for (int t = 0; t < B; ++t)
      result.logits(t) = 0.5 * (raw(2 * t) + raw(2 * t + 1));
  } else {
    result.logits = raw;
  }
  result.cache = std::move(cache);
  return result;
}

double bce_with_logits(const VectorXd& logits, const VectorXd& labels) {
  if (logits.size() == 0) throw std::invalid_argument("bce: empty batch");
  if (logits.size() != labels.size())
    throw std::invalid_argument("bce: logits/labels length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double s = logits(i), y = labels(i);
    total += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
  }
  return total / static_cast<double>(logits.size());
}

LossAndGrads loss_and_gradients(const ModelParams& params, const GraphContext& ctx,
                                const LinkBatch& batch, bool training,
                                std::uint64_t dropout_seed) {
  const ModelConfig& c = params.config;
  ForwardResult fwd = forward(params, ctx, batch, training, dropout_seed);
  ForwardCache& cache = *fwd.cache;
  const GraphSample& s = *ctx.sample;
  const int n = s.num_nodes;
  const int B = cache.batch_size;

  LossAndGrads out;
  out.loss = bce_with_logits(fwd.logits, batch.labels);
  out.grads = ModelParams::zeros(c);
  ModelParams& g = out.grads;

  // dL/ds = (sigmoid(s) - y) / B
  VectorXd dlogit(B);
  for (int t = 0; t < B; ++t) {
    const double sig = 1.0 / (1.0 + std::exp(-fwd.logits(t)));
    dlogit(t) = (sig - batch.labels(t)) / static_cast<double>(B);
  }
  VectorXd ds;
  if (cache.symmetrized) {
    ds.resize(2 * B);
    for (int t = 0; t < B; ++t) {
      ds(2 * t) = 0.5 * dlogit(t);
      ds(2 * t + 1) = 0.5 * dlogit(t);
    }
  } else {
    ds = dlogit;
  }

  MatrixXd dC = dec_backward(params, cache.dec, ds, g);

  MatrixXd dH2 = MatrixXd::Zero(n, c.hidden);
  MatrixXd dEproc = MatrixXd::Zero(cache.em.out.rows(), c.hidden);
  RowVectorXd dImp = RowVectorXd::Zero(c.hidden);
  for (int t = 0; t < B; ++t) {
    const auto& [u, v] = batch.pairs[t];
    auto route = [&](int row, int a, int b) {
      dH2.row(a) += dC.row(row).segment(0, c.hidden);
      dH2.row(b) += dC.row(row).segment(c.hidden, c.hidden);
      RowVectorXd de = dC.row(row).segment(2 * c.hidden, c.hidden);
      if (cache.row_position[t] >= 0)
        dEproc.row(cache.row_position[t]) += de;
      else
        dImp += de;
    };
    if (cache.symmetrized) {
      route(2 * t, u, v);
      route(2 * t + 1, v, u);
    } else {
      route(t, u, v);
    }
  }
  if (cache.any_imputed && cache.context_rows > 0) {
    const double inv = 1.0 / static_cast<double>(cache.context_rows);
    for (int r = 0; r < cache.context_rows; ++r) dEproc.row(r) += dImp * inv;
  }

  em_backward(params, cache.em, dEproc, g);

  // --- GATv2 backward ---
  const int dh = c.head_dim();
  const double slope = c.leaky_relu_slope;
  MatrixXd dAggb =
      cache.ga.aggb.unaryExpr([](double x) { return elu_grad_from_pre(x); })
          .cwiseProduct(dH2);
  g.ga_bias.col(0) += dAggb.colwise().sum().transpose();

  MatrixXd dPl = MatrixXd::Zero(n, c.hidden);
  MatrixXd dPr = MatrixXd::Zero(n, c.hidden);
  for (int i = 0; i < n; ++i) {
    const auto& js = cache.nbr[i];
    for (int h = 0; h < c.heads; ++h) {
      const int hb = h * dh;
      RowVectorXd gi = dAggb.row(i).segment(hb, dh);
      const auto alpha = cache.ga.alpha[i].row(h);
      // message path + attention gradient
      Eigen::VectorXd dalpha(js.size());
      for (std::size_t a = 0; a < js.size(); ++a) {
        dalpha(a) = gi.dot(cache.ga.Pr.row(js[a]).segment(hb, dh));
        dPr.row(js[a]).segment(hb, dh) += alpha(a) * gi;
      }
      const double dot = (alpha.transpose().array() * dalpha.array()).sum();
      for (std::size_t a = 0; a < js.size(); ++a) {
        const double dl = alpha(a) * (dalpha(a) - dot);
        if (dl == 0.0) continue;
        RowVectorXd pre = cache.ga.Pl.row(i).segment(hb, dh) +
                          cache.ga.Pr.row(js[a]).segment(hb, dh) +
                          params.ga_battn.col(0).transpose().segment(hb, dh);
        RowVectorXd gvec =
            pre.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
        g.ga_att.col(0).segment(hb, dh) += dl * gvec.transpose();
        RowVectorXd dpre =
            (dl * params.ga_att.col(0).segment(hb, dh).transpose().array() *
             pre.unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; }).array())
                .matrix();
        g.ga_battn.col(0).segment(hb, dh) += dpre.transpose();
        dPl.row(i).segment(hb, dh) += dpre;
        dPr.row(js[a]).segment(hb, dh) += dpre;
      }
    }
  }
  g.ga_wl += dPl.transpose() * cache.tc.h1;
  g.ga_wr += dPr.transpose() * cache.tc.h1;
  MatrixXd dH1 = dPl * params.ga_wl + dPr * params.ga_wr;

  // --- transformer conv backward ---
  MatrixXd dU = (cache.tc.h1.array() > 0.0).cast<double>().matrix().cwiseProduct(dH1);
  g.tc_bias.col(0) += dU.colwise().sum().transpose();

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));
  MatrixXd dQ = MatrixXd::Zero(n, c.hidden);
  MatrixXd dK = MatrixXd::Zero(n, c.hidden);
  MatrixXd dV = MatrixXd::Zero(n, c.hidden);
  for (int i = 0; i < n; ++i) {
    const auto& js = cache.nbr[i];
    for (int h = 0; h < c.heads; ++h) {
      const int hb = h * dh;
      RowVectorXd gi = dU.row(i).segment(hb, dh);
      const auto alpha = cache.tc.alpha[i].row(h);
      Eigen::VectorXd dalpha(js.size());
      for (std::size_t a = 0; a < js.size(); ++a) {
        dalpha(a) = gi.dot(cache.tc.V.row(js[a]).segment(hb, dh));
        dV.row(js[a]).segment(hb, dh) += alpha(a) * gi;
      }
      const double dot = (alpha.transpose().array() * dalpha.array()).sum();
      for (std::size_t a = 0; a < js.size(); ++a) {
        const double dl = alpha(a) * (dalpha(a) - dot);
        if (dl == 0.0) continue;
        dQ.row(i).segment(hb, dh) +=
            dl * inv_sqrt_d * cache.tc.K.row(js[a]).segment(hb, dh);
        dK.row(js[a]).segment(hb, dh) +=
            dl * inv_sqrt_d * cache.tc.Q.row(i).segment(hb, dh);
      }
    }
  }
  const MatrixXd& X = s.node_features;
  g.tc_wq += dQ.transpose() * X;
  g.tc_wk += dK.transpose() * X;
  g.tc_wv += dV.transpose() * X;
  g.tc_bq.col(0) += dQ.colwise().sum().transpose();
  g.tc_bk.col(0) += dK.colwise().sum().transpose();
  g.tc_bv.col(0) += dV.colwise().sum().transpose();

  return out;
}

// ---------------------------------------------------------------------------
// standalone layer entry points
// ---------------------------------------------------------------------------

Eigen::MatrixXd transformer_conv(const ModelParams& params, const MatrixXd& X,
                                 const std::vector<NodePair>& und_edges,
                                 std::vector<std::vector<double>>* attention) {
  if (!X.allFinite()) throw std::invalid_argument("transformer_conv: non-finite input");
  auto nbr = neighbor_lists(static_cast<int>(X.rows()), und_edges);
  TcCache cache;
  MatrixXd h1 = tc_forward(params, X, nbr, &cache);
  if (attention) {
    attention->clear();
    for (const auto& a : cache.alpha) {
      // average over heads for inspection
      Eigen::RowVectorXd mean = a.colwise().mean();
      attention->emplace_back(mean.data(), mean.data() + mean.size());
    }
  }
  return h1;
}

Eigen::MatrixXd gatv2_conv(const ModelParams& params, const MatrixXd& H1,
                           const std::vector<NodePair>& und_edges,
                           std::vector<std::vector<double>>* attention) {
  if (!H1.allFinite()) throw std::invalid_argument("gatv2_conv: non-finite input");
  auto nbr = neighbor_lists(static_cast<int>(H1.rows()), und_edges);
  GaCache cache;
  MatrixXd h2 = ga_forward(params, H1, nbr, &cache);
  if (attention) {
    attention->clear();
    for (const auto& a : cache.alpha) {
      Eigen::RowVectorXd mean = a.colwise().mean();
      attention->emplace_back(mean.data(), mean.data() + mean.size());
    }
  }
  return h2;
}

Eigen::MatrixXd edge_mlp(const ModelParams& params, const MatrixXd& E, bool training,
                         std::uint64_t dropout_seed) {
  Rng rng(Rng::mix(dropout_seed, 0xD809ULL));
  return em_forward(params, E, training, rng, nullptr);
}

Eigen::RowVectorXd impute_negative_edge_features(const MatrixXd& processed) {
  if (processed.rows() == 0)
    throw std::invalid_argument("impute: zero positive edges");
  return processed.colwise().mean();
}

double decode(const ModelParams& params, const RowVectorXd& z_u,
              const RowVectorXd& z_v, const RowVectorXd& e_uv, bool training,
              std::uint64_t dropout_seed) {
  const ModelConfig& c = params.config;
  if (z_u.size() != c.hidden || z_v.size() != c.hidden || e_uv.size() != c.hidden)
    throw std::invalid_argument("decode: dimension mismatch");
  Rng rng(Rng::mix(dropout_seed, 0xDECULL));
  if (c.symmetrize_decoder) {
    MatrixXd C(2, 3 * c.hidden);
    C.row(0) << z_u, z_v, e_uv;
    C.row(1) << z_v, z_u, e_uv;
    VectorXd s = dec_forward(params, C, training, rng, nullptr);
    return 0.5 * (s(0) + s(1));
  }
  MatrixXd C(1, 3 * c.hidden);
  C.row(0) << z_u, z_v, e_uv;
  return dec_forward(params, C, training, rng, nullptr)(0);
}

Eigen::MatrixXd layer_norm(const MatrixXd& X, const MatrixXd& gamma,
                           const MatrixXd& beta, double epsilon) {
  return ln_forward(X, gamma, beta, epsilon, nullptr);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelParams& params) {
  nlohmann::json j;
  j["format"] = "qkdlab.checkpoint";
  j["version"] = 1;
  j["model_config"] = {
      {"d_in", params.config.d_in},
      {"d_e", params.config.d_e},
      {"hidden", params.config.hidden},
      {"heads", params.config.heads},
      {"dropout", params.config.dropout},
      {"leaky_relu_slope", params.config.leaky_relu_slope},
      {"layernorm_epsilon", params.config.layernorm_epsilon},
      {"symmetrize_decoder", params.config.symmetrize_decoder},
  };
  nlohmann::json tensors;
  params.for_each_tensor([&](const std::string& name, const MatrixXd& t) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
    tensors[name] = {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(data)}};
  });
  j["tensors"] = std::move(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "qkdlab.checkpoint")
    throw std::invalid_argument("checkpoint: unrecognized format");
  if (j.value("version", 0) != 1)
    throw std::invalid_argument("checkpoint: unsupported version");

  ModelConfig cfg;
  const auto& mc = j.at("model_config");
  cfg.d_in = mc.at("d_in").get<int>();
  cfg.d_e = mc.at("d_e").get<int>();
  cfg.hidden = mc.at("hidden").get<int>();
  cfg.heads = mc.at("heads").get<int>();
  cfg.dropout = mc.at("dropout").get<double>();
  cfg.leaky_relu_slope = mc.at("leaky_relu_slope").get<double>();
  cfg.layernorm_epsilon = mc.at("layernorm_epsilon").get<double>();
  cfg.symmetrize_decoder = mc.value("symmetrize_decoder", false);

  ModelParams params = ModelParams::zeros(cfg);
  const auto& tensors = j.at("tensors");
  params.for_each_tensor([&](const std::string& name, MatrixXd& t) {
    const auto& tj = tensors.at(name);
    const Eigen::Index rows = tj.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = tj.at("cols").get<Eigen::Index>();
    if (rows != t.rows() || cols != t.cols())
      throw std::invalid_argument("checkpoint: shape mismatch for " + name);
    const auto& data = tj.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw std::invalid_argument("checkpoint: payload size mismatch for " + name);
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = data[i++].get<double>();
  });
  return params;
}

}  // namespace qkdlab
