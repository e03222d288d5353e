#include "step/classifier.hpp"

#include <cmath>

namespace step {

void ClfConfig::validate() const {
  check_value(frames >= 4, "classifier needs at least 4 frames");
  check_value(temporal_kernel >= 1 && temporal_kernel % 2 == 1,
              "temporal kernel must be odd");
}

Emotion predict_class(const Tensor& logits, int row) {
  check_shape(logits.rank() == 2 && logits.dim(1) == kNumEmotions,
              "predict expects [N,4] logits, got " + logits.shape_str());
  check_value(row >= 0 && row < logits.dim(0), "logit row out of range");
  int best = 0;
  for (int j = 0; j < kNumEmotions; ++j) {
    double v = logits.at2(row, j);
    check_data(std::isfinite(v), "non-finite logit");
    if (v > double(logits.at2(row, best))) best = j;
  }
  return emotion_from_index(best);
}

StepClf::StepClf(const ClfConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  RngStream init(init_seed, "init");
  ParamFactory pf{store_, &trainable_, &init, &persistent_};
  build_with(pf);
}

StepClf::StepClf(const ClfConfig& cfg, Bindings params)
    : cfg_(cfg), store_(std::move(params)) {
  cfg_.validate();
  ParamFactory pf{store_, &trainable_, nullptr, &persistent_};
  build_with(pf);
}

void StepClf::build_with(ParamFactory& pf) {
  Graph& g = graph_;
  Expr adj = adjacency_const(g);

  BlockConfig blk;
  blk.temporal_kernel = cfg_.temporal_kernel;
  blk.in_channels = 3;
  blk.out_channels = 32;
  Expr h = st_graph_block(g, pf, "clf/blk1", g.var("x"), adj, blk);
  blk.in_channels = 32;
  blk.out_channels = 64;
  h = st_graph_block(g, pf, "clf/blk2", h, adj, blk);
  blk.in_channels = 64;
  blk.out_channels = 64;
  h = st_graph_block(g, pf, "clf/blk3", h, adj, blk);

  h = mean_pool(g, h, {2, 3});  // [N,64,1,1]
  h = pointwise_conv(g, pf, "clf/head", h, 64, kPenultimateDim, false);
  h = batchnorm_layer(g, pf, "clf/head", h, kPenultimateDim);
  h = relu(g, h);
  Expr penult = reshape(g, h, {-1, kPenultimateDim});

  Expr base = dense(g, pf, "clf/fc", penult, kPenultimateDim, kNumEmotions,
                    true);

  Expr hyb_in = concat(g, {penult, g.var("affect_std")}, 1);
  Expr hyb = dense(g, pf, "clf/hyb1", hyb_in, kPenultimateDim + kAffectiveDim,
                   kHybridHidden, true);
  hyb = dense(g, pf, "clf/hyb2", relu(g, hyb), kHybridHidden, kNumEmotions,
              true);

  // Standardization statistics travel with the parameters but are
  // computed from data, not by gradient descent.
  pf.state(g, "affect/mean", {kAffectiveDim}, 0);
  pf.state(g, "affect/std", {kAffectiveDim}, 1);

  nodes_.baseline_logits = base;
  nodes_.hybrid_logits = hyb;
  nodes_.logits = cfg_.hybrid ? hyb : base;
  nodes_.penult = penult;
  nodes_.xent = softmax_xent(g, nodes_.logits, g.var("labels"));
}

void StepClf::set_affect_stats(const Tensor& mean, const Tensor& stddev) {
  check_shape(mean.shape() == std::vector<int>{kAffectiveDim} &&
                  stddev.shape() == std::vector<int>{kAffectiveDim},
              "affect stats must be 29-vectors");
  Tensor fixed = stddev;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    check_data(std::isfinite(double(mean[i])) &&
                   std::isfinite(double(fixed[i])) && fixed[i] >= 0,
               "invalid affect statistics");
    if (fixed[i] < real(1e-6)) fixed[i] = 1;
  }
  store_["affect/mean"] = mean;
  store_["affect/std"] = fixed;
}

Tensor StepClf::standardize_affect(const Tensor& raw) const {
  check_shape(raw.rank() == 2 && raw.dim(1) == kAffectiveDim,
              "affect batch must be [N,29], got " + raw.shape_str());
  const Tensor& mean = store_.at("affect/mean");
  const Tensor& stddev = store_.at("affect/std");
  Tensor out = raw;
  for (int i = 0; i < raw.dim(0); ++i) {
    for (int j = 0; j < kAffectiveDim; ++j) {
      out.at2(i, j) = (raw.at2(i, j) - mean[static_cast<std::size_t>(j)]) /
                      stddev[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

Tensor StepClf::logits_for(const std::vector<GaitSequence>& data,
                           const std::vector<int>& rows) {
  store_["x"] = batch_positions(data, rows, cfg_.frames);
  if (cfg_.hybrid) {
    std::vector<GaitSequence> picked;
    picked.reserve(rows.size());
    for (int r : rows) picked.push_back(data[static_cast<std::size_t>(r)]);
    store_["affect_std"] = standardize_affect(affective_matrix(picked));
  }
  graph_.set_training(false);
  Tensor out = graph_.forward(nodes_.logits, store_);
  store_.erase("x");
  store_.erase("affect_std");
  return out;
}

std::vector<Emotion> StepClf::predict(const std::vector<GaitSequence>& data,
                                      const std::vector<int>& rows) {
  Tensor lg = logits_for(data, rows);
  std::vector<Emotion> out;
  out.reserve(rows.size());
  for (int i = 0; i < lg.dim(0); ++i) out.push_back(predict_class(lg, i));
  return out;
}

}  // namespace step
