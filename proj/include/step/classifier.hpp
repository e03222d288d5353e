#pragma once

#include <vector>

#include "step/affective.hpp"
#include "step/stgcn.hpp"

namespace step {

// Emotion classifier over gait sequences. The trunk is a three-layer
// spatial-temporal graph convolution stack (32, 64, 64 kernels) pooled over
// frames and joints into a 64-wide feature. Two heads share that trunk:
//   baseline: feature -> FC(4)
//   hybrid:   feature ++ standardized 29-dim affective vector
//             -> FC(128) -> ReLU -> FC(4)
// `hybrid` selects which head drives predictions and the training loss;
// both heads' parameters always exist so checkpoints are interchangeable.
struct ClfConfig {
  int frames = 75;
  int temporal_kernel = 9;
  bool hybrid = false;

  void validate() const;
};

constexpr int kPenultimateDim = 64;
constexpr int kHybridHidden = 128;

// Argmax with ties broken toward the lowest class index. `row` selects a
// row of an [N, 4] logit matrix. Non-finite logits are an error.
Emotion predict_class(const Tensor& logits, int row = 0);

class StepClf {
 public:
  StepClf(const ClfConfig& cfg, std::uint64_t init_seed);
  // Rebuild around existing parameters; missing entries are an error.
  StepClf(const ClfConfig& cfg, Bindings params);

  const ClfConfig& config() const { return cfg_; }
  Bindings& store() { return store_; }
  const Bindings& store() const { return store_; }
  const std::vector<std::string>& trainable_names() const { return trainable_; }
  const std::vector<std::string>& persistent_names() const { return persistent_; }

  struct Nodes {
    Expr baseline_logits, hybrid_logits;  // [N,4] each
    Expr logits;                          // the configured head
    Expr penult;                          // [N,64] shared feature
    Expr xent;                            // batch-sum cross entropy on logits
  };
  // Feed: "x" [N,3,T,V]; "affect_std" [N,29] (hybrid paths only);
  // "labels" [N] (loss only).
  Graph& graph() { return graph_; }
  const Nodes& nodes() const { return nodes_; }

  // Affective standardization. Stats live in the store ("affect/mean",
  // "affect/std") so checkpoints carry them; std entries below 1e-6 are
  // stored as 1 (a constant feature standardizes to exactly 0).
  void set_affect_stats(const Tensor& mean, const Tensor& stddev);
  Tensor standardize_affect(const Tensor& raw) const;

  // Eval-mode logits for dataset rows. Hybrid configs extract and
  // standardize the affective features internally.
  Tensor logits_for(const std::vector<GaitSequence>& data,
                    const std::vector<int>& rows);
  std::vector<Emotion> predict(const std::vector<GaitSequence>& data,
                               const std::vector<int>& rows);

 private:
  void build_with(ParamFactory& pf);

  ClfConfig cfg_;
  Bindings store_;
  std::vector<std::string> trainable_;
  std::vector<std::string> persistent_;
  Graph graph_;
  Nodes nodes_;
};

}  // namespace step
