#pragma once

#include <utility>
#include <vector>

#include "step/skeleton.hpp"
#include "step/stgcn.hpp"

namespace step {

// Conditional VAE over gait sequences. The encoder compresses a labeled
// walk into a 32-dim latent; the decoder reconstructs positions from the
// latent plus the label one-hot. Losses pull the reconstruction toward the
// real sequence in position, velocity/acceleration, and anchor-relative
// displacement.
struct GenConfig {
  int frames = 75;
  int latent_dim = 32;
  int temporal_kernel = 9;
  double lambda_motion = 1.0;  // weight of the velocity/acceleration term
  double lambda_anchor = 1.0;  // weight of the anchor-offset term
  double beta_kl = 1.0;
  double frame_rate_hz = 25.0;

  void validate() const;
};

// Anchor frames (0-based): first, ceil(T/2)-th, and last frame.
std::vector<int> anchor_frames(int frames);

// Loss terms on [N,3,T,V] tensors; all of them sum over the batch.
double reconstruction_loss(const Tensor& real, const Tensor& synth);
double derivative_match_loss(const Tensor& real, const Tensor& synth);
double anchor_offset_loss(const Tensor& real, const Tensor& synth);

class StepGen {
 public:
  // Fresh network, weights drawn from RngStream(seed, "init").
  StepGen(const GenConfig& cfg, std::uint64_t init_seed);
  // Rebuild around existing parameters (e.g. from a checkpoint). Missing
  // or mis-shaped entries are an error.
  StepGen(const GenConfig& cfg, Bindings params);

  const GenConfig& config() const { return cfg_; }
  Bindings& store() { return store_; }
  const Bindings& store() const { return store_; }
  const std::vector<std::string>& trainable_names() const { return trainable_; }
  const std::vector<std::string>& persistent_names() const { return persistent_; }

  // Handles into the training graph. All loss nodes are batch sums; divide
  // by the batch size for per-sample means (or seed backward with 1/N).
  struct TrainNodes {
    Expr objective;  // recon + lm*motion + la*anchor + beta*kl
    Expr raw;        // recon + lm*motion + la*anchor
    Expr recon, motion, anchor, kl;
    Expr mu, logvar, z;  // posterior pieces [N,latent]
    Expr synth;          // decoder output [N,3,T,V]
  };
  // Feed: "enc_x" [N,7,T,V], "real" [N,3,T,V], "onehot" [N,4],
  // "noise" [N,latent].
  Graph& train_graph() { return train_graph_; }
  const TrainNodes& train_nodes() const { return nodes_; }

  // [N,3,T,V] from dataset rows; every gait must match config().frames.
  Tensor positions_batch(const std::vector<GaitSequence>& data,
                         const std::vector<int>& rows) const;
  // Positions plus the label broadcast as constant channels -> [N,7,T,V].
  Tensor encoder_input(const Tensor& positions,
                       const std::vector<int>& labels) const;
  static Tensor onehot(const std::vector<int>& labels);

  // Posterior parameters for dataset rows, eval mode: (mu, log_var) [N,L].
  std::pair<Tensor, Tensor> encode(const std::vector<GaitSequence>& data,
                                   const std::vector<int>& rows);
  // Decode latents under labels, eval mode -> [N,3,T,V].
  Tensor decode(const Tensor& z, const std::vector<int>& labels);
  // Sample `count` walks of one emotion. Noise is seeded per sample index,
  // so results do not depend on how the batch is split.
  std::vector<GaitSequence> generate(Emotion label, int count,
                                     std::uint64_t seed,
                                     std::uint64_t first_index = 0);

 private:
  void build_with(ParamFactory& pf);
  Expr encoder_trunk(Graph& g, ParamFactory& pf, Expr enc_x, Expr adj);
  Expr decoder_net(Graph& g, ParamFactory& pf, Expr z_and_label, Expr adj);

  GenConfig cfg_;
  Bindings store_;
  std::vector<std::string> trainable_;
  std::vector<std::string> persistent_;

  Graph train_graph_;
  TrainNodes nodes_;

  Graph enc_graph_;
  Expr enc_mu_, enc_logvar_, enc_both_;
  Graph dec_graph_;
  Expr dec_out_;
};

}  // namespace step
