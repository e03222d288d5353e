#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "step/classifier.hpp"
#include "step/stepgen.hpp"

namespace step {

// Hyperparameters for both training loops, loadable from a flat key=value
// file. Unknown keys are an error so typos cannot silently fall back to
// defaults.
struct TrainConfig {
  int batch_size = 8;
  int epochs = 150;
  double initial_lr = 0.1;
  std::vector<int> decay_epochs = {75, 113, 132};
  double decay_factor = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
  // Generator loss weights and architecture knobs.
  double lambda_motion = 1.0;
  double lambda_anchor = 1.0;
  double beta_kl = 1.0;
  int frames = 75;
  int temporal_kernel = 9;
  int latent_dim = 32;
  // Dataset split ratios (train/val/test), classifier loop only.
  double split_train = 0.7;
  double split_val = 0.2;
  double split_test = 0.1;
  std::uint64_t seed = 0;
  // Optional early stopping; both disabled at 0. The generator stops once
  // an epoch's mean reconstruction drops to the ratio times the first
  // epoch's; the classifier stops once validation accuracy reaches the bar.
  double stop_loss_ratio = 0.0;
  double stop_val_accuracy = 0.0;

  void validate() const;
  GenConfig gen_config() const;
  ClfConfig clf_config(bool hybrid) const;

  static TrainConfig generator_defaults();   // 150 epochs, drops at 75/113/132
  static TrainConfig classifier_defaults();  // 500 epochs, drops at 250/375/438
};

TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config(const std::string& text);

// Piecewise-constant schedule: the rate is multiplied by decay_factor
// after each listed epoch (the drop takes effect from epoch N+1).
// `epoch` is 1-based and must lie in [1, cfg.epochs].
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// Adam with decoupled weight decay. One call advances the shared step
// counter once and updates exactly the parameters named in `grads`
// (missing parameters or shape mismatches are errors):
//   p <- p - lr * weight_decay * p           (before the Adam delta)
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
struct AdamState {
  Bindings m, v;
  long step = 0;
};
void adam_step(Bindings& params, const GradMap& grads, AdamState& state,
               double lr, const TrainConfig& cfg);

// Label-stratified shuffle split with largest-remainder rounding, exact at
// the global level (100 gaits at 7:2:1 give exactly 70/20/10). Disjoint,
// exhaustive, deterministic per seed. Every class needs >= 3 members and
// every gait a label.
struct DataSplit {
  std::vector<int> train, val, test;
};
DataSplit split_dataset(const std::vector<GaitSequence>& data,
                        const TrainConfig& cfg);

struct GenTrainResult {
  std::vector<double> recon;      // per-epoch mean reconstruction loss
  std::vector<double> objective;  // per-epoch mean total loss
  int epochs_run = 0;
};
// Minimizes the generator objective over mini-batches of the whole labeled
// dataset. Non-finite losses abort with NumericError. Trailing batches of
// a single sample are skipped (batch statistics need two samples); the
// next epoch's shuffle picks the skipped gait up again.
GenTrainResult train_generator(StepGen& model,
                               const std::vector<GaitSequence>& data,
                               const TrainConfig& cfg);

struct ClfTrainResult {
  DataSplit split;                 // indices into the real dataset
  std::vector<double> train_loss;  // per-epoch mean cross entropy
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;
  int best_epoch = 0;  // 1-based epoch of the checkpoint below
  double best_val_accuracy = 0.0;
  Bindings best_params;  // persistent tensors at the best epoch
  int epochs_run = 0;
};
// Splits `data`, trains on the train split plus every `augment` gait
// (validation and test stay purely real), and returns with the model
// restored to its best-validation-accuracy parameters.
ClfTrainResult train_classifier(StepClf& model,
                                const std::vector<GaitSequence>& data,
                                const std::vector<GaitSequence>& augment,
                                const TrainConfig& cfg);

}  // namespace step
