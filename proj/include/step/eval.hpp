#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "step/classifier.hpp"

namespace step {

// Prediction counts; rows are the true class, columns the predicted one.
struct ConfusionMatrix {
  std::array<std::array<long, kNumEmotions>, kNumEmotions> counts{};

  long total() const;
  long row_sum(int true_class) const;  // support of one class
  long correct() const;                // main diagonal
};

ConfusionMatrix confusion(const std::vector<Emotion>& preds,
                          const std::vector<Emotion>& labels);

// (TP + TN) / total under each one-vs-rest view, averaged over the four
// classes. Coincides with fraction_correct for two classes, not for four.
double macro_accuracy(const ConfusionMatrix& cm);
double macro_accuracy(const std::vector<Emotion>& preds,
                      const std::vector<Emotion>& labels);

// Plain share of correct predictions.
double fraction_correct(const ConfusionMatrix& cm);
double fraction_correct(const std::vector<Emotion>& preds,
                        const std::vector<Emotion>& labels);

std::string confusion_csv(const ConfusionMatrix& cm);

// Fréchet distance between Gaussian fits of two feature sets [N,d] and
// [M,d] (unbiased covariances):
//   |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2))
// The square-root trace is computed from the symmetric product
// Sa^(1/2) Sb Sa^(1/2), whose eigenvalues equal those of Sa Sb; negative
// eigenvalues from roundoff are clamped to zero. Zero for identical sets.
double fid(const Tensor& a_features, const Tensor& b_features);

// Penultimate classifier features [N,64] in eval mode, the learned
// alternative to affective_matrix() as a fid() embedding.
Tensor penultimate_features(StepClf& clf, const std::vector<GaitSequence>& data,
                            const std::vector<int>& rows);

// Gradient-magnitude map of one logit over the input positions. With
// `guided` the rectifier backward passes only positive gradients through
// positive activations; without it this is plain backpropagation. For
// hybrid classifiers the map covers the network path only: the affective
// side input is held fixed.
struct SaliencyMap {
  Tensor values;  // [T,V], non-negative
  Emotion target = Emotion::Angry;
  int axis = 0;  // 0 = x, 1 = y, 2 = z
};

SaliencyMap saliency_map(StepClf& clf, const GaitSequence& gait,
                         Emotion target, int axis, bool guided = true);

int axis_from_name(const std::string& name);  // "x" | "y" | "z"

// frame,<joint names> rows with full-precision magnitudes.
std::string saliency_csv(const SaliencyMap& map);
// Plain-text portable graymap (P2), magnitudes scaled so the peak is 255.
std::string saliency_pgm(const SaliencyMap& map);
void save_saliency_csv(const SaliencyMap& map,
                       const std::filesystem::path& path);
void save_saliency_pgm(const SaliencyMap& map,
                       const std::filesystem::path& path);

}  // namespace step
