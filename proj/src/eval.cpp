#include "step/eval.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>

#include "step/affective.hpp"

namespace step {

long ConfusionMatrix::total() const {
  long n = 0;
  for (const auto& row : counts) {
    for (long c : row) n += c;
  }
  return n;
}

long ConfusionMatrix::row_sum(int true_class) const {
  check_value(true_class >= 0 && true_class < kNumEmotions,
              "class index out of range");
  long n = 0;
  for (long c : counts[static_cast<std::size_t>(true_class)]) n += c;
  return n;
}

long ConfusionMatrix::correct() const {
  long n = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    n += counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  }
  return n;
}

ConfusionMatrix confusion(const std::vector<Emotion>& preds,
                          const std::vector<Emotion>& labels) {
  check_value(preds.size() == labels.size(),
              "prediction and label counts differ");
  check_value(!preds.empty(), "nothing to evaluate");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    cm.counts[static_cast<std::size_t>(static_cast<int>(labels[i]))]
             [static_cast<std::size_t>(static_cast<int>(preds[i]))] += 1;
  }
  return cm;
}

double macro_accuracy(const ConfusionMatrix& cm) {
  long n = cm.total();
  check_value(n > 0, "empty confusion matrix");
  double sum = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    auto ci = static_cast<std::size_t>(c);
    long tp = cm.counts[ci][ci];
    long fp = 0, fn = 0;
    for (int o = 0; o < kNumEmotions; ++o) {
      if (o == c) continue;
      auto oi = static_cast<std::size_t>(o);
      fp += cm.counts[oi][ci];
      fn += cm.counts[ci][oi];
    }
    long tn = n - tp - fp - fn;
    sum += double(tp + tn) / double(n);
  }
  return sum / kNumEmotions;
}

double macro_accuracy(const std::vector<Emotion>& preds,
                      const std::vector<Emotion>& labels) {
  return macro_accuracy(confusion(preds, labels));
}

double fraction_correct(const ConfusionMatrix& cm) {
  long n = cm.total();
  check_value(n > 0, "empty confusion matrix");
  return double(cm.correct()) / double(n);
}

double fraction_correct(const std::vector<Emotion>& preds,
                        const std::vector<Emotion>& labels) {
  return fraction_correct(confusion(preds, labels));
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\pred";
  for (int c = 0; c < kNumEmotions; ++c) {
    out << ',' << emotion_name(emotion_from_index(c));
  }
  out << '\n';
  for (int r = 0; r < kNumEmotions; ++r) {
    out << emotion_name(emotion_from_index(r));
    for (int c = 0; c < kNumEmotions; ++c) {
      out << ',' << cm.counts[static_cast<std::size_t>(r)]
                           [static_cast<std::size_t>(c)];
    }
    out << '\n';
  }
  return out.str();
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (int i = 0; i < t.dim(0); ++i) {
    for (int j = 0; j < t.dim(1); ++j) m(i, j) = t.at2(i, j);
  }
  return m;
}

// Symmetric PSD square root; roundoff negatives are clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const Tensor& a_features, const Tensor& b_features) {
  check_shape(a_features.rank() == 2 && b_features.rank() == 2,
              "fid expects [N,d] feature matrices");
  check_shape(a_features.dim(1) == b_features.dim(1),
              "fid feature dimensions differ");
  int n = a_features.dim(0), m = b_features.dim(0), d = a_features.dim(1);
  check_value(n >= 2 && m >= 2, "fid needs at least 2 samples per side");
  check_value(d >= 1, "fid needs at least one feature dimension");
  if (!a_features.all_finite() || !b_features.all_finite()) {
    throw NumericError("fid features must be finite");
  }

  Eigen::MatrixXd a = to_eigen(a_features), b = to_eigen(b_features);
  Eigen::RowVectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
  a.rowwise() -= mu_a;
  b.rowwise() -= mu_b;
  Eigen::MatrixXd sa = a.transpose() * a / double(n - 1);
  Eigen::MatrixXd sb = b.transpose() * b / double(m - 1);

  // tr((Sa Sb)^(1/2)) through the similar symmetric matrix
  // Sa^(1/2) Sb Sa^(1/2), which shares its eigenvalues.
  Eigen::MatrixXd root_a = psd_sqrt(sa);
  Eigen::MatrixXd inner = root_a * sb * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  return (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
}

Tensor penultimate_features(StepClf& clf,
                            const std::vector<GaitSequence>& data,
                            const std::vector<int>& rows) {
  clf.logits_for(data, rows);
  return clf.graph().value(clf.nodes().penult);
}

SaliencyMap saliency_map(StepClf& clf, const GaitSequence& gait,
                         Emotion target, int axis, bool guided) {
  check_value(axis >= 0 && axis < 3, "axis must be 0 (x), 1 (y) or 2 (z)");
  int frames = clf.config().frames;
  Tensor x = batch_positions({gait}, {0}, frames);

  Graph& g = clf.graph();
  Bindings& store = clf.store();
  store["x"] = x;
  if (clf.config().hybrid) {
    store["affect_std"] = clf.standardize_affect(affective_matrix({gait}));
  }
  g.set_training(false);
  g.forward(clf.nodes().logits, store);

  Tensor seed({1, kNumEmotions});
  seed.at2(0, static_cast<int>(target)) = 1;
  BackwardOptions options;
  options.guided_relu = guided;
  GradMap grads = g.backward(clf.nodes().logits, seed, options);
  store.erase("x");
  store.erase("affect_std");

  const Tensor& gx = grads.at("x");  // [1,3,T,V]
  SaliencyMap map;
  map.target = target;
  map.axis = axis;
  map.values = Tensor({frames, joints::kCount});
  for (int t = 0; t < frames; ++t) {
    for (int v = 0; v < joints::kCount; ++v) {
      map.values.at2(t, v) = std::abs(gx.at4(0, axis, t, v));
    }
  }
  return map;
}

int axis_from_name(const std::string& name) {
  if (name == "x") return 0;
  if (name == "y") return 1;
  if (name == "z") return 2;
  throw ValueError("axis must be one of x, y, z; got '" + name + "'");
}

std::string saliency_csv(const SaliencyMap& map) {
  check_shape(map.values.rank() == 2 &&
                  map.values.dim(1) == joints::kCount,
              "saliency map must be [frames, joints]");
  std::ostringstream out;
  out.precision(17);
  out << "frame";
  for (const char* name : joint_names()) out << ',' << name;
  out << '\n';
  for (int t = 0; t < map.values.dim(0); ++t) {
    out << t;
    for (int v = 0; v < joints::kCount; ++v) {
      out << ',' << map.values.at2(t, v);
    }
    out << '\n';
  }
  return out.str();
}

std::string saliency_pgm(const SaliencyMap& map) {
  check_shape(map.values.rank() == 2, "saliency map must be [frames, joints]");
  int h = map.values.dim(0), w = map.values.dim(1);
  double peak = 0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    peak = std::max(peak, double(map.values[i]));
  }
  std::ostringstream out;
  out << "P2\n" << w << ' ' << h << "\n255\n";
  for (int t = 0; t < h; ++t) {
    for (int v = 0; v < w; ++v) {
      int g = peak > 0 ? static_cast<int>(
                             std::lround(255.0 * map.values.at2(t, v) / peak))
                       : 0;
      out << g << (v + 1 < w ? ' ' : '\n');
    }
  }
  return out.str();
}

namespace {

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  check_data(bool(out), "failed writing " + path.string());
}

}  // namespace

void save_saliency_csv(const SaliencyMap& map,
                       const std::filesystem::path& path) {
  write_text(saliency_csv(map), path);
}

void save_saliency_pgm(const SaliencyMap& map,
                       const std::filesystem::path& path) {
  write_text(saliency_pgm(map), path);
}

}  // namespace step
