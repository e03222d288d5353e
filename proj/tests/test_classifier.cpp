#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "step/classifier.hpp"
#include "test_util.hpp"

using namespace step;
using testutil::check_grads;
using testutil::rand_tensor;

namespace {

ClfConfig tiny_config(bool hybrid) {
  ClfConfig cfg;
  cfg.frames = 8;
  cfg.temporal_kernel = 3;
  cfg.hybrid = hybrid;
  return cfg;
}

std::vector<GaitSequence> tiny_dataset(int count, int frames,
                                       std::uint64_t seed) {
  RngStream r(seed, "data");
  std::vector<GaitSequence> out;
  auto rest = rest_pose();
  for (int i = 0; i < count; ++i) {
    GaitSequence g = GaitSequence::zeros(frames);
    for (int t = 0; t < frames; ++t) {
      for (int v = 0; v < joints::kCount; ++v) {
        for (int c = 0; c < 3; ++c) {
          g.set(c, t, v, rest(v, c) + 0.05 * r.gaussian() +
                             (c == 2 ? 0.02 * t : 0.0));
        }
      }
    }
    g.label = emotion_from_index(i % kNumEmotions);
    out.push_back(std::move(g));
  }
  return out;
}

Tensor labels_of(const std::vector<GaitSequence>& data,
                 const std::vector<int>& rows) {
  Tensor t({static_cast<int>(rows.size())});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t[i] = static_cast<real>(
        static_cast<int>(*data[static_cast<std::size_t>(rows[i])].label));
  }
  return t;
}

// Batch normalization centers every pre-activation at zero, parking
// thousands of rectifier inputs on the kink where central differences are
// one-sided. Shift and shrink the affine parameters so the probed network
// is smooth around the operating point; kink behavior itself is covered by
// the op-level rectifier tests.
void move_off_kinks(Bindings& store) {
  for (auto& [name, value] : store) {
    if (name.find("/bn_gamma") != std::string::npos) value.fill(real(0.2));
    if (name.find("/bn_beta") != std::string::npos) value.fill(real(1.2));
    if (name == "clf/hyb1/b") value.fill(real(1.0));
  }
}

}  // namespace

TEST_CASE("logit shape and softmax normalization") {
  StepClf clf(tiny_config(false), 5);
  auto data = tiny_dataset(3, 8, 6);
  Tensor lg = clf.logits_for(data, {0, 1, 2});
  REQUIRE(lg.shape() == std::vector<int>{3, kNumEmotions});
  CHECK(lg.all_finite());

  Graph g;
  Bindings b{{"l", lg}};
  Tensor probs = g.forward(softmax(g, g.var("l")), b);
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int j = 0; j < kNumEmotions; ++j) s += probs.at2(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("argmax prediction and tie rules") {
  CHECK(predict_class(Tensor::from({1, 4}, {0, 5, 0, 0})) ==
        emotion_from_index(1));
  CHECK(predict_class(Tensor::from({1, 4}, {2, 2, 2, 2})) ==
        emotion_from_index(0));
  CHECK(predict_class(Tensor::from({1, 4}, {3, 1, 3, 0})) ==
        emotion_from_index(0));
  Tensor two = Tensor::from({2, 4}, {0, 1, 0, 0, 0, 0, 0, 9});
  CHECK(predict_class(two, 0) == emotion_from_index(1));
  CHECK(predict_class(two, 1) == emotion_from_index(3));

  // Invariance to a constant logit shift.
  RngStream r(7, "shift");
  for (int trial = 0; trial < 20; ++trial) {
    Tensor lg = rand_tensor({1, 4}, r, -3, 3);
    Tensor shifted = lg;
    double c = r.uniform(-10, 10);
    for (std::size_t i = 0; i < shifted.size(); ++i) {
      shifted[i] += static_cast<real>(c);
    }
    CHECK(predict_class(lg) == predict_class(shifted));
  }

  Tensor bad = Tensor::from({1, 4}, {0, 1, 2, 3});
  bad[2] = std::numeric_limits<real>::quiet_NaN();
  CHECK_THROWS_AS(predict_class(bad), DataError);
  CHECK_THROWS_AS(predict_class(Tensor::from({4}, {0, 1, 2, 3})), ShapeError);
}

TEST_CASE("baseline cross-entropy differentiates against finite differences") {
  StepClf clf(tiny_config(false), 11);
  auto data = tiny_dataset(2, 8, 12);
  Bindings b = clf.store();
  move_off_kinks(b);
  b["x"] = batch_positions(data, {0, 1}, 8);
  b["labels"] = labels_of(data, {0, 1});
  clf.graph().set_training(true);
  // Probing the input exercises the full depth; the parameter picks cover
  // each layer family without sweeping every coordinate of the big kernels.
  check_grads(clf.graph(), clf.nodes().xent, b,
              {"x", "clf/blk1/spatial/w", "clf/head/bn_gamma",
               "clf/head/bn_beta", "clf/fc/w", "clf/fc/b"},
              1e-5, 1e-6, 1e-4);
}

TEST_CASE("hybrid cross-entropy differentiates against finite differences") {
  StepClf clf(tiny_config(true), 13);
  auto data = tiny_dataset(2, 8, 14);
  Bindings b = clf.store();
  move_off_kinks(b);
  b["x"] = batch_positions(data, {0, 1}, 8);
  b["labels"] = labels_of(data, {0, 1});
  RngStream r(15, "affect");
  b["affect_std"] = rand_tensor({2, kAffectiveDim}, r);
  clf.graph().set_training(true);
  // The trunk is shared with (and probed by) the baseline test; here the
  // hybrid-only pieces and both network inputs get the treatment.
  check_grads(clf.graph(), clf.nodes().xent, b,
              {"x", "affect_std", "clf/hyb1/b", "clf/hyb2/w", "clf/hyb2/b"},
              1e-5, 1e-6, 1e-4);
}

TEST_CASE("eval logits are deterministic and batch-size independent") {
  StepClf clf(tiny_config(true), 21);
  auto data = tiny_dataset(4, 8, 22);

  // Push the running statistics away from their init so eval mode has
  // something real to use.
  Bindings& s = clf.store();
  s["x"] = batch_positions(data, {0, 1, 2, 3}, 8);
  s["labels"] = labels_of(data, {0, 1, 2, 3});
  s["affect_std"] = clf.standardize_affect(affective_matrix(data));
  clf.graph().set_training(true);
  clf.graph().forward(clf.nodes().xent, s);
  s.erase("x");
  s.erase("labels");
  s.erase("affect_std");

  Tensor alone = clf.logits_for(data, {0});
  Tensor batch = clf.logits_for(data, {0, 1, 2, 3});
  Tensor again = clf.logits_for(data, {0});
  for (int j = 0; j < kNumEmotions; ++j) {
    CHECK(double(alone.at2(0, j)) ==
          doctest::Approx(double(batch.at2(0, j))).epsilon(1e-10));
    CHECK(alone.at2(0, j) == again.at2(0, j));
  }

  auto preds = clf.predict(data, {0, 1, 2, 3});
  REQUIRE(preds.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(preds[i] == predict_class(batch, i));
}

TEST_CASE("heads share the trunk but not their own weights") {
  StepClf clf(tiny_config(false), 31);
  auto data = tiny_dataset(1, 8, 32);
  Bindings& s = clf.store();

  auto both_heads = [&]() {
    s["x"] = batch_positions(data, {0}, 8);
    s["affect_std"] = Tensor({1, kAffectiveDim});  // zeroed affect input
    clf.graph().set_training(false);
    clf.graph().forward(clf.nodes().baseline_logits, s);
    Tensor base = clf.graph().value(clf.nodes().baseline_logits);
    Tensor hyb = clf.graph().forward(clf.nodes().hybrid_logits, s);
    s.erase("x");
    s.erase("affect_std");
    return std::make_pair(base, hyb);
  };

  auto [base0, hyb0] = both_heads();
  CHECK(base0.all_finite());
  CHECK(hyb0.all_finite());

  // Trunk perturbation moves both heads.
  s["clf/blk2/spatial/w"][0] += real(0.25);
  auto [base1, hyb1] = both_heads();
  bool base_moved = false, hyb_moved = false;
  for (std::size_t i = 0; i < base0.size(); ++i) {
    if (base0[i] != base1[i]) base_moved = true;
    if (hyb0[i] != hyb1[i]) hyb_moved = true;
  }
  CHECK(base_moved);
  CHECK(hyb_moved);

  // Hybrid-head perturbation leaves the baseline head alone. The output
  // bias is used so no dead rectifier can swallow the change.
  s["clf/hyb2/b"][0] += real(0.5);
  auto [base2, hyb2] = both_heads();
  bool base_same = true;
  hyb_moved = false;
  for (std::size_t i = 0; i < base1.size(); ++i) {
    if (base1[i] != base2[i]) base_same = false;
    if (hyb1[i] != hyb2[i]) hyb_moved = true;
  }
  CHECK(base_same);
  CHECK(hyb_moved);
}

TEST_CASE("affect standardization uses stored statistics") {
  StepClf clf(tiny_config(true), 41);
  Tensor mean = Tensor::from({kAffectiveDim}, std::vector<real>(29, 2));
  Tensor stddev = Tensor::from({kAffectiveDim}, std::vector<real>(29, 4));
  stddev[7] = 0;  // constant feature: clamped to unit scale
  clf.set_affect_stats(mean, stddev);
  CHECK(clf.store().at("affect/std")[7] == 1.0);

  Tensor raw({2, kAffectiveDim});
  raw.fill(real(10));
  Tensor z = clf.standardize_affect(raw);
  for (int j = 0; j < kAffectiveDim; ++j) {
    CHECK(z.at2(0, j) == (j == 7 ? real(8) : real(2)));
  }

  Tensor bad_std = stddev;
  bad_std[0] = -1;
  CHECK_THROWS_AS(clf.set_affect_stats(mean, bad_std), DataError);
}

TEST_CASE("rebuilding from a store reproduces logits exactly") {
  StepClf clf(tiny_config(true), 51);
  auto data = tiny_dataset(2, 8, 52);
  Tensor ref = clf.logits_for(data, {0, 1});

  StepClf clone(tiny_config(true), clf.store());
  Tensor got = clone.logits_for(data, {0, 1});
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(ref[i] == got[i]);
  CHECK(clone.trainable_names() == clf.trainable_names());

  // The same parameter set also serves the other head configuration.
  StepClf as_baseline(tiny_config(false), clf.store());
  CHECK(as_baseline.logits_for(data, {0, 1}).all_finite());

  Bindings broken = clf.store();
  broken.erase("clf/hyb1/w");
  CHECK_THROWS_AS(StepClf(tiny_config(true), std::move(broken)), ValueError);
}

TEST_CASE("config validation") {
  ClfConfig cfg = tiny_config(false);
  cfg.frames = 2;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg = tiny_config(false);
  cfg.temporal_kernel = 2;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  CHECK_NOTHROW(tiny_config(true).validate());
}
