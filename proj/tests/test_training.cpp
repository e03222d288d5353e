#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "step/training.hpp"

using namespace step;

namespace {

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

TrainConfig tiny_gen_config() {
  TrainConfig cfg;
  cfg.frames = 6;
  cfg.latent_dim = 2;
  cfg.temporal_kernel = 3;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.initial_lr = 1e-3;
  cfg.decay_epochs = {};
  return cfg;
}

TrainConfig tiny_clf_config() {
  TrainConfig cfg;
  cfg.frames = 8;
  cfg.temporal_kernel = 3;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.initial_lr = 1e-3;
  cfg.decay_epochs = {};
  return cfg;
}

}  // namespace

TEST_CASE("learning rate schedule matches the published drops") {
  TrainConfig gen = TrainConfig::generator_defaults();
  CHECK(lr_at_epoch(gen, 1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at_epoch(gen, 75) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at_epoch(gen, 76) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lr_at_epoch(gen, 113) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lr_at_epoch(gen, 114) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at_epoch(gen, 132) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at_epoch(gen, 133) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(lr_at_epoch(gen, 150) == doctest::Approx(0.0001).epsilon(1e-12));

  TrainConfig clf = TrainConfig::classifier_defaults();
  CHECK(clf.epochs == 500);
  CHECK(lr_at_epoch(clf, 250) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at_epoch(clf, 251) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lr_at_epoch(clf, 375) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lr_at_epoch(clf, 376) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at_epoch(clf, 438) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at_epoch(clf, 439) == doctest::Approx(0.0001).epsilon(1e-12));

  // Non-increasing across the whole range.
  double prev = lr_at_epoch(gen, 1);
  for (int e = 2; e <= gen.epochs; ++e) {
    double lr = lr_at_epoch(gen, e);
    CHECK(lr <= prev);
    prev = lr;
  }

  CHECK_THROWS_AS(lr_at_epoch(gen, 0), ValueError);
  CHECK_THROWS_AS(lr_at_epoch(gen, 151), ValueError);
}

TEST_CASE("config text parsing") {
  TrainConfig cfg = parse_train_config(
      "# classifier run\n"
      "epochs = 500\n"
      "decay_epochs = 250,375,438\n"
      "batch_size=8   # inline comment\n"
      "\n"
      "initial_lr = 0.1\n"
      "weight_decay = 5e-4\n"
      "seed = 7\n"
      "split_train = 0.7\n"
      "split_val = 0.2\n"
      "split_test = 0.1\n");
  CHECK(cfg.epochs == 500);
  CHECK(cfg.decay_epochs == std::vector<int>{250, 375, 438});
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.initial_lr == doctest::Approx(0.1));
  CHECK(cfg.weight_decay == doctest::Approx(5e-4));
  CHECK(cfg.seed == 7);

  // Empty text keeps every default.
  TrainConfig empty = parse_train_config("");
  TrainConfig defaults;
  CHECK(empty.batch_size == defaults.batch_size);
  CHECK(empty.epochs == defaults.epochs);
  CHECK(empty.decay_epochs == defaults.decay_epochs);
  CHECK(empty.beta1 == defaults.beta1);

  CHECK_THROWS_AS(parse_train_config("no_such_key = 1\n"), ValueError);
  CHECK_THROWS_AS(parse_train_config("just a line\n"), ValueError);
  CHECK_THROWS_AS(parse_train_config("initial_lr = fast\n"), ValueError);
  CHECK_THROWS_AS(parse_train_config("initial_lr = 0.1x\n"), ValueError);
  CHECK_THROWS_AS(parse_train_config("batch_size = 2.5\n"), ValueError);
  CHECK_THROWS_AS(parse_train_config("seed = -1\n"), ValueError);
}

TEST_CASE("config validation rejects bad settings") {
  auto broken = [](auto&& mutate) {
    TrainConfig cfg;
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.batch_size = 1; }).validate(), ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.split_val = 0.3; }).validate(),
      ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.decay_epochs = {75, 75}; }).validate(),
      ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.decay_epochs = {150}; }).validate(),
      ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.decay_factor = 0; }).validate(),
      ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.decay_factor = 1.5; }).validate(),
      ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.weight_decay = -1e-4; }).validate(),
      ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.temporal_kernel = 4; }).validate(),
      ValueError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.stop_val_accuracy = 1.5; }).validate(),
      ValueError);
  CHECK_NOTHROW(TrainConfig().validate());
  CHECK_NOTHROW(TrainConfig::classifier_defaults().validate());
}

TEST_CASE("config file loading") {
  std::filesystem::path path =
      std::filesystem::temp_directory_path() / "step_train_cfg_test.txt";
  {
    std::ofstream out(path);
    out << "epochs = 10\ndecay_epochs = 5,8\nbatch_size = 4\n";
  }
  TrainConfig cfg = load_train_config(path);
  CHECK(cfg.epochs == 10);
  CHECK(cfg.decay_epochs == std::vector<int>{5, 8});
  CHECK(cfg.batch_size == 4);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_train_config(path), DataError);
}

TEST_CASE("adam identity and weight decay basics") {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  Bindings params{{"p", Tensor::scalar(1.0)}};
  AdamState state;

  // Zero gradient, zero weight decay: parameters untouched.
  GradMap zero{{"p", Tensor::scalar(0.0)}};
  adam_step(params, zero, state, 0.1, cfg);
  CHECK(params.at("p")[0] == real(1.0));
  CHECK(state.step == 1);

  // Pure decoupled weight decay with zero gradient: p <- p(1 - lr wd).
  TrainConfig wd;
  wd.weight_decay = 0.5;
  Bindings params2{{"p", Tensor::scalar(1.0)}};
  AdamState state2;
  adam_step(params2, zero, state2, 0.1, wd);
  CHECK(params2.at("p")[0] == real(0.95));
}

TEST_CASE("adam first step moves by the learning rate") {
  // Bias-corrected Adam: m-hat = g, v-hat = g^2 on step one, so the delta
  // is lr * g / (|g| + eps) regardless of the gradient's magnitude.
  TrainConfig cfg;
  cfg.weight_decay = 0;
  for (double g : {1.0, 2e-3, -40.0}) {
    Bindings params{{"p", Tensor::scalar(1.0)}};
    AdamState state;
    adam_step(params, {{"p", Tensor::scalar(g)}}, state, 0.1, cfg);
    double delta = 1.0 - params.at("p")[0];
    CHECK(std::abs(std::abs(delta) - 0.1) < 1e-6);
    CHECK((delta > 0) == (g > 0));
  }
}

TEST_CASE("adam converges on a quadratic") {
  // Reference trajectory: 100 bias-corrected steps on f(x) = x^2 from
  // x = 1 with lr = 0.1 end at |x| = 0.0029366756811..., far inside the
  // 0.05 acceptance bound.
  TrainConfig cfg;
  cfg.weight_decay = 0;
  Bindings params{{"x", Tensor::scalar(1.0)}};
  AdamState state;
  for (int t = 0; t < 100; ++t) {
    double x = params.at("x")[0];
    adam_step(params, {{"x", Tensor::scalar(2.0 * x)}}, state, 0.1, cfg);
  }
  CHECK(state.step == 100);
  double x = params.at("x")[0];
  CHECK(std::abs(x) < 0.05);
  CHECK(x == doctest::Approx(0.002936675681102549).epsilon(1e-9));
}

TEST_CASE("adam updates exactly the named gradients") {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  Bindings params{{"a", Tensor::scalar(1.0)}, {"b", Tensor::scalar(1.0)}};
  AdamState state;
  adam_step(params, {{"a", Tensor::scalar(1.0)}}, state, 0.1, cfg);
  CHECK(params.at("a")[0] != real(1.0));
  CHECK(params.at("b")[0] == real(1.0));
  CHECK(state.step == 1);  // one call, one step, however many tensors

  Tensor bad({2});
  CHECK_THROWS_AS(adam_step(params, {{"a", bad}}, state, 0.1, cfg),
                  ShapeError);
  CHECK_THROWS_AS(adam_step(params, {{"zz", Tensor::scalar(1.0)}}, state, 0.1,
                            cfg),
                  ValueError);
  Tensor nan_grad = Tensor::scalar(std::nan(""));
  CHECK_THROWS_AS(adam_step(params, {{"a", nan_grad}}, state, 0.1, cfg),
                  NumericError);
}

TEST_CASE("stratified split is exact, disjoint, and exhaustive") {
  auto data = tiny_dataset(100, 4, 3);  // 25 per class
  TrainConfig cfg;
  cfg.seed = 11;
  DataSplit s = split_dataset(data, cfg);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 20);
  CHECK(s.test.size() == 10);

  std::set<int> all;
  for (const auto* bucket : {&s.train, &s.val, &s.test}) {
    for (int i : *bucket) {
      CHECK(i >= 0);
      CHECK(i < 100);
      CHECK(all.insert(i).second);  // no index lands in two buckets
    }
  }
  CHECK(all.size() == 100);

  // Stratification: every class contributes close to its share.
  auto class_counts = [&](const std::vector<int>& bucket) {
    std::array<int, kNumEmotions> n{};
    for (int i : bucket) {
      n[static_cast<std::size_t>(static_cast<int>(*data[i].label))] += 1;
    }
    return n;
  };
  for (int c : class_counts(s.train)) {
    CHECK(c >= 17);
    CHECK(c <= 18);
  }
  for (int c : class_counts(s.val)) CHECK(c == 5);
  for (int c : class_counts(s.test)) {
    CHECK(c >= 2);
    CHECK(c <= 3);
  }
}

TEST_CASE("split determinism and error cases") {
  auto data = tiny_dataset(100, 4, 3);
  TrainConfig cfg;
  cfg.seed = 11;
  DataSplit a = split_dataset(data, cfg);
  DataSplit b = split_dataset(data, cfg);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  cfg.seed = 12;
  DataSplit c = split_dataset(data, cfg);
  CHECK(a.train != c.train);  // different seed shuffles differently

  // A class with fewer than 3 members cannot be stratified.
  auto few = tiny_dataset(9, 4, 3);  // classes 0 get 3, class 1..3 get 2
  CHECK_THROWS_AS(split_dataset(few, cfg), ValueError);

  auto unlabeled = tiny_dataset(12, 4, 3);
  unlabeled[5].label.reset();
  CHECK_THROWS_AS(split_dataset(unlabeled, cfg), ValueError);

  CHECK_THROWS_AS(split_dataset({}, cfg), ValueError);
}

TEST_CASE("generator training runs, records history, and is deterministic") {
  TrainConfig cfg = tiny_gen_config();
  auto data = tiny_dataset(8, cfg.frames, 21);

  StepGen model(cfg.gen_config(), 5);
  GenTrainResult r = train_generator(model, data, cfg);
  CHECK(r.epochs_run == 3);
  CHECK(r.recon.size() == 3);
  CHECK(r.objective.size() == 3);
  for (double v : r.recon) CHECK(std::isfinite(v));
  for (std::size_t e = 0; e < r.objective.size(); ++e) {
    CHECK(r.objective[e] >= r.recon[e]);  // objective adds penalties
  }
  // Transient inputs are cleaned out of the store after training.
  CHECK(model.store().count("enc_x") == 0);
  CHECK(model.store().count("noise") == 0);

  StepGen again(cfg.gen_config(), 5);
  GenTrainResult r2 = train_generator(again, data, cfg);
  REQUIRE(r2.recon.size() == r.recon.size());
  for (std::size_t e = 0; e < r.recon.size(); ++e) {
    CHECK(r2.recon[e] == r.recon[e]);  // bit-exact reproducibility
  }
  for (const std::string& name : model.trainable_names()) {
    const Tensor& p = model.store().at(name);
    const Tensor& q = again.store().at(name);
    REQUIRE(p.same_shape(q));
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p[i] == q[i]);
  }
}

TEST_CASE("generator training edge cases") {
  TrainConfig cfg = tiny_gen_config();

  // 5 samples with batch 4 leave a singleton tail; it must be dropped
  // rather than hit batch statistics with one sample.
  auto five = tiny_dataset(5, cfg.frames, 22);
  StepGen model(cfg.gen_config(), 5);
  CHECK_NOTHROW(train_generator(model, five, cfg));

  // Early stop once the mean reconstruction reaches the requested ratio of
  // epoch one. The bar is measured from an unstopped run, so the stopped
  // run must halt exactly at epoch 2.
  auto data = tiny_dataset(8, cfg.frames, 21);
  StepGen probe(cfg.gen_config(), 5);
  GenTrainResult full = train_generator(probe, data, cfg);
  TrainConfig stop = cfg;
  stop.stop_loss_ratio = (full.recon[1] / full.recon[0]) * (1 + 1e-9);
  StepGen stopped(cfg.gen_config(), 5);
  GenTrainResult r = train_generator(stopped, data, stop);
  CHECK(r.epochs_run == 2);
  CHECK(r.recon.size() == 2);

  auto unlabeled = tiny_dataset(8, cfg.frames, 21);
  unlabeled[2].label.reset();
  StepGen m2(cfg.gen_config(), 5);
  CHECK_THROWS_AS(train_generator(m2, unlabeled, cfg), ValueError);

  StepGen m3(cfg.gen_config(), 5);
  CHECK_THROWS_AS(train_generator(m3, {}, cfg), ValueError);

  // A poisoned parameter must abort, not train through NaNs.
  StepGen m4(cfg.gen_config(), 5);
  m4.store().at("enc/blk1/spatial/w")[0] = real(std::nan(""));
  CHECK_THROWS_AS(train_generator(m4, data, cfg), NumericError);

  TrainConfig mismatched = cfg;
  mismatched.frames = 12;
  StepGen m5(cfg.gen_config(), 5);
  CHECK_THROWS_AS(train_generator(m5, data, mismatched), ValueError);
}

TEST_CASE("classifier training splits, tracks metrics, and restores best") {
  TrainConfig cfg = tiny_clf_config();
  auto data = tiny_dataset(24, cfg.frames, 31);  // 6 per class

  StepClf model(cfg.clf_config(false), 5);
  ClfTrainResult r = train_classifier(model, data, {}, cfg);
  CHECK(r.split.train.size() == 17);
  CHECK(r.split.val.size() == 5);
  CHECK(r.split.test.size() == 2);
  CHECK(r.epochs_run == 3);
  CHECK(r.train_loss.size() == 3);
  CHECK(r.train_accuracy.size() == 3);
  CHECK(r.val_accuracy.size() == 3);
  for (double v : r.train_loss) CHECK(std::isfinite(v));
  for (double v : r.train_accuracy) {
    CHECK(v >= 0);
    CHECK(v <= 1);
  }
  REQUIRE(r.best_epoch >= 1);
  REQUIRE(r.best_epoch <= 3);
  CHECK(r.best_val_accuracy ==
        *std::max_element(r.val_accuracy.begin(), r.val_accuracy.end()));
  // Earliest epoch wins ties.
  for (int e = 0; e < r.best_epoch - 1; ++e) {
    CHECK(r.val_accuracy[static_cast<std::size_t>(e)] < r.best_val_accuracy);
  }

  // The checkpoint carries exactly the persistent tensors.
  CHECK(r.best_params.size() == model.persistent_names().size());
  for (const std::string& name : model.persistent_names()) {
    CHECK(r.best_params.count(name) == 1);
  }

  // The model is left at the best checkpoint: re-scoring the validation
  // split must reproduce the recorded best accuracy.
  auto preds = model.predict(data, r.split.val);
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == *data[static_cast<std::size_t>(r.split.val[i])].label) {
      ++correct;
    }
  }
  CHECK(double(correct) / double(preds.size()) ==
        doctest::Approx(r.best_val_accuracy).epsilon(1e-12));

  // Determinism.
  StepClf again(cfg.clf_config(false), 5);
  ClfTrainResult r2 = train_classifier(again, data, {}, cfg);
  CHECK(r2.val_accuracy == r.val_accuracy);
  CHECK(r2.train_loss == r.train_loss);
  for (const std::string& name : model.trainable_names()) {
    const Tensor& p = model.store().at(name);
    const Tensor& q = again.store().at(name);
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p[i] == q[i]);
  }
}

TEST_CASE("classifier training with augmentation and hybrid features") {
  TrainConfig cfg = tiny_clf_config();
  auto data = tiny_dataset(24, cfg.frames, 31);
  auto extra = tiny_dataset(8, cfg.frames, 99);  // stand-in synthetic gaits

  StepClf model(cfg.clf_config(true), 5);
  ClfTrainResult r = train_classifier(model, data, extra, cfg);

  // The split indexes only the real dataset; augment gaits join the
  // training pool without ever appearing in val or test.
  CHECK(r.split.train.size() + r.split.val.size() + r.split.test.size() ==
        data.size());
  for (const auto* bucket : {&r.split.train, &r.split.val, &r.split.test}) {
    for (int i : *bucket) {
      CHECK(i >= 0);
      CHECK(i < static_cast<int>(data.size()));
    }
  }

  // Hybrid training computes affective statistics from the training pool.
  const Tensor& mean = model.store().at("affect/mean");
  const Tensor& stddev = model.store().at("affect/std");
  bool any_mean = false, any_std = false;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (mean[i] != real(0)) any_mean = true;
    if (stddev[i] != real(1)) any_std = true;
  }
  CHECK(any_mean);
  CHECK(any_std);

  auto unlabeled_aug = tiny_dataset(2, cfg.frames, 99);
  unlabeled_aug[0].label.reset();
  StepClf m2(cfg.clf_config(false), 5);
  CHECK_THROWS_AS(train_classifier(m2, data, unlabeled_aug, cfg), ValueError);

  // NaN parameters abort instead of corrupting the run.
  StepClf m3(cfg.clf_config(false), 5);
  m3.store().at("clf/blk1/spatial/w")[0] = real(std::nan(""));
  CHECK_THROWS_AS(train_classifier(m3, data, {}, cfg), NumericError);
}

TEST_CASE("classifier early stop on validation accuracy") {
  TrainConfig cfg = tiny_clf_config();
  cfg.epochs = 4;
  auto data = tiny_dataset(24, cfg.frames, 31);

  StepClf probe(cfg.clf_config(false), 5);
  ClfTrainResult full = train_classifier(probe, data, {}, cfg);
  int first_hit = 0;
  for (std::size_t e = 0; e < full.val_accuracy.size(); ++e) {
    if (full.val_accuracy[e] > 0) {
      first_hit = static_cast<int>(e) + 1;
      break;
    }
  }
  REQUIRE(first_hit >= 1);  // at least one epoch scores above zero

  TrainConfig stop = cfg;
  stop.stop_val_accuracy =
      full.val_accuracy[static_cast<std::size_t>(first_hit - 1)];
  StepClf model(cfg.clf_config(false), 5);
  ClfTrainResult r = train_classifier(model, data, {}, stop);
  CHECK(r.epochs_run == first_hit);
  CHECK(r.val_accuracy.size() == static_cast<std::size_t>(first_hit));
}
