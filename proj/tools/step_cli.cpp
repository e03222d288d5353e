// step — command-line front end for the gait emotion toolkit.
//
// Subcommands cover the full workflow: synthesize a dataset, train the
// generator, sample gaits from it, train a classifier (three ablation
// modes), evaluate, render saliency maps, and sweep augmentation sizes.
// Every run creates its output directory, writes its artifacts there and
// drops a manifest.json recording the command, effective seed and SHA-256
// hashes of all file inputs, so identical reruns are byte-comparable.
//
// Exit codes: 0 success, 2 bad flags/config, 3 unreadable or malformed
// data, 4 numerical failure, 1 anything else.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "step/affective.hpp"
#include "step/checkpoint.hpp"
#include "step/classifier.hpp"
#include "step/common.hpp"
#include "step/eval.hpp"
#include "step/gait_io.hpp"
#include "step/sha256.hpp"
#include "step/stepgen.hpp"
#include "step/synthgait.hpp"
#include "step/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace step;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path prepare_out(const std::string& out) {
  check_value(!out.empty(), "output directory must not be empty");
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  check_data(!ec && fs::is_directory(dir),
             "cannot create output directory " + dir.string());
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  check_data(f.is_open(), "cannot open " + path.string() + " for writing");
  f << text;
  f.flush();
  check_data(f.good(), "write failed for " + path.string());
}

// Run record. Hashes every file input so a rerun can be audited: equal
// manifests plus 64-bit builds mean byte-equal artifacts.
class Manifest {
 public:
  Manifest(const std::string& command, const std::string& config_path,
           std::uint64_t seed, const std::string& out_dir) {
    j_["command"] = command;
    j_["config"] = config_path;
    j_["seed"] = seed;
    j_["output_dir"] = out_dir;
    j_["args"] = json::object();
    j_["inputs"] = json::object();
  }
  void arg(const std::string& key, json value) {
    j_["args"][key] = std::move(value);
  }
  void input(const std::string& label, const fs::path& path) {
    j_["inputs"][label] = {{"path", path.string()},
                           {"sha256", Sha256::of_file(path)}};
  }
  void write(const fs::path& dir) const {
    write_file(dir / "manifest.json", j_.dump(2) + "\n");
  }

 private:
  json j_;
};

std::vector<Emotion> labels_of(const std::vector<GaitSequence>& data) {
  std::vector<Emotion> out;
  out.reserve(data.size());
  for (const auto& g : data) {
    check_value(g.label.has_value(), "evaluation needs labeled gaits");
    out.push_back(*g.label);
  }
  return out;
}

std::vector<int> all_rows(std::size_t n) {
  std::vector<int> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<int>(i);
  return rows;
}

// ---------------------------------------------------------------------
// synth

void cmd_synth(int per_class, int frames, std::uint64_t seed,
               double frame_rate_hz, const std::string& out) {
  fs::path dir = prepare_out(out);
  auto data = synth_dataset(per_class, frames, seed, frame_rate_hz);
  save_gait_batch(data, dir / "dataset.egt");

  Manifest m("synth", "", seed, out);
  m.arg("per_class", per_class);
  m.arg("frames", frames);
  m.arg("frame_rate_hz", frame_rate_hz);
  m.write(dir);
  std::cout << "wrote " << (dir / "dataset.egt").string() << " ("
            << data.size() << " gaits)\n";
}

// ---------------------------------------------------------------------
// train-gen

void cmd_train_gen(const std::string& config_path, const std::string& data_path,
                   const std::optional<std::uint64_t>& seed,
                   const std::string& out) {
  fs::path dir = prepare_out(out);
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.seed = *seed;
  auto data = load_gaits(data_path);

  StepGen model(cfg.gen_config(), cfg.seed);
  GenTrainResult res = train_generator(model, data, cfg);
  save_generator(model, dir / "generator.stpg");

  std::string csv = "epoch,recon,objective\n";
  for (int e = 0; e < res.epochs_run; ++e) {
    csv += std::to_string(e + 1) + "," + num(res.recon[e]) + "," +
           num(res.objective[e]) + "\n";
  }
  write_file(dir / "loss.csv", csv);

  Manifest m("train-gen", config_path, cfg.seed, out);
  m.input("config", config_path);
  m.input("data", data_path);
  m.write(dir);
  std::cout << "trained generator for " << res.epochs_run << " epochs; wrote "
            << (dir / "generator.stpg").string() << "\n";
}

// ---------------------------------------------------------------------
// generate

void cmd_generate(const std::string& checkpoint, const std::string& label,
                  int count, std::uint64_t seed, std::uint64_t first_index,
                  const std::string& out) {
  fs::path dir = prepare_out(out);
  Emotion emotion = emotion_from_name(label);
  check_value(count >= 1, "count must be at least 1");
  StepGen model = load_generator(checkpoint);
  auto gaits = model.generate(emotion, count, seed, first_index);
  save_gait_batch(gaits, dir / "generated.egt");

  Manifest m("generate", "", seed, out);
  m.arg("label", emotion_name(emotion));
  m.arg("count", count);
  m.arg("first_index", first_index);
  m.input("checkpoint", checkpoint);
  m.write(dir);
  std::cout << "wrote " << (dir / "generated.egt").string() << " (" << count
            << " " << emotion_name(emotion) << " gaits)\n";
}

// ---------------------------------------------------------------------
// train-clf

void cmd_train_clf(const std::string& config_path, const std::string& data_path,
                   const std::string& mode, const std::string& augment_path,
                   const std::optional<std::uint64_t>& seed,
                   const std::string& out) {
  if (mode == "step+aug") {
    check_value(!augment_path.empty(), "mode step+aug needs --augment");
  } else {
    check_value(augment_path.empty(), "--augment is only valid with step+aug");
  }
  fs::path dir = prepare_out(out);
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.seed = *seed;
  auto data = load_gaits(data_path);
  std::vector<GaitSequence> augment;
  if (!augment_path.empty()) augment = load_gaits(augment_path);

  bool hybrid = mode != "baseline";
  StepClf model(cfg.clf_config(hybrid), cfg.seed);
  ClfTrainResult res = train_classifier(model, data, augment, cfg);
  save_classifier(model, dir / "classifier.stpc");

  std::string csv = "epoch,train_loss,train_accuracy,val_accuracy\n";
  for (int e = 0; e < res.epochs_run; ++e) {
    csv += std::to_string(e + 1) + "," + num(res.train_loss[e]) + "," +
           num(res.train_accuracy[e]) + "," + num(res.val_accuracy[e]) + "\n";
  }
  write_file(dir / "metrics.csv", csv);

  // Held-out test metrics with the restored best-validation parameters.
  std::vector<GaitSequence> test_set;
  for (int i : res.split.test) test_set.push_back(data[static_cast<std::size_t>(i)]);
  double test_macro = 0.0, test_frac = 0.0;
  if (!test_set.empty()) {
    auto preds = model.predict(test_set, all_rows(test_set.size()));
    auto truths = labels_of(test_set);
    ConfusionMatrix cm = confusion(preds, truths);
    test_macro = macro_accuracy(cm);
    test_frac = fraction_correct(cm);
  }
  save_gait_batch(test_set, dir / "test.egt");

  std::string summary = "key,value\n";
  summary += "mode," + mode + "\n";
  summary += "best_epoch," + std::to_string(res.best_epoch) + "\n";
  summary += "epochs_run," + std::to_string(res.epochs_run) + "\n";
  summary += "best_val_accuracy," + num(res.best_val_accuracy) + "\n";
  summary += "test_macro_accuracy," + num(test_macro) + "\n";
  summary += "test_fraction_correct," + num(test_frac) + "\n";
  summary += "train_size," + std::to_string(res.split.train.size()) + "\n";
  summary += "augment_size," + std::to_string(augment.size()) + "\n";
  summary += "val_size," + std::to_string(res.split.val.size()) + "\n";
  summary += "test_size," + std::to_string(res.split.test.size()) + "\n";
  write_file(dir / "summary.csv", summary);

  Manifest m("train-clf", config_path, cfg.seed, out);
  m.arg("mode", mode);
  m.input("config", config_path);
  m.input("data", data_path);
  if (!augment_path.empty()) m.input("augment", augment_path);
  m.write(dir);
  std::cout << "trained " << mode << " classifier: best val "
            << num(res.best_val_accuracy) << " at epoch " << res.best_epoch
            << ", test accuracy " << num(test_frac) << "\n";
}

// ---------------------------------------------------------------------
// eval

void cmd_eval(const std::string& checkpoint, const std::string& data_path,
              const std::string& generated_path, const std::string& out) {
  fs::path dir = prepare_out(out);
  StepClf model = load_classifier(checkpoint);
  auto data = load_gaits(data_path);
  check_data(!data.empty(), "no gaits in " + data_path);

  auto truths = labels_of(data);
  auto preds = model.predict(data, all_rows(data.size()));
  ConfusionMatrix cm = confusion(preds, truths);
  write_file(dir / "confusion.csv", confusion_csv(cm));

  std::string csv = "metric,value\n";
  csv += "macro_accuracy," + num(macro_accuracy(cm)) + "\n";
  csv += "fraction_correct," + num(fraction_correct(cm)) + "\n";
  csv += "count," + std::to_string(data.size()) + "\n";
  if (!generated_path.empty()) {
    auto generated = load_gaits(generated_path);
    // Distribution distance in the classifier's 64-dim embedding and in
    // raw affective-feature space.
    Tensor real_emb = penultimate_features(model, data, all_rows(data.size()));
    Tensor gen_emb =
        penultimate_features(model, generated, all_rows(generated.size()));
    csv += "fid_penultimate," + num(fid(real_emb, gen_emb)) + "\n";
    csv += "fid_affective," +
           num(fid(affective_matrix(data), affective_matrix(generated))) + "\n";
  }
  write_file(dir / "metrics.csv", csv);

  Manifest m("eval", "", 0, out);
  m.input("checkpoint", checkpoint);
  m.input("data", data_path);
  if (!generated_path.empty()) m.input("generated", generated_path);
  m.write(dir);
  std::cout << "accuracy " << num(fraction_correct(cm)) << " over "
            << data.size() << " gaits; wrote "
            << (dir / "metrics.csv").string() << "\n";
}

// ---------------------------------------------------------------------
// saliency

void cmd_saliency(const std::string& checkpoint, const std::string& gait_path,
                  const std::string& class_name, const std::string& axis,
                  int index, bool plain, const std::string& out) {
  fs::path dir = prepare_out(out);
  Emotion target = emotion_from_name(class_name);
  int axis_id = axis_from_name(axis);
  StepClf model = load_classifier(checkpoint);
  auto gaits = load_gaits(gait_path);
  check_value(index >= 0 && index < static_cast<int>(gaits.size()),
              "gait index out of range");

  SaliencyMap map = saliency_map(model, gaits[static_cast<std::size_t>(index)],
                                 target, axis_id, !plain);
  save_saliency_csv(map, dir / "saliency.csv");
  save_saliency_pgm(map, dir / "saliency.pgm");

  Manifest m("saliency", "", 0, out);
  m.arg("class", emotion_name(target));
  m.arg("axis", axis);
  m.arg("index", index);
  m.arg("guided", !plain);
  m.input("checkpoint", checkpoint);
  m.input("gait", gait_path);
  m.write(dir);
  std::cout << "wrote " << (dir / "saliency.csv").string() << " and "
            << (dir / "saliency.pgm").string() << "\n";
}

// ---------------------------------------------------------------------
// augcurve

void cmd_augcurve(const std::string& config_path, const std::string& data_path,
                  const std::string& checkpoint, std::vector<int> sizes,
                  const std::optional<std::uint64_t>& seed,
                  const std::string& out) {
  check_value(!sizes.empty(), "--sizes needs at least one entry");
  for (int s : sizes) check_value(s >= 0, "augment sizes must be >= 0");

  fs::path dir = prepare_out(out);
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.seed = *seed;
  auto data = load_gaits(data_path);
  StepGen gen = load_generator(checkpoint);

  // Total size s splits across classes round-robin: floor(s/4) each plus
  // one extra for the first s mod 4 classes. Sampling once per class and
  // slicing prefixes makes the sets nested across sizes.
  auto class_share = [](int total, int c) {
    return total / kNumEmotions + (c < total % kNumEmotions ? 1 : 0);
  };
  std::vector<std::vector<GaitSequence>> pools(kNumEmotions);
  for (int c = 0; c < kNumEmotions; ++c) {
    int most = 0;
    for (int s : sizes) most = std::max(most, class_share(s, c));
    if (most > 0)
      pools[static_cast<std::size_t>(c)] =
          gen.generate(emotion_from_index(c), most, cfg.seed);
  }

  std::string csv = "augment_size,test_accuracy\n";
  for (int s : sizes) {
    std::vector<GaitSequence> augment;
    for (int c = 0; c < kNumEmotions; ++c) {
      const auto& pool = pools[static_cast<std::size_t>(c)];
      for (int i = 0; i < class_share(s, c); ++i)
        augment.push_back(pool[static_cast<std::size_t>(i)]);
    }
    StepClf model(cfg.clf_config(true), cfg.seed);
    ClfTrainResult res = train_classifier(model, data, augment, cfg);
    std::vector<GaitSequence> test_set;
    for (int i : res.split.test)
      test_set.push_back(data[static_cast<std::size_t>(i)]);
    check_data(!test_set.empty(), "test split is empty; need more data");
    auto preds = model.predict(test_set, all_rows(test_set.size()));
    double acc = fraction_correct(preds, labels_of(test_set));
    csv += std::to_string(s) + "," + num(acc) + "\n";
    std::cout << "augment " << s << ": test accuracy " << num(acc) << "\n";
  }
  write_file(dir / "augcurve.csv", csv);

  Manifest m("augcurve", config_path, cfg.seed, out);
  m.arg("sizes", sizes);
  m.input("config", config_path);
  m.input("data", data_path);
  m.input("checkpoint", checkpoint);
  m.write(dir);
  std::cout << "wrote " << (dir / "augcurve.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STEP gait emotion toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Emit a synthetic labeled dataset");
  int sy_per_class = 100, sy_frames = 75;
  std::uint64_t sy_seed = 0;
  double sy_rate = 25.0;
  std::string sy_out;
  synth->add_option("--per-class", sy_per_class, "Gaits per emotion class");
  synth->add_option("--frames", sy_frames, "Frames per gait");
  synth->add_option("--seed", sy_seed, "Random seed");
  synth->add_option("--frame-rate", sy_rate, "Frames per second");
  synth->add_option("--out", sy_out, "Output directory")->required();
  synth->callback(
      [&] { cmd_synth(sy_per_class, sy_frames, sy_seed, sy_rate, sy_out); });

  // train-gen
  auto* tg = app.add_subcommand("train-gen", "Train the gait generator");
  std::string tg_config, tg_data, tg_out;
  std::uint64_t tg_seed = 0;
  tg->add_option("--config", tg_config, "Training config file")->required();
  tg->add_option("--data", tg_data, "Gait dataset (.egt or .json)")->required();
  auto* tg_seed_opt = tg->add_option("--seed", tg_seed, "Override config seed");
  tg->add_option("--out", tg_out, "Output directory")->required();
  tg->callback([&] {
    std::optional<std::uint64_t> s;
    if (tg_seed_opt->count() > 0) s = tg_seed;
    cmd_train_gen(tg_config, tg_data, s, tg_out);
  });

  // generate
  auto* gen = app.add_subcommand("generate", "Sample gaits from a generator");
  std::string ge_ckpt, ge_label, ge_out;
  int ge_count = 1;
  std::uint64_t ge_seed = 0, ge_first = 0;
  gen->add_option("--checkpoint", ge_ckpt, "Generator checkpoint (.stpg)")
      ->required();
  gen->add_option("--label", ge_label, "Emotion: angry|neutral|happy|sad")
      ->required();
  gen->add_option("--count", ge_count, "Number of gaits")->required();
  gen->add_option("--seed", ge_seed, "Noise seed");
  gen->add_option("--first-index", ge_first, "First per-sample noise index");
  gen->add_option("--out", ge_out, "Output directory")->required();
  gen->callback(
      [&] { cmd_generate(ge_ckpt, ge_label, ge_count, ge_seed, ge_first, ge_out); });

  // train-clf
  auto* tc = app.add_subcommand("train-clf", "Train an emotion classifier");
  std::string tc_config, tc_data, tc_mode = "step", tc_augment, tc_out;
  std::uint64_t tc_seed = 0;
  tc->add_option("--config", tc_config, "Training config file")->required();
  tc->add_option("--data", tc_data, "Gait dataset")->required();
  tc->add_option("--mode", tc_mode, "baseline | step | step+aug")
      ->check(CLI::IsMember({"baseline", "step", "step+aug"}));
  tc->add_option("--augment", tc_augment, "Generated gaits (step+aug only)");
  auto* tc_seed_opt = tc->add_option("--seed", tc_seed, "Override config seed");
  tc->add_option("--out", tc_out, "Output directory")->required();
  tc->callback([&] {
    std::optional<std::uint64_t> s;
    if (tc_seed_opt->count() > 0) s = tc_seed;
    cmd_train_clf(tc_config, tc_data, tc_mode, tc_augment, s, tc_out);
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a classifier on a dataset");
  std::string ev_ckpt, ev_data, ev_generated, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Classifier checkpoint (.stpc)")
      ->required();
  ev->add_option("--data", ev_data, "Labeled gait dataset")->required();
  ev->add_option("--generated", ev_generated,
                 "Generated gaits for distribution distance");
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev->callback([&] { cmd_eval(ev_ckpt, ev_data, ev_generated, ev_out); });

  // saliency
  auto* sa = app.add_subcommand("saliency", "Guided-backprop saliency map");
  std::string sa_ckpt, sa_gait, sa_class, sa_axis = "z", sa_out;
  int sa_index = 0;
  bool sa_plain = false;
  sa->add_option("--checkpoint", sa_ckpt, "Classifier checkpoint (.stpc)")
      ->required();
  sa->add_option("--gait", sa_gait, "Gait file (.json or .egt)")->required();
  sa->add_option("--class", sa_class, "Target emotion")->required();
  sa->add_option("--axis", sa_axis, "Coordinate axis: x|y|z");
  sa->add_option("--index", sa_index, "Gait index within the file");
  sa->add_flag("--plain", sa_plain, "Plain backprop instead of guided");
  sa->add_option("--out", sa_out, "Output directory")->required();
  sa->callback([&] {
    cmd_saliency(sa_ckpt, sa_gait, sa_class, sa_axis, sa_index, sa_plain,
                 sa_out);
  });

  // augcurve
  auto* au = app.add_subcommand("augcurve",
                                "Test accuracy vs augmentation size sweep");
  std::string au_config, au_data, au_ckpt, au_out;
  std::vector<int> au_sizes;
  std::uint64_t au_seed = 0;
  au->add_option("--config", au_config, "Training config file")->required();
  au->add_option("--data", au_data, "Real gait dataset")->required();
  au->add_option("--checkpoint", au_ckpt, "Generator checkpoint (.stpg)")
      ->required();
  au->add_option("--sizes", au_sizes, "Comma-separated total augment sizes")
      ->required()
      ->delimiter(',');
  auto* au_seed_opt = au->add_option("--seed", au_seed, "Override config seed");
  au->add_option("--out", au_out, "Output directory")->required();
  au->callback([&] {
    std::optional<std::uint64_t> s;
    if (au_seed_opt->count() > 0) s = au_seed;
    cmd_augcurve(au_config, au_data, au_ckpt, au_sizes, s, au_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
