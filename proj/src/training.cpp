#include "step/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace step {

void TrainConfig::validate() const {
  check_value(batch_size >= 2, "batch_size must be at least 2");
  check_value(epochs >= 1, "epochs must be positive");
  check_value(initial_lr > 0, "initial_lr must be positive");
  check_value(decay_factor > 0 && decay_factor <= 1,
              "decay_factor must lie in (0, 1]");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    check_value(decay_epochs[i] >= 1 && decay_epochs[i] < epochs,
                "decay epochs must lie in [1, epochs)");
    check_value(i == 0 || decay_epochs[i] > decay_epochs[i - 1],
                "decay epochs must be strictly increasing");
  }
  check_value(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
              "Adam betas must lie in [0, 1)");
  check_value(epsilon > 0, "Adam epsilon must be positive");
  check_value(weight_decay >= 0, "weight_decay must be non-negative");
  check_value(split_train > 0 && split_val >= 0 && split_test >= 0,
              "split ratios must be non-negative with a nonzero train share");
  check_value(std::abs(split_train + split_val + split_test - 1.0) <= 1e-9,
              "split ratios must sum to 1");
  check_value(stop_loss_ratio >= 0 && stop_val_accuracy >= 0 &&
                  stop_val_accuracy <= 1,
              "early-stop settings out of range");
  gen_config().validate();
  clf_config(false).validate();
}

GenConfig TrainConfig::gen_config() const {
  GenConfig g;
  g.frames = frames;
  g.latent_dim = latent_dim;
  g.temporal_kernel = temporal_kernel;
  g.lambda_motion = lambda_motion;
  g.lambda_anchor = lambda_anchor;
  g.beta_kl = beta_kl;
  return g;
}

ClfConfig TrainConfig::clf_config(bool hybrid) const {
  ClfConfig c;
  c.frames = frames;
  c.temporal_kernel = temporal_kernel;
  c.hybrid = hybrid;
  return c;
}

TrainConfig TrainConfig::generator_defaults() { return TrainConfig(); }

TrainConfig TrainConfig::classifier_defaults() {
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.decay_epochs = {250, 375, 438};
  return cfg;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_num(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ValueError("config key '" + key + "': bad number '" + value + "'");
  }
  check_value(used == value.size(),
              "config key '" + key + "': trailing junk in '" + value + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  double d = parse_num(key, value);
  check_value(d == std::floor(d) && std::abs(d) < 1e9,
              "config key '" + key + "' must be an integer");
  return static_cast<int>(d);
}

std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  if (trim(value).empty()) return out;
  std::istringstream is(value);
  std::string item;
  while (std::getline(is, item, ',')) {
    out.push_back(parse_int(key, trim(item)));
  }
  return out;
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    check_value(eq != std::string::npos, "config line " +
                                             std::to_string(line_no) +
                                             " is not key=value: '" + line +
                                             "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "initial_lr") cfg.initial_lr = parse_num(key, value);
    else if (key == "decay_epochs") cfg.decay_epochs = parse_int_list(key, value);
    else if (key == "decay_factor") cfg.decay_factor = parse_num(key, value);
    else if (key == "beta1") cfg.beta1 = parse_num(key, value);
    else if (key == "beta2") cfg.beta2 = parse_num(key, value);
    else if (key == "epsilon") cfg.epsilon = parse_num(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_num(key, value);
    else if (key == "lambda_motion") cfg.lambda_motion = parse_num(key, value);
    else if (key == "lambda_anchor") cfg.lambda_anchor = parse_num(key, value);
    else if (key == "beta_kl") cfg.beta_kl = parse_num(key, value);
    else if (key == "frames") cfg.frames = parse_int(key, value);
    else if (key == "temporal_kernel") cfg.temporal_kernel = parse_int(key, value);
    else if (key == "latent_dim") cfg.latent_dim = parse_int(key, value);
    else if (key == "split_train") cfg.split_train = parse_num(key, value);
    else if (key == "split_val") cfg.split_val = parse_num(key, value);
    else if (key == "split_test") cfg.split_test = parse_num(key, value);
    else if (key == "seed") {
      double d = parse_num(key, value);
      check_value(d >= 0 && d == std::floor(d), "seed must be a non-negative integer");
      cfg.seed = static_cast<std::uint64_t>(d);
    }
    else if (key == "stop_loss_ratio") cfg.stop_loss_ratio = parse_num(key, value);
    else if (key == "stop_val_accuracy") cfg.stop_val_accuracy = parse_num(key, value);
    else throw ValueError("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  check_value(epoch >= 1 && epoch <= cfg.epochs,
              "epoch " + std::to_string(epoch) + " outside [1, " +
                  std::to_string(cfg.epochs) + "]");
  double lr = cfg.initial_lr;
  for (int d : cfg.decay_epochs) {
    if (d < epoch) lr *= cfg.decay_factor;
  }
  return lr;
}

void adam_step(Bindings& params, const GradMap& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
  check_value(lr >= 0, "negative learning rate");
  ++state.step;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    check_value(it != params.end(), "Adam update for unknown parameter '" +
                                        name + "'");
    Tensor& p = it->second;
    check_shape(p.same_shape(g), "gradient shape mismatch for '" + name + "'");
    if (!g.all_finite()) {
      throw NumericError("non-finite gradient for '" + name + "'");
    }
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape())).first->second;
    check_shape(m.same_shape(p) && v.same_shape(p),
                "optimizer state shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      double pi = p[i] - lr * cfg.weight_decay * double(p[i]);
      double mi = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
      double vi = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
      m[i] = static_cast<real>(mi);
      v[i] = static_cast<real>(vi);
      p[i] = static_cast<real>(pi - lr * (mi / bc1) /
                                        (std::sqrt(vi / bc2) + cfg.epsilon));
    }
  }
}

namespace {

// Largest-remainder quotas: floors plus one extra for the largest
// fractional parts, ties resolved in list order.
std::vector<int> quota_round(const std::vector<double>& ideals, int total) {
  std::vector<int> out(ideals.size());
  std::vector<std::pair<double, std::size_t>> fracs;
  int used = 0;
  for (std::size_t i = 0; i < ideals.size(); ++i) {
    out[i] = static_cast<int>(std::floor(ideals[i] + 1e-12));
    used += out[i];
    fracs.emplace_back(ideals[i] - out[i], i);
  }
  std::stable_sort(fracs.begin(), fracs.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < total - used; ++k) {
    out[fracs[static_cast<std::size_t>(k)].second] += 1;
  }
  return out;
}

}  // namespace

DataSplit split_dataset(const std::vector<GaitSequence>& data,
                        const TrainConfig& cfg) {
  check_value(!data.empty(), "cannot split an empty dataset");
  int n = static_cast<int>(data.size());
  std::array<std::vector<int>, kNumEmotions> by_class;
  for (int i = 0; i < n; ++i) {
    const auto& label = data[static_cast<std::size_t>(i)].label;
    check_value(label.has_value(), "gait " + std::to_string(i) + " is unlabeled");
    by_class[static_cast<std::size_t>(static_cast<int>(*label))].push_back(i);
  }
  for (int c = 0; c < kNumEmotions; ++c) {
    auto& members = by_class[static_cast<std::size_t>(c)];
    check_value(members.empty() || members.size() >= 3,
                std::string("class '") + emotion_name(emotion_from_index(c)) +
                    "' has fewer than 3 members; cannot stratify");
    RngStream r(cfg.seed, "split", static_cast<std::uint64_t>(c));
    r.shuffle(members);
  }

  const std::array<double, 3> ratios{cfg.split_train, cfg.split_val,
                                     cfg.split_test};
  std::vector<int> global = quota_round(
      {ratios[0] * n, ratios[1] * n, ratios[2] * n}, n);

  // Per-class floors first, then hand out the remaining slots to the
  // (class, bucket) pairs with the largest fractional need, subject to the
  // global quotas. Deterministic: sorted by fraction, then class, then
  // bucket order.
  int base[kNumEmotions][3];
  int rem[kNumEmotions];
  std::vector<std::tuple<double, int, int>> cand;  // (-frac, class, bucket)
  int need[3] = {global[0], global[1], global[2]};
  for (int c = 0; c < kNumEmotions; ++c) {
    int nc = static_cast<int>(by_class[static_cast<std::size_t>(c)].size());
    rem[c] = nc;
    for (int s = 0; s < 3; ++s) {
      double ideal = ratios[static_cast<std::size_t>(s)] * nc;
      base[c][s] = static_cast<int>(std::floor(ideal + 1e-12));
      rem[c] -= base[c][s];
      need[s] -= base[c][s];
      cand.emplace_back(-(ideal - base[c][s]), c, s);
    }
  }
  std::stable_sort(cand.begin(), cand.end());
  for (const auto& [negfrac, c, s] : cand) {
    if (rem[c] > 0 && need[s] > 0) {
      base[c][s] += 1;
      rem[c] -= 1;
      need[s] -= 1;
    }
  }
  // Collision leftovers (rare): any class still holding samples fills any
  // bucket still short, in order.
  for (int c = 0; c < kNumEmotions; ++c) {
    for (int s = 0; s < 3 && rem[c] > 0; ++s) {
      int take = std::min(rem[c], need[s]);
      base[c][s] += take;
      rem[c] -= take;
      need[s] -= take;
    }
  }

  DataSplit split;
  for (int c = 0; c < kNumEmotions; ++c) {
    const auto& members = by_class[static_cast<std::size_t>(c)];
    int at = 0;
    for (int s = 0; s < 3; ++s) {
      auto& bucket = s == 0 ? split.train : s == 1 ? split.val : split.test;
      for (int k = 0; k < base[c][s]; ++k) {
        bucket.push_back(members[static_cast<std::size_t>(at++)]);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace {

// Shuffled index batches; a trailing singleton is dropped because batch
// statistics are undefined over one sample.
std::vector<std::vector<int>> make_batches(std::vector<int> order,
                                           int batch_size, RngStream& r) {
  r.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    std::size_t end = std::min(order.size(), at + batch_size);
    if (end - at < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

GradMap trainable_grads(GradMap all, const std::vector<std::string>& names) {
  GradMap out;
  for (const std::string& name : names) {
    auto it = all.find(name);
    if (it != all.end()) out[name] = std::move(it->second);
  }
  return out;
}

}  // namespace

GenTrainResult train_generator(StepGen& model,
                               const std::vector<GaitSequence>& data,
                               const TrainConfig& cfg) {
  cfg.validate();
  check_value(model.config().frames == cfg.frames &&
                  model.config().latent_dim == cfg.latent_dim,
              "model architecture disagrees with the training config");
  check_value(data.size() >= 2, "generator training needs at least 2 gaits");
  std::vector<int> labels(data.size());
  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_value(data[i].label.has_value(), "generator training data must be labeled");
    labels[i] = static_cast<int>(*data[i].label);
    order[i] = static_cast<int>(i);
  }

  Graph& g = model.train_graph();
  const auto& nodes = model.train_nodes();
  Bindings& store = model.store();
  AdamState adam;
  GenTrainResult result;
  std::uint64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = lr_at_epoch(cfg, epoch);
    RngStream shuffle_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    auto batches = make_batches(order, cfg.batch_size, shuffle_rng);
    check_value(!batches.empty(), "dataset too small for one batch");

    double recon_sum = 0, total_sum = 0;
    long seen = 0;
    for (const auto& batch : batches) {
      int bn = static_cast<int>(batch.size());
      std::vector<int> batch_labels;
      for (int row : batch) batch_labels.push_back(labels[static_cast<std::size_t>(row)]);

      Tensor pos = model.positions_batch(data, batch);
      RngStream noise_rng(cfg.seed, "noise", step);
      Tensor noise({bn, model.config().latent_dim});
      for (std::size_t i = 0; i < noise.size(); ++i) {
        noise[i] = static_cast<real>(noise_rng.gaussian());
      }
      store["real"] = pos;
      store["enc_x"] = model.encoder_input(pos, batch_labels);
      store["onehot"] = StepGen::onehot(batch_labels);
      store["noise"] = noise;

      g.set_training(true);
      g.forward(nodes.objective, store);
      double objective = g.value(nodes.objective)[0];
      if (!std::isfinite(objective)) {
        throw NumericError("generator objective diverged at epoch " +
                           std::to_string(epoch));
      }
      recon_sum += g.value(nodes.recon)[0];
      total_sum += objective;
      seen += bn;

      GradMap grads = trainable_grads(
          g.backward(nodes.objective, Tensor::scalar(real(1.0 / bn))),
          model.trainable_names());
      adam_step(store, grads, adam, lr, cfg);
      ++step;
    }
    for (const char* key : {"real", "enc_x", "onehot", "noise"}) store.erase(key);

    result.recon.push_back(recon_sum / seen);
    result.objective.push_back(total_sum / seen);
    result.epochs_run = epoch;
    if (cfg.stop_loss_ratio > 0 && epoch > 1 &&
        result.recon.back() <= cfg.stop_loss_ratio * result.recon.front()) {
      break;
    }
  }
  return result;
}

ClfTrainResult train_classifier(StepClf& model,
                                const std::vector<GaitSequence>& data,
                                const std::vector<GaitSequence>& augment,
                                const TrainConfig& cfg) {
  cfg.validate();
  check_value(model.config().frames == cfg.frames,
              "model frame count disagrees with the training config");
  ClfTrainResult result;
  result.split = split_dataset(data, cfg);
  check_value(result.split.train.size() >= 2, "training split too small");
  check_value(!result.split.val.empty(), "validation split is empty");

  // Assemble the training pool: the real train split plus all synthetic
  // augment gaits. Validation stays purely real.
  std::vector<GaitSequence> pool;
  pool.reserve(result.split.train.size() + augment.size());
  for (int row : result.split.train) {
    pool.push_back(data[static_cast<std::size_t>(row)]);
  }
  for (const GaitSequence& g : augment) {
    check_value(g.label.has_value(), "augment gaits must be labeled");
    pool.push_back(g);
  }

  std::vector<int> pool_labels(pool.size());
  std::vector<int> order(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pool_labels[i] = static_cast<int>(*pool[i].label);
    order[i] = static_cast<int>(i);
  }

  // Affective features: extracted once, standardized by the training pool.
  Tensor pool_affect, val_affect;
  if (model.config().hybrid) {
    Tensor raw = affective_matrix(pool);
    Tensor mean({kAffectiveDim}), stddev({kAffectiveDim});
    int pn = raw.dim(0);
    for (int j = 0; j < kAffectiveDim; ++j) {
      double s = 0;
      for (int i = 0; i < pn; ++i) s += raw.at2(i, j);
      double mu = s / pn;
      double ss = 0;
      for (int i = 0; i < pn; ++i) {
        double d = raw.at2(i, j) - mu;
        ss += d * d;
      }
      mean[static_cast<std::size_t>(j)] = static_cast<real>(mu);
      stddev[static_cast<std::size_t>(j)] =
          static_cast<real>(std::sqrt(ss / std::max(1, pn - 1)));
    }
    model.set_affect_stats(mean, stddev);
    pool_affect = model.standardize_affect(raw);
  }

  std::vector<GaitSequence> val_set;
  std::vector<int> val_labels;
  for (int row : result.split.val) {
    val_set.push_back(data[static_cast<std::size_t>(row)]);
    val_labels.push_back(static_cast<int>(*data[static_cast<std::size_t>(row)].label));
  }

  Graph& g = model.graph();
  const auto& nodes = model.nodes();
  Bindings& store = model.store();
  AdamState adam;

  auto snapshot = [&]() {
    Bindings out;
    for (const std::string& name : model.persistent_names()) {
      out[name] = store.at(name);
    }
    return out;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = lr_at_epoch(cfg, epoch);
    RngStream shuffle_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    auto batches = make_batches(order, cfg.batch_size, shuffle_rng);
    check_value(!batches.empty(), "training split too small for one batch");

    double loss_sum = 0;
    long seen = 0, correct = 0;
    for (const auto& batch : batches) {
      int bn = static_cast<int>(batch.size());
      Tensor labels({bn});
      for (int i = 0; i < bn; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<real>(
            pool_labels[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])]);
      }
      store["x"] = batch_positions(pool, batch, cfg.frames);
      store["labels"] = labels;
      if (model.config().hybrid) {
        Tensor aff({bn, kAffectiveDim});
        for (int i = 0; i < bn; ++i) {
          for (int j = 0; j < kAffectiveDim; ++j) {
            aff.at2(i, j) = pool_affect.at2(batch[static_cast<std::size_t>(i)], j);
          }
        }
        store["affect_std"] = aff;
      }

      g.set_training(true);
      g.forward(nodes.xent, store);
      double loss = g.value(nodes.xent)[0];
      if (!std::isfinite(loss)) {
        throw NumericError("classifier loss diverged at epoch " +
                           std::to_string(epoch));
      }
      loss_sum += loss;
      const Tensor& logits = g.value(nodes.logits);
      for (int i = 0; i < bn; ++i) {
        if (static_cast<int>(predict_class(logits, i)) ==
            static_cast<int>(labels[static_cast<std::size_t>(i)])) {
          ++correct;
        }
      }
      seen += bn;

      GradMap grads = trainable_grads(
          g.backward(nodes.xent, Tensor::scalar(real(1.0 / bn))),
          model.trainable_names());
      adam_step(store, grads, adam, lr, cfg);
    }
    for (const char* key : {"x", "labels", "affect_std"}) store.erase(key);

    // Validation accuracy in eval mode (fraction correct).
    std::vector<int> val_rows(val_set.size());
    for (std::size_t i = 0; i < val_rows.size(); ++i) val_rows[i] = static_cast<int>(i);
    auto preds = model.predict(val_set, val_rows);
    long val_correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (static_cast<int>(preds[i]) == val_labels[i]) ++val_correct;
    }
    double val_acc = double(val_correct) / double(preds.size());

    result.train_loss.push_back(loss_sum / seen);
    result.train_accuracy.push_back(double(correct) / double(seen));
    result.val_accuracy.push_back(val_acc);
    result.epochs_run = epoch;
    if (val_acc > result.best_val_accuracy || result.best_epoch == 0) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      result.best_params = snapshot();
    }
    if (cfg.stop_val_accuracy > 0 && val_acc >= cfg.stop_val_accuracy) break;
  }

  for (auto& [name, value] : result.best_params) store[name] = value;
  return result;
}

}  // namespace step
