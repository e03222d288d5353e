#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "step/checkpoint.hpp"

using namespace step;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const char* name) : path(temp_file(name)) {}
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("checkpoint byte layout is pinned little-endian") {
  TempFile f("step_ckpt_layout.bin");
  Checkpoint cp;
  cp.magic = kGeneratorMagic;
  cp.tensors["a"] = Tensor::scalar(1.5);
  save_checkpoint(cp, f.path);

  std::string bytes = slurp(f.path);
  const unsigned char expect[] = {
      'S', 'T', 'P', 'G',            // magic
      1,   0,   0,   0,              // version 1
      0,   0,   0,   0,              // no metadata
      1,   0,   0,   0,              // one tensor
      1,   0,   0,   0,   'a',       // name
      1,   0,   0,   0,              // rank 1
      1,   0,   0,   0,              // dim 1
      0,   0,   0,   0,   0, 0, 0xF8, 0x3F};  // 1.5 as f64 LE
  REQUIRE(bytes.size() == sizeof expect);
  CHECK(std::memcmp(bytes.data(), expect, sizeof expect) == 0);
}

TEST_CASE("checkpoint round trip preserves everything bitwise") {
  TempFile f("step_ckpt_roundtrip.bin");
  Checkpoint cp;
  cp.magic = kClassifierMagic;
  cp.metadata["frames"] = "75";
  cp.metadata["note"] = "";  // empty values survive
  cp.tensors["w"] = Tensor::from({2, 3}, {1, -2, 3.25, 4e-300, 5e300, -0.0});
  cp.tensors["b"] = Tensor::from({3}, {0.1, 0.2, 0.3});
  save_checkpoint(cp, f.path);

  Checkpoint back = load_checkpoint(f.path);
  CHECK(back.magic == cp.magic);
  CHECK(back.metadata == cp.metadata);
  REQUIRE(back.tensors.size() == 2);
  for (const auto& [name, tensor] : cp.tensors) {
    REQUIRE(back.tensors.count(name) == 1);
    const Tensor& b = back.tensors.at(name);
    REQUIRE(b.same_shape(tensor));
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      real lhs = b[i], rhs = tensor[i];
      CHECK(std::memcmp(&lhs, &rhs, sizeof(real)) == 0);
    }
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempFile f("step_ckpt_corrupt.bin");
  Checkpoint cp;
  cp.magic = kGeneratorMagic;
  cp.tensors["a"] = Tensor::scalar(2.0);
  save_checkpoint(cp, f.path);
  std::string good = slurp(f.path);

  spit(f.path, "EGT1somethingelse");
  CHECK_THROWS_AS(load_checkpoint(f.path), DataError);

  spit(f.path, good.substr(0, good.size() - 3));  // truncated payload
  CHECK_THROWS_AS(load_checkpoint(f.path), DataError);

  spit(f.path, good + "x");  // trailing junk
  CHECK_THROWS_AS(load_checkpoint(f.path), DataError);

  std::string bad_version = good;
  bad_version[4] = 9;
  spit(f.path, bad_version);
  CHECK_THROWS_AS(load_checkpoint(f.path), DataError);

  CHECK_THROWS_AS(load_checkpoint(temp_file("step_ckpt_missing.bin")),
                  DataError);

  Checkpoint bad_magic;
  bad_magic.magic = "NOPE";
  CHECK_THROWS_AS(save_checkpoint(bad_magic, f.path), ValueError);
}

TEST_CASE("generator checkpoints rebuild an identical model") {
  TempFile f("step_ckpt_gen.bin");
  GenConfig cfg;
  cfg.frames = 6;
  cfg.latent_dim = 2;
  cfg.temporal_kernel = 3;
  cfg.lambda_motion = 0.5;
  cfg.beta_kl = 0.25;
  StepGen model(cfg, 41);
  save_generator(model, f.path);

  StepGen back = load_generator(f.path);
  CHECK(back.config().frames == cfg.frames);
  CHECK(back.config().latent_dim == cfg.latent_dim);
  CHECK(back.config().temporal_kernel == cfg.temporal_kernel);
  CHECK(back.config().lambda_motion == cfg.lambda_motion);
  CHECK(back.config().beta_kl == cfg.beta_kl);
  CHECK(back.trainable_names() == model.trainable_names());
  CHECK(back.persistent_names() == model.persistent_names());
  for (const std::string& name : model.persistent_names()) {
    const Tensor& p = model.store().at(name);
    const Tensor& q = back.store().at(name);
    REQUIRE(p.same_shape(q));
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p[i] == q[i]);
  }

  // Same samples from both models: generation state is fully captured.
  auto a = model.generate(Emotion::Happy, 2, 77);
  auto b = back.generate(Emotion::Happy, 2, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t g = 0; g < a.size(); ++g) {
    for (std::size_t i = 0; i < a[g].positions.size(); ++i) {
      REQUIRE(a[g].positions[i] == b[g].positions[i]);
    }
  }

  CHECK_THROWS_AS(load_classifier(f.path), DataError);  // wrong magic
}

TEST_CASE("classifier checkpoints rebuild an identical model") {
  TempFile f("step_ckpt_clf.bin");
  ClfConfig cfg;
  cfg.frames = 8;
  cfg.temporal_kernel = 3;
  cfg.hybrid = true;
  StepClf model(cfg, 43);

  Tensor mean({kAffectiveDim}), stddev({kAffectiveDim});
  for (int j = 0; j < kAffectiveDim; ++j) {
    mean[static_cast<std::size_t>(j)] = static_cast<real>(j) * real(0.1);
    stddev[static_cast<std::size_t>(j)] = real(1) + static_cast<real>(j % 3);
  }
  model.set_affect_stats(mean, stddev);
  save_classifier(model, f.path);

  StepClf back = load_classifier(f.path);
  CHECK(back.config().frames == cfg.frames);
  CHECK(back.config().hybrid == cfg.hybrid);
  CHECK(back.trainable_names() == model.trainable_names());
  for (const std::string& name : model.persistent_names()) {
    const Tensor& p = model.store().at(name);
    const Tensor& q = back.store().at(name);
    REQUIRE(p.same_shape(q));
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p[i] == q[i]);
  }

  CHECK_THROWS_AS(load_generator(f.path), DataError);

  // A checkpoint with a tensor missing cannot rebuild.
  Checkpoint cp = load_checkpoint(f.path);
  cp.tensors.erase("clf/fc/w");
  TempFile broken("step_ckpt_broken.bin");
  save_checkpoint(cp, broken.path);
  CHECK_THROWS_AS(load_classifier(broken.path), ValueError);
}
