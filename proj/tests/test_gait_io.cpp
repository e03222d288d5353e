#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "step/gait_io.hpp"
#include "step/rng.hpp"
#include "step/sha256.hpp"

using namespace step;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path d = fs::temp_directory_path() / "step_gait_io_test";
  fs::create_directories(d);
  return d;
}

GaitSequence random_gait(int frames, std::uint64_t seed,
                         std::optional<Emotion> label) {
  RngStream r(seed, "gait");
  GaitSequence g = GaitSequence::zeros(frames);
  for (std::size_t i = 0; i < g.positions.size(); ++i) {
    g.positions[i] = static_cast<real>(r.gaussian());
  }
  g.frame_rate_hz = 25.0;
  g.label = label;
  return g;
}

bool bitwise_equal(const GaitSequence& a, const GaitSequence& b) {
  if (!a.positions.same_shape(b.positions)) return false;
  for (std::size_t i = 0; i < a.positions.size(); ++i) {
    if (a.positions[i] != b.positions[i]) return false;
  }
  return a.frame_rate_hz == b.frame_rate_hz && a.label == b.label;
}

}  // namespace

TEST_CASE("gait JSON round trip is lossless") {
  fs::path p = temp_dir() / "one.json";
  GaitSequence g = random_gait(7, 100, Emotion::Sad);
  save_gait_json(g, p);
  GaitSequence back = load_gait_json(p);
  CHECK(bitwise_equal(g, back));

  // Unlabeled gaits stay unlabeled.
  GaitSequence u = random_gait(4, 101, std::nullopt);
  save_gait_json(u, p);
  CHECK(!load_gait_json(p).label.has_value());
}

TEST_CASE("gait JSON rejects malformed documents") {
  fs::path d = temp_dir();
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(d / name);
    out << text;
    return d / name;
  };
  CHECK_THROWS_AS(load_gait_json(d / "missing.json"), DataError);
  CHECK_THROWS_AS(load_gait_json(write("bad.json", "{ not json")), DataError);
  CHECK_THROWS_AS(load_gait_json(write("empty.json", "{}")), DataError);
  CHECK_THROWS_AS(
      load_gait_json(write("noframes.json",
                           R"({"version":1,"joints":[],"frames":[]})")),
      DataError);

  // Wrong joint order must be rejected, not silently reindexed.
  GaitSequence g = random_gait(2, 102, std::nullopt);
  fs::path p = d / "swapped.json";
  save_gait_json(g, p);
  std::ifstream in(p);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  auto pos = text.find("\"spine\"");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 7, "\"pelvis\"");
  CHECK_THROWS_AS(load_gait_json(write("swapped2.json", text)), DataError);
}

TEST_CASE("gait batch round trip preserves mixed-length labeled data") {
  fs::path p = temp_dir() / "batch.egt";
  std::vector<GaitSequence> gaits;
  gaits.push_back(random_gait(5, 103, Emotion::Angry));
  gaits.push_back(random_gait(9, 104, std::nullopt));
  gaits.push_back(random_gait(3, 105, Emotion::Neutral));
  gaits.push_back(random_gait(75, 106, Emotion::Happy));
  save_gait_batch(gaits, p);
  std::vector<GaitSequence> back = load_gait_batch(p);
  REQUIRE(back.size() == gaits.size());
  for (std::size_t i = 0; i < gaits.size(); ++i) {
    CHECK(bitwise_equal(gaits[i], back[i]));
  }

  // Same bytes when written twice (no timestamps or map ordering leaks).
  fs::path p2 = temp_dir() / "batch2.egt";
  save_gait_batch(gaits, p2);
  CHECK(Sha256::of_file(p) == Sha256::of_file(p2));
}

TEST_CASE("gait batch rejects corrupt files") {
  fs::path d = temp_dir();
  fs::path good = d / "good.egt";
  save_gait_batch({random_gait(4, 107, Emotion::Sad)}, good);

  SUBCASE("bad magic") {
    fs::path bad = d / "badmagic.egt";
    fs::copy_file(good, bad, fs::copy_options::overwrite_existing);
    std::fstream f(bad, std::ios::in | std::ios::out | std::ios::binary);
    f.write("NOPE", 4);
    f.close();
    CHECK_THROWS_AS(load_gait_batch(bad), DataError);
  }
  SUBCASE("truncated") {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(d / "trunc.egt", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_gait_batch(d / "trunc.egt"), DataError);
  }
  SUBCASE("empty batch refused on write") {
    CHECK_THROWS_AS(save_gait_batch({}, d / "empty.egt"), ValueError);
  }
}

TEST_CASE("load_gaits dispatches on extension") {
  fs::path d = temp_dir();
  GaitSequence g = random_gait(6, 108, Emotion::Happy);
  save_gait_json(g, d / "solo.json");
  save_gait_batch({g, g}, d / "pair.egt");
  CHECK(load_gaits(d / "solo.json").size() == 1);
  CHECK(load_gaits(d / "pair.egt").size() == 2);
  CHECK_THROWS_AS(load_gaits(d / "what.txt"), DataError);
}

TEST_CASE("sha256 known answers") {
  CHECK(Sha256::of_string("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(Sha256::of_string("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(Sha256::of_string(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  // Incremental == one-shot.
  Sha256 h;
  h.update("ab", 2);
  h.update("c", 1);
  CHECK(h.hex_digest() ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
