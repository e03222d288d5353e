#include "step/gait_io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace step {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'E', 'G', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kNoLabel = 255;

// Little-endian primitives; explicit so the format is identical everywhere.
template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  std::uint8_t bytes[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = std::uint8_t(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put<std::uint64_t>(out, u);
}

template <typename T>
T get(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  std::uint8_t bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  check_data(in.good(), "unexpected end of gait batch file");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= U(bytes[i]) << (8 * i);
  return static_cast<T>(u);
}

double get_f64(std::istream& in) {
  std::uint64_t u = get<std::uint64_t>(in);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  check_data(s.size() <= UINT16_MAX, "string too long for batch file");
  put<std::uint16_t>(out, std::uint16_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& in) {
  std::uint16_t len = get<std::uint16_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  check_data(in.good(), "unexpected end of gait batch file");
  return s;
}

}  // namespace

GaitSequence load_gait_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  check_data(in.good(), "cannot open gait file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
  try {
    check_data(doc.is_object(), "gait document must be a JSON object");
    check_data(doc.value("version", 0) == 1,
               "unsupported gait file version in " + path.string());
    check_data(doc.contains("joints") && doc["joints"].is_array(),
               "gait file missing joint list");
    const auto& names = joint_names();
    check_data(doc["joints"].size() == joints::kCount,
               "gait file must list " + std::to_string(joints::kCount) +
                   " joints");
    for (int j = 0; j < joints::kCount; ++j) {
      check_data(doc["joints"][std::size_t(j)] == names[std::size_t(j)],
                 "joint order mismatch at position " + std::to_string(j));
    }
    check_data(doc.contains("frames") && doc["frames"].is_array() &&
                   !doc["frames"].empty(),
               "gait file has no frames");
    const auto& frames = doc["frames"];
    int t_count = static_cast<int>(frames.size());

    GaitSequence g = GaitSequence::zeros(t_count);
    g.frame_rate_hz = doc.value("frame_rate_hz", 0.0);
    if (doc.contains("label")) {
      g.label = emotion_from_name(doc["label"].get<std::string>());
    }
    for (int t = 0; t < t_count; ++t) {
      const auto& frame = frames[std::size_t(t)];
      check_data(frame.is_array() && frame.size() == joints::kCount,
                 "frame " + std::to_string(t) + " must have " +
                     std::to_string(joints::kCount) + " joints");
      for (int j = 0; j < joints::kCount; ++j) {
        const auto& p = frame[std::size_t(j)];
        check_data(p.is_array() && p.size() == 3,
                   "joint positions must be [x,y,z] triples");
        for (int c = 0; c < 3; ++c) {
          check_data(p[std::size_t(c)].is_number(),
                     "joint coordinates must be numbers");
          g.set(c, t, j, p[std::size_t(c)].get<double>());
        }
      }
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw DataError("malformed gait file " + path.string() + ": " + e.what());
  }
}

void save_gait_json(const GaitSequence& gait, const std::filesystem::path& path) {
  gait.validate();
  json doc;
  doc["version"] = 1;
  json names = json::array();
  for (const char* n : joint_names()) names.push_back(n);
  doc["joints"] = std::move(names);
  doc["frame_rate_hz"] = gait.frame_rate_hz;
  if (gait.label) doc["label"] = emotion_name(*gait.label);
  json frames = json::array();
  for (int t = 0; t < gait.frames(); ++t) {
    json frame = json::array();
    for (int j = 0; j < joints::kCount; ++j) {
      frame.push_back({gait.at(0, t, j), gait.at(1, t, j), gait.at(2, t, j)});
    }
    frames.push_back(std::move(frame));
  }
  doc["frames"] = std::move(frames);
  std::ofstream out(path);
  check_data(out.good(), "cannot write gait file: " + path.string());
  out << doc.dump(1) << '\n';
  check_data(out.good(), "failed writing gait file: " + path.string());
}

std::vector<GaitSequence> load_gait_batch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check_data(in.good(), "cannot open gait batch: " + path.string());
  char magic[4];
  in.read(magic, 4);
  check_data(in.good() && std::memcmp(magic, kMagic, 4) == 0,
             "not a gait batch file (bad magic): " + path.string());
  std::uint32_t version = get<std::uint32_t>(in);
  check_data(version == kVersion, "unsupported gait batch version " +
                                      std::to_string(version));
  std::uint32_t count = get<std::uint32_t>(in);
  std::uint16_t v_count = get<std::uint16_t>(in);
  get<std::uint16_t>(in);  // reserved
  check_data(v_count == joints::kCount, "gait batch has wrong joint count");
  const auto& names = joint_names();
  for (int j = 0; j < joints::kCount; ++j) {
    check_data(get_string(in) == names[std::size_t(j)],
               "gait batch joint order mismatch at " + std::to_string(j));
  }
  std::vector<GaitSequence> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t t_count = get<std::uint32_t>(in);
    check_data(t_count >= 1 && t_count < (1u << 24), "corrupt frame count");
    GaitSequence g = GaitSequence::zeros(static_cast<int>(t_count));
    g.frame_rate_hz = get_f64(in);
    std::uint8_t has_label = get<std::uint8_t>(in);
    std::uint8_t label = get<std::uint8_t>(in);
    get<std::uint16_t>(in);  // reserved
    if (has_label) {
      g.label = emotion_from_index(label);
    } else {
      check_data(label == kNoLabel, "corrupt label byte");
    }
    for (std::size_t k = 0; k < g.positions.size(); ++k) {
      g.positions[k] = static_cast<real>(get_f64(in));
    }
    g.validate();
    out.push_back(std::move(g));
  }
  return out;
}

void save_gait_batch(const std::vector<GaitSequence>& gaits,
                     const std::filesystem::path& path) {
  check_value(!gaits.empty(), "refusing to write an empty gait batch");
  for (const GaitSequence& g : gaits) g.validate();
  std::ofstream out(path, std::ios::binary);
  check_data(out.good(), "cannot write gait batch: " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, std::uint32_t(gaits.size()));
  put<std::uint16_t>(out, joints::kCount);
  put<std::uint16_t>(out, 0);
  for (const char* n : joint_names()) put_string(out, n);
  for (const GaitSequence& g : gaits) {
    put<std::uint32_t>(out, std::uint32_t(g.frames()));
    put_f64(out, g.frame_rate_hz);
    put<std::uint8_t>(out, g.label ? 1 : 0);
    put<std::uint8_t>(out,
                      g.label ? std::uint8_t(int(*g.label)) : kNoLabel);
    put<std::uint16_t>(out, 0);
    for (std::size_t k = 0; k < g.positions.size(); ++k) {
      put_f64(out, static_cast<double>(g.positions[k]));
    }
  }
  check_data(out.good(), "failed writing gait batch: " + path.string());
}

std::vector<GaitSequence> load_gaits(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  if (ext == ".json") {
    return {load_gait_json(path)};
  }
  if (ext == ".egt") {
    return load_gait_batch(path);
  }
  throw DataError("unknown gait file extension '" + ext +
                  "' (expected .json or .egt): " + path.string());
}

}  // namespace step
