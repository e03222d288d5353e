#include "step/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace step {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

struct Reader {
  const std::string& buf;
  std::size_t at = 0;

  void need(std::size_t n) const {
    check_data(at + n <= buf.size(), "truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::uint32_t(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    }
    at += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= std::uint64_t(static_cast<unsigned char>(buf[at + i]))
              << (8 * i);
    }
    at += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    check_data(n <= (1u << 20), "unreasonable string length in checkpoint");
    need(n);
    std::string s = buf.substr(at, n);
    at += n;
    return s;
  }
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double meta_double(const Checkpoint& cp, const std::string& key) {
  auto it = cp.metadata.find(key);
  check_data(it != cp.metadata.end(), "checkpoint metadata lacks '" + key + "'");
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception&) {
    throw DataError("checkpoint metadata '" + key + "' is not a number");
  }
  check_data(used == it->second.size(),
             "checkpoint metadata '" + key + "' is not a number");
  return v;
}

int meta_int(const Checkpoint& cp, const std::string& key) {
  double v = meta_double(cp, key);
  check_data(v == static_cast<int>(v),
             "checkpoint metadata '" + key + "' is not an integer");
  return static_cast<int>(v);
}

Bindings persistent_subset(const Bindings& store,
                           const std::vector<std::string>& names) {
  Bindings out;
  for (const std::string& name : names) out[name] = store.at(name);
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  check_value(cp.magic == kGeneratorMagic || cp.magic == kClassifierMagic,
              "checkpoint magic must be STPG or STPC");
  std::string out;
  out += cp.magic;
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(cp.metadata.size()));
  for (const auto& [key, value] : cp.metadata) {
    put_str(out, key);
    put_str(out, value);
  }
  put_u32(out, static_cast<std::uint32_t>(cp.tensors.size()));
  for (const auto& [name, tensor] : cp.tensors) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) {
      check_value(d >= 1, "tensor dimensions must be positive");
      put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      put_f64(out, double(tensor[i]));
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  check_data(bool(file), "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(file)),
                  std::istreambuf_iterator<char>());

  Reader r{buf};
  r.need(4);
  Checkpoint cp;
  cp.magic = buf.substr(0, 4);
  r.at = 4;
  check_data(cp.magic == kGeneratorMagic || cp.magic == kClassifierMagic,
             path.string() + " is not a checkpoint (bad magic)");
  std::uint32_t version = r.u32();
  check_data(version == kCheckpointVersion,
             "unsupported checkpoint version " + std::to_string(version));

  std::uint32_t meta_count = r.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = r.str();
    std::string value = r.str();
    check_data(cp.metadata.emplace(key, std::move(value)).second,
               "duplicate metadata key '" + key + "'");
  }

  std::uint32_t tensor_count = r.u32();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = r.str();
    std::uint32_t rank = r.u32();
    check_data(rank <= 8, "unreasonable tensor rank in checkpoint");
    std::vector<int> shape;
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t dim = r.u32();
      check_data(dim >= 1 && dim <= (1u << 28), "bad tensor dimension");
      shape.push_back(static_cast<int>(dim));
      count *= dim;
      check_data(count <= (std::size_t(1) << 32),
                 "unreasonable tensor size in checkpoint");
    }
    r.need(count * 8);  // cheap pre-check against absurd allocations
    Tensor t(shape);
    for (std::size_t k = 0; k < count; ++k) t[k] = static_cast<real>(r.f64());
    check_data(cp.tensors.emplace(std::move(name), std::move(t)).second,
               "duplicate tensor name in checkpoint");
  }
  check_data(r.at == buf.size(), "trailing bytes after checkpoint payload");
  return cp;
}

void save_generator(const StepGen& model, const std::filesystem::path& path) {
  const GenConfig& cfg = model.config();
  Checkpoint cp;
  cp.magic = kGeneratorMagic;
  cp.metadata["frames"] = std::to_string(cfg.frames);
  cp.metadata["latent_dim"] = std::to_string(cfg.latent_dim);
  cp.metadata["temporal_kernel"] = std::to_string(cfg.temporal_kernel);
  cp.metadata["lambda_motion"] = format_double(cfg.lambda_motion);
  cp.metadata["lambda_anchor"] = format_double(cfg.lambda_anchor);
  cp.metadata["beta_kl"] = format_double(cfg.beta_kl);
  cp.metadata["frame_rate_hz"] = format_double(cfg.frame_rate_hz);
  cp.tensors = persistent_subset(model.store(), model.persistent_names());
  save_checkpoint(cp, path);
}

StepGen load_generator(const std::filesystem::path& path) {
  Checkpoint cp = load_checkpoint(path);
  check_data(cp.magic == kGeneratorMagic,
             path.string() + " is not a generator checkpoint");
  GenConfig cfg;
  cfg.frames = meta_int(cp, "frames");
  cfg.latent_dim = meta_int(cp, "latent_dim");
  cfg.temporal_kernel = meta_int(cp, "temporal_kernel");
  cfg.lambda_motion = meta_double(cp, "lambda_motion");
  cfg.lambda_anchor = meta_double(cp, "lambda_anchor");
  cfg.beta_kl = meta_double(cp, "beta_kl");
  cfg.frame_rate_hz = meta_double(cp, "frame_rate_hz");
  return StepGen(cfg, std::move(cp.tensors));
}

void save_classifier(const StepClf& model, const std::filesystem::path& path) {
  const ClfConfig& cfg = model.config();
  Checkpoint cp;
  cp.magic = kClassifierMagic;
  cp.metadata["frames"] = std::to_string(cfg.frames);
  cp.metadata["temporal_kernel"] = std::to_string(cfg.temporal_kernel);
  cp.metadata["hybrid"] = cfg.hybrid ? "1" : "0";
  cp.tensors = persistent_subset(model.store(), model.persistent_names());
  save_checkpoint(cp, path);
}

StepClf load_classifier(const std::filesystem::path& path) {
  Checkpoint cp = load_checkpoint(path);
  check_data(cp.magic == kClassifierMagic,
             path.string() + " is not a classifier checkpoint");
  ClfConfig cfg;
  cfg.frames = meta_int(cp, "frames");
  cfg.temporal_kernel = meta_int(cp, "temporal_kernel");
  int hybrid = meta_int(cp, "hybrid");
  check_data(hybrid == 0 || hybrid == 1, "hybrid flag must be 0 or 1");
  cfg.hybrid = hybrid == 1;
  return StepClf(cfg, std::move(cp.tensors));
}

}  // namespace step
