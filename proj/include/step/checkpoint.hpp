#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "step/classifier.hpp"
#include "step/stepgen.hpp"

namespace step {

// Versioned binary parameter container. Layout, all integers u32
// little-endian, all values f64 little-endian regardless of platform:
//
//   magic[4]                     "STPG" (generator) or "STPC" (classifier)
//   u32 version                  currently 1
//   u32 metadata count           then per entry: u32 key length, key
//                                bytes, u32 value length, value bytes
//   u32 tensor count             then per entry: u32 name length, name
//                                bytes, u32 rank, rank x u32 dims,
//                                product x f64 values
//
// Metadata carries the architecture config as decimal strings, so a
// checkpoint is self-describing and loaders can rebuild the network
// without outside knowledge.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kGeneratorMagic[] = "STPG";
inline constexpr char kClassifierMagic[] = "STPC";

struct Checkpoint {
  std::string magic;
  std::map<std::string, std::string> metadata;
  Bindings tensors;
};

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model-level wrappers: the full persistent store plus the config needed
// to rebuild it. Wrong magic, truncation, and malformed numbers are
// DataError; missing or mis-shaped tensors surface from the model
// constructors.
void save_generator(const StepGen& model, const std::filesystem::path& path);
StepGen load_generator(const std::filesystem::path& path);
void save_classifier(const StepClf& model, const std::filesystem::path& path);
StepClf load_classifier(const std::filesystem::path& path);

}  // namespace step
