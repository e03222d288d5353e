#pragma once

#include <filesystem>
#include <vector>

#include "step/skeleton.hpp"

namespace step {

// Single-gait JSON document. Doubles survive a round trip bit-exactly.
GaitSequence load_gait_json(const std::filesystem::path& path);
void save_gait_json(const GaitSequence& gait, const std::filesystem::path& path);

// Binary batch container ("EGT1"), little-endian, for whole datasets.
std::vector<GaitSequence> load_gait_batch(const std::filesystem::path& path);
void save_gait_batch(const std::vector<GaitSequence>& gaits,
                     const std::filesystem::path& path);

// Dispatch on extension: .json loads one gait, .egt loads a batch.
std::vector<GaitSequence> load_gaits(const std::filesystem::path& path);

}  // namespace step
