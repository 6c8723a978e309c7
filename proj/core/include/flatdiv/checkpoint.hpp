#pragma once

#include <filesystem>

#include "flatdiv/mlp.hpp"

namespace flatdiv {

/// Checkpoint layout (little-endian), version 1:
///   bytes 0..7   magic "FLATDVML"
///   u32          version
///   u32 x 3      d_in, hidden, classes
///   f64[]        W1 row-major (hidden x d_in), b1, W2 row-major (classes x hidden), b2
inline constexpr char kCheckpointMagic[8] = {'F', 'L', 'A', 'T', 'D', 'V', 'M', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);

/// Throws std::runtime_error on bad magic, version mismatch, or truncation.
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace flatdiv
