#pragma once

#include <cstdint>
#include <filesystem>

#include "vfd/encoder/model.hpp"
#include "vfd/numerics/rng.hpp"
#include "vfd/pipeline/optimizer.hpp"

namespace vfd::pipeline {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  encoder::VfdModel model;
  OptimizerState optimizer;
  num::Rng rng{0};
};

// FNV-1a over the little-endian bytes of both encoder config vectors.
std::uint64_t config_hash(const encoder::EncoderConfig& voice, const encoder::EncoderConfig& face);

// "VFD1", u32 version, u64 config hash, then entries to end of file: u32
// name length, name, u32 rank, u64 dims, f64 payload. All little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Parses the whole file before building anything, so a bad file leaves no
// partial state behind.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vfd::pipeline
