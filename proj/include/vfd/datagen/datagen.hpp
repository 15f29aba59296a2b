#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vfd/frontends/audio.hpp"
#include "vfd/frontends/image.hpp"
#include "vfd/numerics/rng.hpp"

namespace vfd::datagen {

inline constexpr std::size_t kLatentDim = 8;

// Rendering constants. Every smooth map from z below is built from these.
struct RenderTable {
  // Faces.
  static constexpr std::size_t kBlobs = 5;
  static constexpr double kBackground = 0.5;
  static constexpr double kCenterShiftPx = 20.0;  // max blob displacement
  static constexpr double kBlobSigmaPx = 22.0;    // base blob radius
  static constexpr double kSigmaLogRange = 0.3;   // radius scales by exp(+-0.3)
  static constexpr double kIntensityGain = 1.2;   // sigmoid slope on the mixing output
  // Face attributes read only latent coordinates 0..1 (f0 and the first
  // overtone, the most audible ones); each attribute follows one of them
  // with a fixed random sign.
  static constexpr std::size_t kFaceLatentDims = 2;
  // Voices.
  static constexpr double kF0BaseHz = 100.0;
  static constexpr double kF0RangeHz = 60.0;
  static constexpr std::size_t kOvertones = 4;  // harmonics 2..5
  // Overtone amplitude relative to the fundamental: 0.9 * sigmoid(1.5 z_k),
  // so the fundamental stays the loudest partial.
  static constexpr double kOvertoneMax = 0.9;
  static constexpr double kOvertoneSlope = 1.5;
  static constexpr double kEnvelopeDepth = 0.5;
  static constexpr double kEnvelopeMinHz = 1.5;
  static constexpr double kEnvelopeRangeHz = 3.0;
  static constexpr double kVoicePeak = 0.5;  // clean peak before noise
  // Seed of the fixed attribute signs; part of the generator, not of a run.
  static constexpr std::uint64_t kStructureSeed = 0x5EEDFACEULL;
};

struct IdentityLatent {
  std::size_t id = 0;
  std::array<double, kLatentDim> z{};
};

// z ~ N(0, I) from a stream fixed by (seed, id).
IdentityLatent identity_latent(std::uint64_t seed, std::size_t id);

// Clean render plus N(0, sigma^2) pixel noise, clamped to [0,1], then
// normalized.
frontends::FaceImage render_face(const IdentityLatent& z, num::Rng& rng, double noise_sigma);
// Raw [3 x 224 x 224] pixels in [0,1], before normalization.
num::Tensor render_face_pixels(const IdentityLatent& z, num::Rng& rng, double noise_sigma);

// 3 s at 16 kHz: harmonic stack over f0, amplitude envelope, additive noise.
frontends::AudioClip render_voice(const IdentityLatent& z, num::Rng& rng, double noise_sigma);
double fundamental_hz(const IdentityLatent& z);

struct SynthSpec {
  std::size_t num_identities = 64;
  std::size_t real_videos_per_identity = 4;
  std::size_t fake_videos = 512;
  double observation_noise = 0.1;
  std::uint64_t seed = 0;
  std::filesystem::path output_directory;
  // Identity partition; the test split takes the remainder.
  double train_fraction = 0.625;
  double val_fraction = 0.125;

  void validate() const;
};

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split split);
Split parse_split(const std::string& name);

struct GeneratedRecord {
  std::string audio;  // relative to the output directory
  std::string image;
  bool real = true;
  Split split = Split::kTrain;
  std::size_t face_identity = 0;
  std::size_t voice_identity = 0;
};

struct GeneratedDataset {
  std::vector<GeneratedRecord> records;
  std::vector<Split> identity_split;  // indexed by identity id
  std::filesystem::path manifest;
};

// Identity -> split assignment: a seeded shuffle cut by the fractions.
std::vector<Split> partition_identities(const SynthSpec& spec);

// Writes audio/*.wav, images/*.vfdi, manifest.jsonl and metadata.json.
GeneratedDataset generate(const SynthSpec& spec);

}  // namespace vfd::datagen
