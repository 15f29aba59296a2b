#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "vfd/numerics/tensor.hpp"

namespace vfd::frontends {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 48000;  // 3 s
inline constexpr std::size_t kHopSamples = 160;     // 10 ms
inline constexpr std::size_t kWindowSamples = 400;  // 25 ms Hann
inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kFrequencyBins = 512;  // FFT bins 1..512
inline constexpr std::size_t kFrames = 300;
inline constexpr double kMagnitudeFloor = 1e-6;
inline constexpr double kBinHz = static_cast<double>(kSampleRate) / kFftSize;  // 15.625

struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRate;

  bool is_standard() const {
    return sample_rate_hz == kSampleRate && samples.size() == kClipSamples;
  }
};

// Log-magnitude STFT. bins has shape [1 x 512 x 300]; row r holds FFT bin
// r + 1, i.e. frequency (r + 1) * 15.625 Hz.
struct Spectrogram {
  num::Tensor bins;
  double frame_hop_s = 0.01;
};

// Resamples to 16 kHz (linear interpolation), center-crops or symmetrically
// zero-pads to 3 s, then peak-normalizes unless the clip is silent.
AudioClip standardize_clip(const AudioClip& raw);

Spectrogram spectrogram(const AudioClip& clip);

// Frequency of spectrogram row r.
inline double row_frequency_hz(std::size_t row) { return static_cast<double>(row + 1) * kBinHz; }

// Mono 16-bit PCM RIFF/WAVE.
AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

}  // namespace vfd::frontends
