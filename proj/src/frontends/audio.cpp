#include "vfd/frontends/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "vfd/errors.hpp"

namespace vfd::frontends {
namespace {

bool supported_rate(int rate) {
  return rate == 8000 || rate == 16000 || rate == 44100 || rate == 48000;
}

std::vector<double> resample_linear(const std::vector<double>& in, int from_hz) {
  if (from_hz == kSampleRate) return in;
  const double ratio = static_cast<double>(from_hz) / kSampleRate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(in.size()) * kSampleRate / from_hz));
  std::vector<double> out(std::max<std::size_t>(out_len, 1));
  const std::size_t last = in.size() - 1;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = std::min(static_cast<std::size_t>(pos), last);
    const std::size_t i1 = std::min(i0 + 1, last);
    const double frac = pos - static_cast<double>(i0);
    out[i] = in[i0] * (1.0 - frac) + in[i1] * frac;
  }
  return out;
}

const std::array<double, kWindowSamples>& hann_window() {
  static const auto window = [] {
    std::array<double, kWindowSamples> w{};
    for (std::size_t n = 0; n < kWindowSamples; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(kWindowSamples));
    }
    return w;
  }();
  return window;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

// FFTW planning is not thread-safe; executing an existing plan on fresh
// buffers is.
fftw_plan forward_plan() {
  static std::once_flag once;
  static fftw_plan plan = nullptr;
  std::call_once(once, [] {
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(kFftSize));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kFftSize / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in.get(), out.get(), FFTW_ESTIMATE);
  });
  return plan;
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

AudioClip standardize_clip(const AudioClip& raw) {
  if (raw.samples.empty()) throw InputError("audio clip has no samples");
  if (!supported_rate(raw.sample_rate_hz)) {
    throw InputError("unsupported sample rate " + std::to_string(raw.sample_rate_hz) +
                     " Hz (expected 8000, 16000, 44100 or 48000)");
  }
  std::vector<double> resampled = resample_linear(raw.samples, raw.sample_rate_hz);

  AudioClip out;
  out.sample_rate_hz = kSampleRate;
  out.samples.assign(kClipSamples, 0.0);
  if (resampled.size() >= kClipSamples) {
    const std::size_t start = (resampled.size() - kClipSamples) / 2;
    std::copy_n(resampled.begin() + static_cast<std::ptrdiff_t>(start), kClipSamples,
                out.samples.begin());
  } else {
    const std::size_t left = (kClipSamples - resampled.size()) / 2;
    std::copy(resampled.begin(), resampled.end(),
              out.samples.begin() + static_cast<std::ptrdiff_t>(left));
  }

  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    for (double& s : out.samples) s /= peak;
  }
  return out;
}

Spectrogram spectrogram(const AudioClip& clip) {
  if (!clip.is_standard()) {
    throw ContractError("spectrogram needs a standardized clip (48000 samples at 16 kHz), got " +
                        std::to_string(clip.samples.size()) + " samples at " +
                        std::to_string(clip.sample_rate_hz) + " Hz");
  }
  const auto& window = hann_window();
  const fftw_plan plan = forward_plan();
  std::unique_ptr<double, FftwDeleter> frame(fftw_alloc_real(kFftSize));
  std::unique_ptr<fftw_complex, FftwDeleter> spectrum(fftw_alloc_complex(kFftSize / 2 + 1));

  Spectrogram out;
  out.bins = num::Tensor(num::Shape{1, kFrequencyBins, kFrames});
  double* bins = out.bins.data();
  // Frame t is centered on sample t*hop + hop/2; samples outside the clip
  // read as zero.
  const auto half_window = static_cast<std::ptrdiff_t>(kWindowSamples / 2);
  const auto clip_len = static_cast<std::ptrdiff_t>(kClipSamples);
  for (std::size_t t = 0; t < kFrames; ++t) {
    const auto center = static_cast<std::ptrdiff_t>(t * kHopSamples + kHopSamples / 2);
    const std::ptrdiff_t start = center - half_window;
    std::fill_n(frame.get(), kFftSize, 0.0);
    for (std::size_t n = 0; n < kWindowSamples; ++n) {
      const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(n);
      if (idx >= 0 && idx < clip_len) {
        frame.get()[n] = clip.samples[static_cast<std::size_t>(idx)] * window[n];
      }
    }
    fftw_execute_dft_r2c(plan, frame.get(), spectrum.get());
    for (std::size_t r = 0; r < kFrequencyBins; ++r) {
      const double re = spectrum.get()[r + 1][0];
      const double im = spectrum.get()[r + 1][1];
      bins[r * kFrames + t] = std::log(std::hypot(re, im) + kMagnitudeFloor);
    }
  }
  return out;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open audio file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw FormatError(path.string() + " is not a RIFF/WAVE file");
  }
  bool have_format = false;
  int rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t chunk_size = read_u32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    if (pos + 8 + chunk_size > n) throw FormatError(path.string() + ": truncated WAVE chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError(path.string() + ": short fmt chunk");
      const std::uint16_t format = read_u16(body);
      const std::uint16_t channels = read_u16(body + 2);
      rate = static_cast<int>(read_u32(body + 4));
      const std::uint16_t bits = read_u16(body + 14);
      if (format != 1 || bits != 16) {
        throw InputError(path.string() + ": only 16-bit PCM audio is supported");
      }
      if (channels != 1) throw InputError(path.string() + ": audio must be mono");
      have_format = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_format) throw FormatError(path.string() + ": data chunk before fmt chunk");
      AudioClip clip;
      clip.sample_rate_hz = rate;
      clip.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(body + 2 * i));
        clip.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return clip;
    }
    pos += 8 + chunk_size + (chunk_size & 1U);
  }
  throw FormatError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    // Same 1/32768 step the reader uses; +1.0 saturates at 32767.
    const long level = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
    const auto q = static_cast<std::int16_t>(level);
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError("cannot write audio file " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace vfd::frontends
