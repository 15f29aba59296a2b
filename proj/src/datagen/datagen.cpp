#include "vfd/datagen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "json.hpp"

#include "vfd/errors.hpp"

namespace vfd::datagen {
namespace {

using T = RenderTable;
using Latent = std::array<double, kLatentDim>;

// Stream ids under the run seed.
constexpr std::uint64_t kLatentStream = 0x1A7E000000000000ULL;
constexpr std::uint64_t kRecordStream = 0x5A3B000000000000ULL;
constexpr std::uint64_t kPartitionStream = 0x9A47000000000001ULL;
constexpr std::uint64_t kFakeStream = 0xFA4E000000000001ULL;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(const Latent& a, const Latent& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kLatentDim; ++i) s += a[i] * b[i];
  return s;
}

struct BlobMixing {
  Latent shift_x, shift_y, radius;
  std::array<Latent, frontends::kFaceChannels> intensity;
};

// One-hot rows: attribute a of blob k follows coordinate (a + k) mod 6, so
// every blob shows every coordinate through a different attribute.
const std::array<BlobMixing, T::kBlobs>& blob_mixing() {
  static const auto table = [] {
    num::Rng rng(T::kStructureSeed);
    std::array<BlobMixing, T::kBlobs> t{};
    for (std::size_t k = 0; k < T::kBlobs; ++k) {
      BlobMixing& b = t[k];
      std::array<Latent*, 6> rows{&b.shift_x, &b.shift_y, &b.radius,
                                  &b.intensity[0], &b.intensity[1], &b.intensity[2]};
      for (std::size_t a = 0; a < rows.size(); ++a) {
        Latent& r = *rows[a];
        r.fill(0.0);
        r[(a + k) % T::kFaceLatentDims] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      }
    }
    return t;
  }();
  return table;
}

constexpr std::array<std::array<double, 2>, T::kBlobs> kBlobAnchors{{
    {0.30, 0.35}, {0.70, 0.35}, {0.50, 0.55}, {0.35, 0.75}, {0.65, 0.75}}};

std::string record_stem(std::size_t index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

}  // namespace

IdentityLatent identity_latent(std::uint64_t seed, std::size_t id) {
  num::Rng rng = num::Rng(seed).fork(kLatentStream + id);
  IdentityLatent out;
  out.id = id;
  for (double& v : out.z) v = rng.normal();
  return out;
}

num::Tensor render_face_pixels(const IdentityLatent& latent, num::Rng& rng, double noise_sigma) {
  constexpr std::size_t n = frontends::kFaceSize;
  constexpr std::size_t plane = n * n;
  const auto& mixing = blob_mixing();
  num::Tensor pixels(num::Shape{frontends::kFaceChannels, n, n}, T::kBackground);
  double* px = pixels.data();
  for (std::size_t k = 0; k < T::kBlobs; ++k) {
    const BlobMixing& m = mixing[k];
    const double cx = kBlobAnchors[k][0] * n + T::kCenterShiftPx * std::tanh(dot(m.shift_x, latent.z));
    const double cy = kBlobAnchors[k][1] * n + T::kCenterShiftPx * std::tanh(dot(m.shift_y, latent.z));
    const double radius =
        T::kBlobSigmaPx * std::exp(T::kSigmaLogRange * std::tanh(dot(m.radius, latent.z)));
    std::array<double, frontends::kFaceChannels> contrast{};
    for (std::size_t c = 0; c < contrast.size(); ++c) {
      contrast[c] = sigmoid(T::kIntensityGain * dot(m.intensity[c], latent.z)) - T::kBackground;
    }
    const double inv = 1.0 / (2.0 * radius * radius);
    for (std::size_t y = 0; y < n; ++y) {
      const double dy = static_cast<double>(y) + 0.5 - cy;
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double g = std::exp(-(dx * dx + dy * dy) * inv);
        for (std::size_t c = 0; c < contrast.size(); ++c) px[c * plane + y * n + x] += contrast[c] * g;
      }
    }
  }
  for (double& v : pixels.values()) {
    if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
  }
  return pixels;
}

frontends::FaceImage render_face(const IdentityLatent& z, num::Rng& rng, double noise_sigma) {
  return frontends::normalize_face(render_face_pixels(z, rng, noise_sigma));
}

double fundamental_hz(const IdentityLatent& z) {
  return T::kF0BaseHz + T::kF0RangeHz * sigmoid(z.z[0]);
}

frontends::AudioClip render_voice(const IdentityLatent& latent, num::Rng& rng, double noise_sigma) {
  const Latent& z = latent.z;
  const double f0 = fundamental_hz(latent);
  std::array<double, T::kOvertones + 1> amplitude{};
  amplitude[0] = 1.0;
  for (std::size_t h = 1; h <= T::kOvertones; ++h) {
    amplitude[h] = T::kOvertoneMax * sigmoid(T::kOvertoneSlope * z[h]);
  }
  const double rate = T::kEnvelopeMinHz + T::kEnvelopeRangeHz * sigmoid(z[5]);
  const double phase = std::numbers::pi * std::tanh(z[6]);

  frontends::AudioClip clip;
  clip.sample_rate_hz = frontends::kSampleRate;
  clip.samples.resize(frontends::kClipSamples);
  const double two_pi = 2.0 * std::numbers::pi;
  double peak = 0.0;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double t = static_cast<double>(i) / frontends::kSampleRate;
    double s = 0.0;
    for (std::size_t h = 0; h < amplitude.size(); ++h) {
      s += amplitude[h] * std::sin(two_pi * static_cast<double>(h + 1) * f0 * t);
    }
    s *= 1.0 + T::kEnvelopeDepth * std::sin(two_pi * rate * t + phase);
    clip.samples[i] = s;
    peak = std::max(peak, std::abs(s));
  }
  for (double& s : clip.samples) {
    s *= T::kVoicePeak / peak;
    if (noise_sigma > 0.0) s += noise_sigma * rng.normal();
  }
  return clip;
}

void SynthSpec::validate() const {
  if (num_identities == 0) throw ConfigError("synth: num_identities must be at least 1");
  if (fake_videos > 0 && num_identities < 2) {
    throw ConfigError("synth: fake videos need at least 2 identities, got " +
                      std::to_string(num_identities));
  }
  if (!(observation_noise >= 0.0)) throw ConfigError("synth: observation noise must be >= 0");
  if (!(train_fraction > 0.0) || !(val_fraction >= 0.0) || train_fraction + val_fraction > 1.0) {
    throw ConfigError("synth: split fractions must satisfy train > 0, val >= 0, train + val <= 1");
  }
  if (output_directory.empty()) throw ConfigError("synth: output directory is required");
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + name + "' (expected train, val or test)");
}

std::vector<Split> partition_identities(const SynthSpec& spec) {
  const std::size_t n = spec.num_identities;
  std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n))));
  n_train = std::min(n_train, n);
  const std::size_t n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n))));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  num::Rng rng = num::Rng(spec.seed).fork(kPartitionStream);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<Split> split(n, Split::kTest);
  for (std::size_t i = 0; i < n_train; ++i) split[order[i]] = Split::kTrain;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) split[order[i]] = Split::kVal;
  return split;
}

GeneratedDataset generate(const SynthSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  const fs::path root = spec.output_directory;
  std::error_code ec;
  fs::create_directories(root / "audio", ec);
  fs::create_directories(root / "images", ec);
  if (ec) throw InputError("cannot create output directory " + root.string() + ": " + ec.message());

  GeneratedDataset out;
  out.identity_split = partition_identities(spec);
  std::vector<IdentityLatent> latents;
  for (std::size_t id = 0; id < spec.num_identities; ++id) {
    latents.push_back(identity_latent(spec.seed, id));
  }

  for (std::size_t id = 0; id < spec.num_identities; ++id) {
    for (std::size_t r = 0; r < spec.real_videos_per_identity; ++r) {
      GeneratedRecord rec;
      rec.split = out.identity_split[id];
      rec.face_identity = rec.voice_identity = id;
      out.records.push_back(rec);
    }
  }

  // Fakes go to splits holding at least two identities, in proportion to
  // their identity counts; rounding leftovers land in the first eligible
  // split.
  std::array<std::vector<std::size_t>, 3> members;
  for (std::size_t id = 0; id < spec.num_identities; ++id) {
    members[static_cast<std::size_t>(out.identity_split[id])].push_back(id);
  }
  std::size_t eligible_ids = 0;
  for (const auto& m : members) eligible_ids += m.size() >= 2 ? m.size() : 0;
  if (spec.fake_videos > 0 && eligible_ids == 0) {
    throw ConfigError("synth: no split holds two identities, cannot build fakes");
  }
  std::array<std::size_t, 3> fakes_per_split{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    if (members[s].size() < 2) continue;
    fakes_per_split[s] = spec.fake_videos * members[s].size() / eligible_ids;
    assigned += fakes_per_split[s];
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (members[s].size() >= 2) {
      fakes_per_split[s] += spec.fake_videos - assigned;
      break;
    }
  }
  num::Rng pick = num::Rng(spec.seed).fork(kFakeStream);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& ids = members[s];
    for (std::size_t f = 0; f < fakes_per_split[s]; ++f) {
      const std::size_t a = pick.below(ids.size());
      std::size_t b = pick.below(ids.size() - 1);
      if (b >= a) ++b;
      GeneratedRecord rec;
      rec.real = false;
      rec.split = static_cast<Split>(s);
      rec.face_identity = ids[a];
      rec.voice_identity = ids[b];
      out.records.push_back(rec);
    }
  }

  nlohmann::json meta;
  meta["num_identities"] = spec.num_identities;
  meta["real_videos_per_identity"] = spec.real_videos_per_identity;
  meta["fake_videos"] = spec.fake_videos;
  meta["observation_noise"] = spec.observation_noise;
  meta["seed"] = spec.seed;
  meta["train_fraction"] = spec.train_fraction;
  meta["val_fraction"] = spec.val_fraction;
  meta["identities"] = nlohmann::json::array();
  for (const IdentityLatent& l : latents) {
    meta["identities"].push_back(
        {{"id", l.id}, {"split", split_name(out.identity_split[l.id])}, {"z", l.z}});
  }
  meta["records"] = nlohmann::json::array();

  out.manifest = root / "manifest.jsonl";
  std::ofstream manifest(out.manifest);
  if (!manifest) throw InputError("cannot write " + out.manifest.string());
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    GeneratedRecord& rec = out.records[i];
    rec.audio = "audio/" + record_stem(i) + ".wav";
    rec.image = "images/" + record_stem(i) + ".vfdi";
    num::Rng noise = num::Rng(spec.seed).fork(kRecordStream + i);
    const num::Tensor face =
        render_face_pixels(latents[rec.face_identity], noise, spec.observation_noise);
    const frontends::AudioClip voice =
        render_voice(latents[rec.voice_identity], noise, spec.observation_noise);
    frontends::write_vfdi(root / rec.image, face);
    frontends::write_wav(root / rec.audio, voice);

    nlohmann::json line;
    line["audio"] = rec.audio;
    line["image"] = rec.image;
    line["identity"] = rec.real ? nlohmann::json(rec.face_identity) : nlohmann::json(nullptr);
    line["label"] = rec.real ? "real" : "fake";
    line["split"] = split_name(rec.split);
    manifest << line.dump() << '\n';
    meta["records"].push_back({{"index", i},
                               {"face_identity", rec.face_identity},
                               {"voice_identity", rec.voice_identity},
                               {"label", rec.real ? "real" : "fake"}});
  }
  std::ofstream meta_file(root / "metadata.json");
  meta_file << meta.dump(2) << '\n';
  return out;
}

}  // namespace vfd::datagen
