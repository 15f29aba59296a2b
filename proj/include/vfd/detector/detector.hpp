#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfd/encoder/model.hpp"
#include "vfd/frontends/audio.hpp"
#include "vfd/frontends/image.hpp"
#include "vfd/pipeline/dataset.hpp"

namespace vfd::detector {

inline constexpr std::size_t kHistogramBins = 50;

// Cosine similarity of the voice and face embeddings. The clip must already
// be standardized.
double score_pair(const frontends::AudioClip& audio, const frontends::FaceImage& face,
                  const encoder::VfdModel& model);
double score_inputs(const num::Tensor& spectrogram, const num::Tensor& face,
                    const encoder::VfdModel& model);

enum class Verdict { kReal, kFake };
std::string verdict_name(Verdict verdict);

struct DetectionDecision {
  double similarity = 0.0;
  double threshold = 0.0;
  Verdict verdict = Verdict::kFake;
};

// Real iff score >= threshold.
DetectionDecision decide(double score, double threshold);

struct ScoredSample {
  std::string id;
  double score = 0.0;
  bool real = false;
};

// Accuracy-maximizing threshold over -inf, the midpoints of adjacent
// distinct sorted scores, and +inf; ties go to the smallest candidate.
double select_threshold(std::span<const ScoredSample> samples);

double accuracy(std::span<const ScoredSample> samples, double threshold);
// P(real > fake) + P(tie) / 2 from exact pair counts; nullopt when a class
// is missing.
std::optional<double> auc(std::span<const ScoredSample> samples);

struct Histogram {
  std::vector<double> edges;  // kHistogramBins + 1 values over [-1, 1]
  std::vector<std::size_t> real_counts;
  std::vector<std::size_t> fake_counts;
};

// Scores outside [-1, 1] land in the end bins.
Histogram similarity_histogram(std::span<const ScoredSample> samples);

struct EvalReport {
  double acc = 0.0;
  std::optional<double> auc;
  double threshold = 0.0;
  std::vector<ScoredSample> samples;
  Histogram histogram;
};

EvalReport compute_metrics(std::span<const ScoredSample> samples, double threshold);

// Scores the given dataset records, id = audio file stem.
std::vector<ScoredSample> score_records(const pipeline::Dataset& data,
                                        const std::vector<std::size_t>& records,
                                        const encoder::VfdModel& model);

// report.json, scores.csv (id, score, label, verdict), histogram.csv
// (bin_left, bin_right, real_count, fake_count).
void write_report(const std::filesystem::path& directory, const EvalReport& report);

}  // namespace vfd::detector
