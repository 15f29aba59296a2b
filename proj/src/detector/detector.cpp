#include "vfd/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "vfd/encoder/encoder.hpp"
#include "vfd/errors.hpp"
#include "vfd/objectives/objectives.hpp"

namespace vfd::detector {
namespace {

std::vector<ScoredSample> sorted_by_score(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> s(samples.begin(), samples.end());
  std::stable_sort(s.begin(), s.end(),
                   [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });
  return s;
}

nlohmann::json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

}  // namespace

double score_inputs(const num::Tensor& spectrogram, const num::Tensor& face,
                    const encoder::VfdModel& model) {
  num::Tape tape = num::Tape::inference();
  const num::Tensor v = encoder::encode(tape, spectrogram, model.voice);
  const num::Tensor f = encoder::encode(tape, face, model.face);
  return objectives::cosine_similarity(v.values(), f.values());
}

double score_pair(const frontends::AudioClip& audio, const frontends::FaceImage& face,
                  const encoder::VfdModel& model) {
  return score_inputs(frontends::spectrogram(audio).bins, face.pixels, model);
}

std::string verdict_name(Verdict verdict) { return verdict == Verdict::kReal ? "Real" : "Fake"; }

DetectionDecision decide(double score, double threshold) {
  return {score, threshold, score >= threshold ? Verdict::kReal : Verdict::kFake};
}

double select_threshold(std::span<const ScoredSample> samples) {
  const auto reals = static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const ScoredSample& s) { return s.real; }));
  if (reals == 0 || reals == samples.size()) {
    throw DataError("threshold selection needs both real and fake samples");
  }
  const std::vector<ScoredSample> s = sorted_by_score(samples);
  // Sweep upward: at -inf every sample is called Real.
  std::size_t correct = reals;
  std::size_t best_correct = correct;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j < s.size() && s[j].score == s[i].score) {
      if (s[j].real) {
        --correct;
      } else {
        ++correct;
      }
      ++j;
    }
    double candidate = std::numeric_limits<double>::infinity();
    if (j < s.size()) {
      candidate = 0.5 * (s[i].score + s[j].score);
      // Adjacent doubles can round the midpoint down onto the lower score.
      if (candidate <= s[i].score) candidate = s[j].score;
    }
    if (correct > best_correct) {
      best_correct = correct;
      best = candidate;
    }
    i = j;
  }
  return best;
}

double accuracy(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw DataError("accuracy of an empty sample set");
  std::size_t correct = 0;
  for (const ScoredSample& s : samples) {
    correct += (decide(s.score, threshold).verdict == Verdict::kReal) == s.real ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::optional<double> auc(std::span<const ScoredSample> samples) {
  const std::vector<ScoredSample> s = sorted_by_score(samples);
  // twice the Mann-Whitney U, kept integral so ties stay exact
  std::uint64_t twice_u = 0;
  std::uint64_t fakes_below = 0;
  std::uint64_t reals = 0;
  std::uint64_t fakes = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    std::uint64_t group_reals = 0;
    std::uint64_t group_fakes = 0;
    for (; j < s.size() && s[j].score == s[i].score; ++j) {
      if (s[j].real) {
        ++group_reals;
      } else {
        ++group_fakes;
      }
    }
    twice_u += group_reals * (2 * fakes_below + group_fakes);
    fakes_below += group_fakes;
    reals += group_reals;
    fakes += group_fakes;
    i = j;
  }
  if (reals == 0 || fakes == 0) return std::nullopt;
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(reals) * static_cast<double>(fakes));
}

Histogram similarity_histogram(std::span<const ScoredSample> samples) {
  Histogram h;
  h.real_counts.assign(kHistogramBins, 0);
  h.fake_counts.assign(kHistogramBins, 0);
  for (std::size_t b = 0; b <= kHistogramBins; ++b) {
    h.edges.push_back(-1.0 + 2.0 * static_cast<double>(b) / kHistogramBins);
  }
  for (const ScoredSample& s : samples) {
    const double pos = (s.score + 1.0) * 0.5 * kHistogramBins;
    const auto bin = static_cast<std::size_t>(
        std::clamp(std::floor(pos), 0.0, static_cast<double>(kHistogramBins - 1)));
    (s.real ? h.real_counts : h.fake_counts)[bin] += 1;
  }
  return h;
}

EvalReport compute_metrics(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw DataError("cannot compute metrics on an empty sample set");
  EvalReport r;
  r.threshold = threshold;
  r.acc = accuracy(samples, threshold);
  r.auc = auc(samples);
  r.samples.assign(samples.begin(), samples.end());
  r.histogram = similarity_histogram(samples);
  return r;
}

std::vector<ScoredSample> score_records(const pipeline::Dataset& data,
                                        const std::vector<std::size_t>& records,
                                        const encoder::VfdModel& model) {
  std::vector<ScoredSample> out;
  out.reserve(records.size());
  for (std::size_t i : records) {
    const pipeline::SampleInputs& in = data.inputs(i);
    const pipeline::SampleRecord& rec = data.records()[i];
    out.push_back({rec.audio.stem().string(), score_inputs(in.spectrogram, in.face, model), rec.real});
  }
  return out;
}

void write_report(const std::filesystem::path& directory, const EvalReport& report) {
  std::filesystem::create_directories(directory);
  std::size_t reals = 0;
  for (const ScoredSample& s : report.samples) reals += s.real ? 1 : 0;

  nlohmann::json j;
  j["acc"] = report.acc;
  j["auc"] = report.auc ? nlohmann::json(*report.auc) : nlohmann::json(nullptr);
  j["threshold"] = threshold_json(report.threshold);
  j["num_samples"] = report.samples.size();
  j["num_real"] = reals;
  j["num_fake"] = report.samples.size() - reals;
  std::ofstream(directory / "report.json") << j.dump(2) << '\n';

  std::ofstream scores(directory / "scores.csv");
  scores.precision(17);
  scores << "id,score,label,verdict\n";
  for (const ScoredSample& s : report.samples) {
    scores << s.id << ',' << s.score << ',' << (s.real ? "real" : "fake") << ','
           << verdict_name(decide(s.score, report.threshold).verdict) << '\n';
  }

  std::ofstream hist(directory / "histogram.csv");
  hist << "bin_left,bin_right,real_count,fake_count\n";
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    hist << report.histogram.edges[b] << ',' << report.histogram.edges[b + 1] << ','
         << report.histogram.real_counts[b] << ',' << report.histogram.fake_counts[b] << '\n';
  }
}

}  // namespace vfd::detector
