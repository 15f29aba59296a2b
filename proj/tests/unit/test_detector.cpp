#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vfd/detector/detector.hpp"
#include "vfd/errors.hpp"
#include "vfd/numerics/rng.hpp"

using namespace vfd;
using namespace vfd::detector;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<ScoredSample> labelled(const std::vector<double>& reals, const std::vector<double>& fakes) {
  std::vector<ScoredSample> out;
  for (double s : reals) out.push_back({"r" + std::to_string(out.size()), s, true});
  for (double s : fakes) out.push_back({"f" + std::to_string(out.size()), s, false});
  return out;
}

// O(n^2) pair counting, in half-units.
double brute_auc(const std::vector<ScoredSample>& s) {
  long long twice = 0, pairs = 0;
  for (const auto& r : s) {
    if (!r.real) continue;
    for (const auto& f : s) {
      if (f.real) continue;
      ++pairs;
      twice += r.score > f.score ? 2 : (r.score == f.score ? 1 : 0);
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

double brute_accuracy(const std::vector<ScoredSample>& s, double lambda) {
  int ok = 0;
  for (const auto& x : s) ok += ((x.score >= lambda) == x.real) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(s.size());
}

// Every candidate scored independently; first strict maximum in ascending order.
double brute_threshold(const std::vector<ScoredSample>& s) {
  std::vector<double> scores;
  for (const auto& x : s) scores.push_back(x.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::vector<double> candidates{-kInf};
  for (std::size_t i = 0; i + 1 < scores.size(); ++i) candidates.push_back(0.5 * (scores[i] + scores[i + 1]));
  candidates.push_back(kInf);
  double best = candidates[0], best_acc = brute_accuracy(s, candidates[0]);
  for (double c : candidates) {
    const double a = brute_accuracy(s, c);
    if (a > best_acc) {
      best_acc = a;
      best = c;
    }
  }
  return best;
}

std::vector<ScoredSample> random_samples(num::Rng& rng, std::size_t n, int levels) {
  std::vector<ScoredSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool real = rng.uniform() < 0.5;
    double score = 2.0 * rng.uniform() - 1.0 + (real ? 0.3 : 0.0);
    // Coarse grids force plenty of ties.
    if (levels > 0) score = std::round(score * levels) / levels;
    s.push_back({std::to_string(i), score, real});
  }
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Decide, WorkedExamples) {
  EXPECT_EQ(decide(0.35, -0.1).verdict, Verdict::kReal);
  EXPECT_EQ(decide(-0.5, -0.1).verdict, Verdict::kFake);
  EXPECT_EQ(decide(-0.1, -0.1).verdict, Verdict::kReal);
  const DetectionDecision d = decide(0.2, 0.1);
  EXPECT_EQ(d.similarity, 0.2);
  EXPECT_EQ(d.threshold, 0.1);
  EXPECT_EQ(verdict_name(Verdict::kReal), "Real");
  EXPECT_EQ(verdict_name(Verdict::kFake), "Fake");
}

TEST(Decide, MonotoneInScore) {
  num::Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const double lambda = 2.0 * rng.uniform() - 1.0;
    const double s = 2.0 * rng.uniform() - 1.0;
    const double raised = s + rng.uniform();
    if (decide(s, lambda).verdict == Verdict::kReal) {
      EXPECT_EQ(decide(raised, lambda).verdict, Verdict::kReal);
    }
    EXPECT_EQ(decide(s, lambda).verdict == Verdict::kReal, s >= lambda);
  }
}

TEST(SelectThreshold, SeparatedScoresPickMiddleMidpoint) {
  // Candidates -inf, -0.85, 0.0, 0.85, +inf give accuracy .5, .75, 1, .75, .5.
  const auto s = labelled({0.9, 0.8}, {-0.8, -0.9});
  EXPECT_EQ(select_threshold(s), brute_threshold(s));
  EXPECT_NEAR(select_threshold(s), 0.0, 1e-12);
  EXPECT_EQ(accuracy(s, select_threshold(s)), 1.0);
}

TEST(SelectThreshold, SinglePairAndInterleaved) {
  const auto pair = labelled({1.0}, {-1.0});
  EXPECT_EQ(select_threshold(pair), 0.0);
  EXPECT_EQ(accuracy(pair, 0.0), 1.0);

  // Alternating labels, lowest real: no candidate beats -inf.
  const auto inter = labelled({0.1, 0.3}, {0.2, 0.4});
  for (double c : {-kInf, 0.15, 0.25, 0.35, kInf}) {
    EXPECT_LE(brute_accuracy(inter, c), 0.5);
  }
  EXPECT_EQ(select_threshold(inter), -kInf);
}

TEST(SelectThreshold, SingleClassIsDataError) {
  EXPECT_THROW(select_threshold(labelled({0.1, 0.2}, {})), DataError);
  EXPECT_THROW(select_threshold(labelled({}, {0.1})), DataError);
  EXPECT_THROW(select_threshold(std::vector<ScoredSample>{}), DataError);
}

TEST(SelectThreshold, MatchesBruteForceSweep) {
  num::Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_samples(rng, 2 + trial % 40, trial % 3 == 0 ? 5 : 0);
    s.push_back({"a", 0.0, true});
    s.push_back({"b", 0.0, false});
    EXPECT_EQ(select_threshold(s), brute_threshold(s));
  }
}

TEST(SelectThreshold, NotBeatenByDenseGrid) {
  num::Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_samples(rng, 60, 0);
    const double chosen = accuracy(s, select_threshold(s));
    double grid_best = 0.0;
    for (int k = 0; k < 10000; ++k) {
      grid_best = std::max(grid_best, accuracy(s, -1.0 + 2.6 * (k + 0.5) / 10000.0));
    }
    // One sample's worth of slack.
    EXPECT_GE(chosen + 1.0 / 60.0, grid_best);
    EXPECT_GE(chosen, grid_best);
  }
}

TEST(Auc, WorkedExamples) {
  EXPECT_EQ(*auc(labelled({0.8, 0.6}, {0.7, 0.1})), 0.75);
  EXPECT_EQ(*auc(labelled({0.9, 0.8}, {0.1, -0.2})), 1.0);
  EXPECT_EQ(*auc(labelled({0.3, 0.3, 0.3}, {0.3, 0.3})), 0.5);
  EXPECT_EQ(*auc(labelled({0.1}, {0.9})), 0.0);
  EXPECT_FALSE(auc(labelled({0.1, 0.2}, {})).has_value());
  EXPECT_FALSE(auc(labelled({}, {0.1})).has_value());
}

TEST(Auc, EqualsPairCountingWithTies) {
  num::Rng rng(10);
  for (std::size_t n : {2u, 3u, 10u, 57u, 300u, 2000u}) {
    for (int levels : {0, 4, 40}) {
      auto s = random_samples(rng, n, levels);
      s.push_back({"a", 0.25, true});
      s.push_back({"b", 0.25, false});
      EXPECT_EQ(*auc(s), brute_auc(s)) << "n=" << n << " levels=" << levels;
    }
  }
}

TEST(Auc, InvariantUnderIncreasingTransforms) {
  num::Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = random_samples(rng, 100, trial % 2 == 0 ? 10 : 0);
    s.push_back({"a", 0.5, true});
    s.push_back({"b", 0.5, false});
    const double base = *auc(s);
    auto affine = s, squashed = s;
    for (auto& x : affine) x.score = 2.0 * x.score + 1.0;
    for (auto& x : squashed) x.score = std::tanh(x.score);
    EXPECT_EQ(*auc(affine), base);
    EXPECT_EQ(*auc(squashed), base);
  }
}

TEST(Accuracy, EmptyIsDataError) {
  EXPECT_THROW(accuracy(std::vector<ScoredSample>{}, 0.0), DataError);
  EXPECT_THROW(compute_metrics(std::vector<ScoredSample>{}, 0.0), DataError);
}

TEST(Histogram, BinsAndCounts) {
  const auto s = labelled({-1.0, 1.0, 0.0, 0.019, 3.0}, {-0.999, 0.04, -7.0});
  const Histogram h = similarity_histogram(s);
  ASSERT_EQ(h.edges.size(), kHistogramBins + 1);
  ASSERT_EQ(h.real_counts.size(), kHistogramBins);
  EXPECT_EQ(h.edges.front(), -1.0);
  EXPECT_EQ(h.edges.back(), 1.0);
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    EXPECT_NEAR(h.edges[b + 1] - h.edges[b], 0.04, 1e-12);
  }
  EXPECT_EQ(h.real_counts[0], 1u);   // -1
  EXPECT_EQ(h.real_counts[25], 2u);  // 0 and 0.019
  EXPECT_EQ(h.real_counts[49], 2u);  // 1 and the out-of-range 3
  EXPECT_EQ(h.fake_counts[0], 2u);   // -0.999 and -7
  EXPECT_EQ(h.fake_counts[26], 1u);  // 0.04
}

TEST(ComputeMetrics, Invariants) {
  num::Rng rng(12);
  const auto s = random_samples(rng, 333, 0);
  const EvalReport r = compute_metrics(s, 0.1);
  EXPECT_GE(r.acc, 0.0);
  EXPECT_LE(r.acc, 1.0);
  ASSERT_TRUE(r.auc.has_value());
  EXPECT_GE(*r.auc, 0.0);
  EXPECT_LE(*r.auc, 1.0);
  std::size_t total = 0;
  for (std::size_t b = 0; b < kHistogramBins; ++b) total += r.histogram.real_counts[b] + r.histogram.fake_counts[b];
  EXPECT_EQ(total, s.size());
  EXPECT_EQ(r.samples.size(), s.size());
  EXPECT_EQ(r.acc, brute_accuracy(s, 0.1));

  const EvalReport one = compute_metrics(labelled({0.3, 0.5}, {}), 0.4);
  EXPECT_FALSE(one.auc.has_value());
  EXPECT_EQ(one.acc, 0.5);
}

TEST(WriteReport, FilesAndFormats) {
  const auto dir = std::filesystem::temp_directory_path() / "vfd_detector_test" / "report";
  std::filesystem::remove_all(dir);
  write_report(dir, compute_metrics(labelled({0.5, 0.2}, {-0.3}), -kInf));

  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(j["threshold"], "-inf");
  EXPECT_EQ(j["acc"].get<double>(), 2.0 / 3.0);
  EXPECT_EQ(j["auc"].get<double>(), 1.0);
  EXPECT_EQ(j["num_real"], 2);
  EXPECT_EQ(j["num_fake"], 1);

  const std::string scores = slurp(dir / "scores.csv");
  EXPECT_EQ(scores.rfind("id,score,label,verdict\n", 0), 0u);
  EXPECT_NE(scores.find("f2,-0.29999999999999999,fake,Real"), std::string::npos);

  std::ifstream hist(dir / "histogram.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(hist, line);
  EXPECT_EQ(line, "bin_left,bin_right,real_count,fake_count");
  while (std::getline(hist, line)) ++rows;
  EXPECT_EQ(rows, kHistogramBins);

  write_report(dir, compute_metrics(labelled({0.5}, {}), 0.0));
  const auto k = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_TRUE(k["auc"].is_null());
  EXPECT_EQ(k["threshold"].get<double>(), 0.0);
}

TEST(Score, DeterministicAndBounded) {
  auto v = encoder::EncoderConfig::voice_default();
  auto f = encoder::EncoderConfig::face_default();
  v.patch_h = 64;
  v.patch_w = 60;
  f.patch_h = f.patch_w = 32;
  v.num_identities = f.num_identities = 3;
  const auto model = encoder::VfdModel::create(v, f, 4);
  num::Rng rng(13);
  frontends::AudioClip clip;
  clip.samples.resize(48000);
  for (double& x : clip.samples) x = 0.3 * rng.normal();
  frontends::FaceImage face;
  face.pixels = num::uniform_tensor({3, 224, 224}, -1.0, 1.0, rng);
  const double a = score_pair(clip, face, model);
  const double b = score_pair(clip, face, model);
  EXPECT_EQ(a, b);
  EXPECT_LE(std::abs(a), 1.0);
}
