#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vfd/numerics/tensor.hpp"

namespace vfd::objectives {

inline constexpr double kCosineEpsilon = 1e-8;

// v.f / max(|v| |f|, eps). Zero-norm inputs score 0 rather than NaN.
double cosine_similarity(std::span<const double> v, std::span<const double> f);
num::Tensor cosine_similarity(num::Tape& tape, const num::Tensor& v, const num::Tensor& f);

// -log softmax(logits)[label], log-sum-exp form.
double identity_cross_entropy(std::span<const double> logits, std::size_t label);
num::Tensor identity_cross_entropy(num::Tape& tape, const num::Tensor& logits, std::size_t label);

enum class InfoNceForm {
  // Temperature on every exponent of the softmax.
  kStandard,
  // Temperature on the numerator only; can go negative.
  // Can go negative for tau < 1; kept for inspection.
  kLiteral,
};

struct ContrastiveBatch {
  num::Tensor anchor_voice;
  num::Tensor positive_face;
  std::vector<num::Tensor> negative_faces;
  double temperature = 0.1;
};

struct RfcBatch {
  num::Tensor real_voice;
  num::Tensor real_face;
  std::vector<num::Tensor> fake_voices;
  std::vector<num::Tensor> fake_faces;
};

// Loss values from precomputed similarities.
double info_nce(double positive, std::span<const double> negatives, double temperature,
                InfoNceForm form = InfoNceForm::kStandard);
double rfc_loss(double real, std::span<const double> fakes);

num::Tensor info_nce(num::Tape& tape, const ContrastiveBatch& batch,
                     InfoNceForm form = InfoNceForm::kStandard);
num::Tensor rfc_loss(num::Tape& tape, const RfcBatch& batch);

// Differentiable forms over similarity scalars already on the tape; the
// batch variants above delegate here.
num::Tensor info_nce_from_similarities(num::Tape& tape, const num::Tensor& positive,
                                       std::span<const num::Tensor> negatives, double temperature,
                                       InfoNceForm form = InfoNceForm::kStandard);
num::Tensor rfc_from_similarities(num::Tape& tape, const num::Tensor& real,
                                  std::span<const num::Tensor> fakes);

}  // namespace vfd::objectives
