#include "vfd/objectives/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vfd/errors.hpp"
#include "vfd/numerics/ops.hpp"

namespace vfd::objectives {
namespace {

// -log softmax(xs)[target].
double negative_log_softmax(std::span<const double> xs, std::size_t target) {
  const double peak = *std::max_element(xs.begin(), xs.end());
  double rest = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i != target) rest += std::exp(xs[i] - peak);
  }
  if (xs[target] == peak) return std::log1p(rest);
  return peak - xs[target] + std::log(std::exp(xs[target] - peak) + rest);
}

void require_temperature(double temperature) {
  if (!(temperature > 0.0)) {
    throw ConfigError("InfoNCE temperature must be positive, got " + std::to_string(temperature));
  }
}

}  // namespace

double cosine_similarity(std::span<const double> v, std::span<const double> f) {
  if (v.size() != f.size()) {
    throw ContractError("cosine_similarity: lengths " + std::to_string(v.size()) + " and " +
                        std::to_string(f.size()) + " differ");
  }
  double dot = 0.0;
  double vv = 0.0;
  double ff = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * f[i];
    vv += v[i] * v[i];
    ff += f[i] * f[i];
  }
  return dot / std::max(std::sqrt(vv) * std::sqrt(ff), kCosineEpsilon);
}

num::Tensor cosine_similarity(num::Tape& tape, const num::Tensor& v, const num::Tensor& f) {
  if (v.size() != f.size()) {
    throw ContractError("cosine_similarity: shapes " + num::to_string(v.shape()) + " and " +
                        num::to_string(f.shape()) + " differ in length");
  }
  double dot = 0.0;
  double vv = 0.0;
  double ff = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * f[i];
    vv += v[i] * v[i];
    ff += f[i] * f[i];
  }
  const double norm_product = std::sqrt(vv) * std::sqrt(ff);
  const bool clamped = !(norm_product > kCosineEpsilon);
  const double denom = clamped ? kCosineEpsilon : norm_product;
  const double similarity = dot / denom;
  num::Tensor out = num::Tensor::scalar(similarity);
  if (!tape.tracks({&v, &f})) return out;
  out.set_requires_grad(true);
  tape.record("cosine_similarity", out, [v = v, f = f, out, vv, ff, denom, similarity, clamped]() mutable {
    const double g = std::as_const(out).grad()[0];
    if (v.requires_grad()) {
      auto gv = v.grad();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        const double d = f[i] / denom - (clamped ? 0.0 : similarity * v[i] / vv);
        gv[i] += g * d;
      }
    }
    if (f.requires_grad()) {
      auto gf = f.grad();
      for (std::size_t i = 0; i < gf.size(); ++i) {
        const double d = v[i] / denom - (clamped ? 0.0 : similarity * f[i] / ff);
        gf[i] += g * d;
      }
    }
  });
  return out;
}

double identity_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ContractError("identity label " + std::to_string(label) + " out of range for " +
                        std::to_string(logits.size()) + " identities");
  }
  return negative_log_softmax(logits, label);
}

num::Tensor identity_cross_entropy(num::Tape& tape, const num::Tensor& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ContractError("identity label " + std::to_string(label) + " out of range for " +
                        std::to_string(logits.size()) + " identities");
  }
  return num::cross_entropy(tape, logits, label);
}

double info_nce(double positive, std::span<const double> negatives, double temperature,
                InfoNceForm form) {
  require_temperature(temperature);
  std::vector<double> logits;
  logits.reserve(negatives.size() + 1);
  const double scale = form == InfoNceForm::kStandard ? 1.0 / temperature : 1.0;
  logits.push_back(positive * scale);
  for (double n : negatives) logits.push_back(n * scale);
  if (form == InfoNceForm::kStandard) return negative_log_softmax(logits, 0);
  return negative_log_softmax(logits, 0) + positive - positive / temperature;
}

double rfc_loss(double real, std::span<const double> fakes) {
  if (fakes.empty()) throw ConfigError("RFC loss needs at least one fake pair (Q >= 1)");
  std::vector<double> logits;
  logits.reserve(fakes.size() + 1);
  logits.push_back(real);
  logits.insert(logits.end(), fakes.begin(), fakes.end());
  return negative_log_softmax(logits, 0);
}

num::Tensor info_nce_from_similarities(num::Tape& tape, const num::Tensor& positive,
                                       std::span<const num::Tensor> negatives, double temperature,
                                       InfoNceForm form) {
  require_temperature(temperature);
  std::vector<num::Tensor> parts;
  parts.reserve(negatives.size() + 1);
  parts.push_back(positive);
  parts.insert(parts.end(), negatives.begin(), negatives.end());
  num::Tensor logits = num::concat(tape, parts);
  if (form == InfoNceForm::kStandard) {
    return num::cross_entropy(tape, num::scale(tape, logits, 1.0 / temperature), 0);
  }
  // -d+/tau + log(e^{d+} + sum e^{d-}) = CE(unscaled) + d+ (1 - 1/tau)
  num::Tensor ce = num::cross_entropy(tape, logits, 0);
  num::Tensor shift = num::reshape(tape, num::scale(tape, positive, 1.0 - 1.0 / temperature),
                                   num::Shape{});
  return num::add(tape, ce, shift);
}

num::Tensor rfc_from_similarities(num::Tape& tape, const num::Tensor& real,
                                  std::span<const num::Tensor> fakes) {
  if (fakes.empty()) throw ConfigError("RFC loss needs at least one fake pair (Q >= 1)");
  std::vector<num::Tensor> parts;
  parts.reserve(fakes.size() + 1);
  parts.push_back(real);
  parts.insert(parts.end(), fakes.begin(), fakes.end());
  // One-hot target at the real slot; no temperature.
  return num::cross_entropy(tape, num::concat(tape, parts), 0);
}

num::Tensor info_nce(num::Tape& tape, const ContrastiveBatch& batch, InfoNceForm form) {
  require_temperature(batch.temperature);
  num::Tensor positive = cosine_similarity(tape, batch.anchor_voice, batch.positive_face);
  std::vector<num::Tensor> negatives;
  negatives.reserve(batch.negative_faces.size());
  for (const num::Tensor& face : batch.negative_faces) {
    negatives.push_back(cosine_similarity(tape, batch.anchor_voice, face));
  }
  return info_nce_from_similarities(tape, positive, negatives, batch.temperature, form);
}

num::Tensor rfc_loss(num::Tape& tape, const RfcBatch& batch) {
  if (batch.fake_voices.size() != batch.fake_faces.size()) {
    throw ContractError("RFC batch has " + std::to_string(batch.fake_voices.size()) +
                        " fake voices but " + std::to_string(batch.fake_faces.size()) +
                        " fake faces");
  }
  num::Tensor real = cosine_similarity(tape, batch.real_voice, batch.real_face);
  std::vector<num::Tensor> fakes;
  fakes.reserve(batch.fake_faces.size());
  for (std::size_t i = 0; i < batch.fake_faces.size(); ++i) {
    fakes.push_back(cosine_similarity(tape, batch.fake_voices[i], batch.fake_faces[i]));
  }
  return rfc_from_similarities(tape, real, fakes);
}

}  // namespace vfd::objectives
