#include "vfd/pipeline/trainer.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "vfd/errors.hpp"
#include "vfd/numerics/ops.hpp"
#include "vfd/objectives/objectives.hpp"

namespace vfd::pipeline {
namespace {

constexpr std::uint64_t kSubsetStream = 0x5B5E7000ULL;

void drop_grads(const num::ParameterList& params) {
  for (const num::NamedParameter& p : params) {
    num::Tensor t = p.tensor;
    t.drop_grad();
  }
}

void require_finite_loss(const num::Tape& tape, const num::Tensor& loss, const char* what) {
  if (std::isfinite(loss.item())) return;
  std::string where = "no recorded tensor";
  if (auto first = tape.first_non_finite()) where = *first;
  throw NumericError(std::string(what) + " loss is not finite; first non-finite tensor: " + where);
}

void require_finite_params(const num::ParameterList& params) {
  for (const num::NamedParameter& p : params) {
    if (p.tensor.has_grad()) {
      for (double g : std::as_const(p.tensor).grad()) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
      }
    }
    if (!p.tensor.all_finite()) throw NumericError("non-finite value in parameter " + p.name);
  }
}

}  // namespace

std::string stage_name(Stage stage) {
  return stage == Stage::kPretrain ? "pretrain" : "finetune";
}

Schedule parse_schedule(const std::string& name) {
  if (name == "cosine") return Schedule::kCosine;
  if (name == "linear") return Schedule::kLinear;
  if (name == "constant") return Schedule::kConstant;
  throw ConfigError("unknown learning-rate schedule '" + name + "' (cosine, linear or constant)");
}

std::string schedule_name(Schedule schedule) {
  switch (schedule) {
    case Schedule::kCosine: return "cosine";
    case Schedule::kLinear: return "linear";
    case Schedule::kConstant: return "constant";
  }
  return "cosine";
}

TrainConfig TrainConfig::pretrain_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.stage = Stage::kFinetune;
  c.learning_rate = 5e-6;
  c.steps = 300;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0.0 && weight_decay < 1.0)) {
    throw ConfigError("weight_decay must lie in [0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (stage == Stage::kPretrain && negatives_u < 1) throw ConfigError("pretraining needs U >= 1");
  if (stage == Stage::kFinetune && negatives_q < 1) throw ConfigError("fine-tuning needs Q >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
}

double TrainConfig::learning_rate_at(std::size_t t) const {
  const double progress = steps == 0 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps);
  switch (schedule) {
    case Schedule::kCosine: return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    case Schedule::kLinear: return learning_rate * (1.0 - progress);
    case Schedule::kConstant: return learning_rate;
  }
  return learning_rate;
}

PretrainLosses pretrain_step(const PretrainBatch& batch, const Dataset& data, encoder::VfdModel& model, OptimizerState& opt,
                             const TrainConfig& config, double learning_rate) {
  num::ParameterList params = model.parameters();
  drop_grads(params);
  num::Tape tape;

  std::map<std::size_t, num::Tensor> faces;  // class -> embedding
  std::vector<num::Tensor> face_ce;
  for (const auto& [cls, record] : batch.face_record) {
    num::Tensor f = encoder::encode(tape, data.inputs(record).face, model.face);
    face_ce.push_back(
        objectives::identity_cross_entropy(tape, encoder::classify_identity(tape, f, model.face), cls));
    faces.emplace(cls, f);
  }
  std::vector<num::Tensor> voice_ce;
  std::vector<num::Tensor> nce;
  for (const PretrainItem& item : batch.items) {
    num::Tensor v = encoder::encode(tape, data.inputs(item.anchor_record).spectrogram, model.voice);
    voice_ce.push_back(objectives::identity_cross_entropy(
        tape, encoder::classify_identity(tape, v, model.voice), item.identity));
    num::Tensor positive = objectives::cosine_similarity(tape, v, faces.at(item.identity));
    std::vector<num::Tensor> negatives;
    for (std::size_t c : item.negative_identities) {
      negatives.push_back(objectives::cosine_similarity(tape, v, faces.at(c)));
    }
    nce.push_back(
        objectives::info_nce_from_similarities(tape, positive, negatives, config.temperature));
  }
  num::Tensor l_voice = num::mean_of(tape, voice_ce);
  num::Tensor l_face = num::mean_of(tape, face_ce);
  num::Tensor l_nce = num::mean_of(tape, nce);
  num::Tensor total = num::add(tape, num::add(tape, l_voice, l_face), l_nce);
  require_finite_loss(tape, total, "pretraining");
  tape.backward(total);
  require_finite_params(params);
  adamw_update(params, opt, learning_rate, config.weight_decay);
  require_finite_params(params);
  return {l_voice.item(), l_face.item(), l_nce.item(), total.item()};
}

double finetune_step(const FinetuneBatch& batch, const Dataset& data, encoder::VfdModel& model,
                     OptimizerState& opt, const TrainConfig& config, double learning_rate) {
  num::ParameterList all = model.parameters();
  drop_grads(all);
  num::ParameterList params = model.encoder_parameters();
  num::Tape tape;

  auto pair_similarity = [&](std::size_t record) {
    const SampleInputs& in = data.inputs(record);
    num::Tensor v = encoder::encode(tape, in.spectrogram, model.voice);
    num::Tensor f = encoder::encode(tape, in.face, model.face);
    return objectives::cosine_similarity(tape, v, f);
  };
  std::vector<num::Tensor> fakes;
  for (std::size_t r : batch.fake_records) fakes.push_back(pair_similarity(r));
  std::map<std::size_t, num::Tensor> reals;  // a repeated record is encoded once
  std::vector<num::Tensor> losses;
  for (std::size_t r : batch.real_records) {
    auto it = reals.find(r);
    if (it == reals.end()) it = reals.emplace(r, pair_similarity(r)).first;
    losses.push_back(objectives::rfc_from_similarities(tape, it->second, fakes));
  }
  num::Tensor loss = num::mean_of(tape, losses);
  require_finite_loss(tape, loss, "fine-tuning");
  tape.backward(loss);
  require_finite_params(params);
  adamw_update(params, opt, learning_rate, config.weight_decay);
  require_finite_params(params);
  return loss.item();
}

std::vector<std::string> loss_columns(Stage stage) {
  if (stage == Stage::kPretrain) return {"cls_voice", "cls_face", "info_nce", "total"};
  return {"rfc"};
}

IdentityIndex training_identities(const Dataset& data, double fraction, std::uint64_t seed) {
  num::Rng rng = num::Rng(seed).fork(kSubsetStream);
  return IdentityIndex::build(data, subsample(data.select(Split::kTrain, true), fraction, rng));
}

Trainer::Trainer(const Dataset& data, encoder::VfdModel& model, OptimizerState& optimizer,
                 num::Rng& rng, TrainConfig config)
    : data_(data), model_(model), optimizer_(optimizer), rng_(rng), config_(config) {
  config_.validate();
  num::Rng subset = num::Rng(config_.seed).fork(kSubsetStream);
  reals_ = subsample(data_.select(Split::kTrain, true), config_.fraction, subset);
  fakes_ = subsample(data_.select(Split::kTrain, false), config_.fraction, subset);
  identities_ = IdentityIndex::build(data_, reals_);
  if (config_.stage == Stage::kPretrain) {
    if (identities_.num_classes() != model_.voice.config.num_identities ||
        identities_.num_classes() != model_.face.config.num_identities) {
      throw ConfigError("classifier heads sized for " +
                        std::to_string(model_.voice.config.num_identities) +
                        " identities, training split has " +
                        std::to_string(identities_.num_classes()));
    }
  }
}

std::vector<LossRow> Trainer::run(const StepCallback& on_step) {
  std::vector<LossRow> rows;
  for (std::size_t t = 0; t < config_.steps; ++t) {
    LossRow row;
    row.step = t + 1;
    row.learning_rate = config_.learning_rate_at(t);
    if (config_.stage == Stage::kPretrain) {
      const PretrainBatch batch =
          sample_pretrain_batch(identities_, config_.batch_size, config_.negatives_u, rng_);
      const PretrainLosses l =
          pretrain_step(batch, data_, model_, optimizer_, config_, row.learning_rate);
      row.terms = {l.cls_voice, l.cls_face, l.info_nce, l.total};
    } else {
      const FinetuneBatch batch =
          sample_finetune_batch(reals_, fakes_, config_.batch_size, config_.negatives_q, rng_);
      row.terms = {finetune_step(batch, data_, model_, optimizer_, config_, row.learning_rate)};
    }
    if (on_step) on_step(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace vfd::pipeline
