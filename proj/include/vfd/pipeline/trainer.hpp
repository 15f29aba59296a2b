#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vfd/encoder/model.hpp"
#include "vfd/numerics/rng.hpp"
#include "vfd/pipeline/dataset.hpp"
#include "vfd/pipeline/optimizer.hpp"

namespace vfd::pipeline {

enum class Stage { kPretrain, kFinetune };
enum class Schedule { kCosine, kLinear, kConstant };

std::string stage_name(Stage stage);
Schedule parse_schedule(const std::string& name);
std::string schedule_name(Schedule schedule);

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  double learning_rate = 1e-4;
  double weight_decay = 0.2;
  std::size_t batch_size = 16;
  std::size_t negatives_u = 8;   // pretraining
  std::size_t negatives_q = 10;  // fine-tuning
  double temperature = 0.1;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::kCosine;
  // Share of the training split's records used by this stage.
  double fraction = 1.0;

  static TrainConfig pretrain_defaults();
  static TrainConfig finetune_defaults();
  void validate() const;
  // Learning rate at 0-based step t; decays toward zero at t == steps.
  double learning_rate_at(std::size_t t) const;
};

struct PretrainLosses {
  double cls_voice = 0.0;
  double cls_face = 0.0;
  double info_nce = 0.0;
  double total = 0.0;
};

// Unit-weight sum of voice and face identity cross-entropy (means over the
// batch's voices and faces) and InfoNCE (mean over anchors); one AdamW step
// on every parameter in the graph.
PretrainLosses pretrain_step(const PretrainBatch& batch, const Dataset& data, encoder::VfdModel& model, OptimizerState& opt,
                             const TrainConfig& config, double learning_rate);

// Mean RFC loss of each real pair against the shared fakes; one AdamW step
// on the encoders with the identity classifier heads frozen.
double finetune_step(const FinetuneBatch& batch, const Dataset& data, encoder::VfdModel& model,
                     OptimizerState& opt, const TrainConfig& config, double learning_rate);

struct LossRow {
  std::size_t step = 0;
  std::vector<double> terms;
  double learning_rate = 0.0;
};

// Column names of LossRow::terms for a stage.
std::vector<std::string> loss_columns(Stage stage);

// Runs config.steps steps of the configured stage on the training split.
// Batch draws come from `rng`, which is left advanced for the checkpoint.
class Trainer {
 public:
  Trainer(const Dataset& data, encoder::VfdModel& model, OptimizerState& optimizer, num::Rng& rng,
          TrainConfig config);

  using StepCallback = std::function<void(const LossRow&)>;
  std::vector<LossRow> run(const StepCallback& on_step = {});

  std::size_t num_identities() const { return identities_.num_classes(); }

 private:
  const Dataset& data_;
  encoder::VfdModel& model_;
  OptimizerState& optimizer_;
  num::Rng& rng_;
  TrainConfig config_;
  IdentityIndex identities_;
  std::vector<std::size_t> reals_;
  std::vector<std::size_t> fakes_;
};

// Identity classes of the training split, used to size the classifier heads
// before pretraining.
IdentityIndex training_identities(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace vfd::pipeline
