#pragma once

#include <ostream>

#include "vfd/cli/run_config.hpp"
#include "vfd/encoder/encoder.hpp"
#include "vfd/pipeline/trainer.hpp"

namespace vfd::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFake = 1,
  kExitInput = 2,
  kExitNumeric = 3,
};

int cmd_synth(RunConfig& config, std::ostream& out);
int cmd_pretrain(RunConfig& config, std::ostream& out);
int cmd_finetune(RunConfig& config, std::ostream& out);
int cmd_eval(RunConfig& config, std::ostream& out);
int cmd_detect(RunConfig& config, std::ostream& out);
int cmd_gradcheck(RunConfig& config, std::ostream& out);

// Encoder configs and the training config a run's keys describe.
encoder::EncoderConfig face_config_from(const RunConfig& config);
encoder::EncoderConfig voice_config_from(const RunConfig& config);
pipeline::TrainConfig train_config_from(const RunConfig& config, pipeline::Stage stage);

// Parses argv (subcommand first), runs it, and maps errors to exit codes:
// 2 for bad input or configuration, 3 for numeric failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vfd::cli
