#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "vfd/numerics/tensor.hpp"

namespace vfd::pipeline {

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  // Moments keyed by parameter name; created on first update.
  std::map<std::string, num::Tensor> first_moment;
  std::map<std::string, num::Tensor> second_moment;
};

// One AdamW step over every parameter holding a gradient; parameters without
// one are left untouched (no decay, no moment update). Decay is decoupled:
// p -= lr * wd * p, then p -= lr * m_hat / (sqrt(v_hat) + eps).
void adamw_update(num::ParameterList& params, OptimizerState& state, double learning_rate,
                  double weight_decay);

}  // namespace vfd::pipeline
