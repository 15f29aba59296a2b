#include "vfd/pipeline/optimizer.hpp"

#include <cmath>

#include "vfd/errors.hpp"

namespace vfd::pipeline {

void adamw_update(num::ParameterList& params, OptimizerState& state, double learning_rate,
                  double weight_decay) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (num::NamedParameter& p : params) {
    num::Tensor& w = p.tensor;
    if (!w.has_grad()) continue;
    auto [m_it, m_new] = state.first_moment.try_emplace(p.name, w.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(p.name, w.shape());
    if (m_it->second.shape() != w.shape() || v_it->second.shape() != w.shape()) {
      throw ShapeError("optimizer moments for " + p.name + " do not match the parameter shape");
    }
    auto m = m_it->second.values();
    auto v = v_it->second.values();
    auto values = w.values();
    auto g = std::as_const(w).grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] -= learning_rate * weight_decay * values[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace vfd::pipeline
