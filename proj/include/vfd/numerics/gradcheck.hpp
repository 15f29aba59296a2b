#pragma once

#include <functional>
#include <span>

#include "vfd/numerics/tensor.hpp"

namespace vfd::num {

using ScalarFunction = std::function<double(const Tensor&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
// coordinate of x. x itself is left unchanged.
Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& x, double h);

// ||a - b||_2 / max(||a||_2, ||b||_2); zero when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace vfd::num
