#include "vfd/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vfd/errors.hpp"

namespace vfd::num {

Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be positive");
  Tensor probe = x.detach();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double upper = f(probe);
    probe[i] = original - h;
    const double lower = f(probe);
    probe[i] = original;
    out[i] = (upper - lower) / (2.0 * h);
  }
  return out;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: lengths differ");
  double diff = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    norm_a += a[i] * a[i];
    norm_b += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(norm_a, norm_b));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

}  // namespace vfd::num
