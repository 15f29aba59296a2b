#include "vfd/numerics/rng.hpp"

#include <cmath>
#include <numbers>

#include "vfd/errors.hpp"

namespace vfd::num {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t draw = mix64(seed_ ^ mix64(counter_));
  ++counter_;
  return draw;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t bound) {
  if (bound == 0) throw ContractError("Rng::below needs a positive bound");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw = next_u64();
  while (draw >= limit) draw = next_u64();
  return static_cast<std::size_t>(draw % bound);
}

Rng Rng::fork(std::uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(~stream))); }

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor out(std::move(shape));
  for (double& v : out.values()) v = stddev * rng.normal();
  return out;
}

Tensor uniform_tensor(Shape shape, double low, double high, Rng& rng) {
  Tensor out(std::move(shape));
  for (double& v : out.values()) v = low + (high - low) * rng.uniform();
  return out;
}

}  // namespace vfd::num
