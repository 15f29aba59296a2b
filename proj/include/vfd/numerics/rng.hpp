#pragma once

#include <cstddef>
#include <cstdint>

#include "vfd/numerics/tensor.hpp"

namespace vfd::num {

// Counter-based generator: draw i is splitmix64(seed, i), so a (seed,
// counter) pair pins the stream on every platform. Normal draws use
// Box-Muller over two uniforms and never cache a spare value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  // Uniform integer in [0, bound); bound must be positive.
  std::size_t below(std::size_t bound);

  // Independent stream derived from this generator's seed and a stream id.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);

// N(0, stddev^2) entries.
Tensor normal_tensor(Shape shape, double stddev, Rng& rng);
Tensor uniform_tensor(Shape shape, double low, double high, Rng& rng);

}  // namespace vfd::num
