#pragma once

#include <cstdint>
#include <vector>

#include "lens/matrix.hpp"

namespace lens {

// xoshiro256** seeded through splitmix64. One instance per owner; never
// shared across threads. Normal draws use Box-Muller on consecutive uniform
// pairs (the second value of each pair is cached and returned next).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();

  // Standard normal draw.
  double normal();

  std::vector<double> normal_vec(std::size_t n);

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Independent generator for a parallel stream, deterministic in
  // (seed, stream). Used so per-prompt / per-job output does not depend on
  // scheduling.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// n standard-normal draws as an n x 1 matrix. n must be >= 1.
Matrix sample_standard_normal(Rng& rng, std::size_t n);

}  // namespace lens
