#include "lens/rng.hpp"

#include <cmath>
#include <numbers>

#include "lens/errors.hpp"

namespace lens {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

inline std::uint64_t splitmix64_next(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) {
    word = splitmix64_next(s);
  }
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is always finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::vector<double> Rng::normal_vec(std::size_t n) {
  std::vector<double> out(n);
  for (double& x : out) x = normal();
  return out;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) {
    throw DomainError("Rng::below: bound must be positive");
  }
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t a = stream;
  const std::uint64_t h = splitmix64_next(a);
  std::uint64_t b = seed ^ h;
  return Rng(splitmix64_next(b));
}

Matrix sample_standard_normal(Rng& rng, std::size_t n) {
  if (n < 1) {
    throw DomainError("sample_standard_normal: n must be >= 1");
  }
  Matrix out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, 0) = rng.normal();
  }
  return out;
}

}  // namespace lens
