#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "lens/matrix.hpp"

namespace lens {

// Frozen ground-truth scorer for the synthetic benchmark: a two-layer tanh
// MLP whose weights are derived once from the seed (std 1/sqrt(fan_in),
// zero biases). Used only for labeling and evaluation, never trained.
struct GoldRewardSpec {
  std::uint64_t seed = 0;
  int dim = 64;
  int hidden = 32;
  Matrix w1;               // hidden x dim
  std::vector<double> w2;  // hidden

  static GoldRewardSpec create(std::uint64_t seed, int dim, int hidden = 32);

  // Stable content hash over (seed, dim, hidden); changes iff any field does.
  std::string digest() const;
};

double gold_reward(const GoldRewardSpec& gold, std::span<const double> e);

void save_gold(const GoldRewardSpec& gold, const std::string& path);
GoldRewardSpec load_gold(const std::string& path);

}  // namespace lens
