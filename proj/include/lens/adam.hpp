#pragma once

#include <cstdint>

#include "lens/matrix.hpp"

namespace lens {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam state for a single parameter tensor.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t rows, std::size_t cols, AdamConfig cfg = {})
      : cfg_(cfg), m_(rows, cols), v_(rows, cols) {}

  void step(Matrix& params, const Matrix& grads);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  Matrix m_;
  Matrix v_;
  std::int64_t t_ = 0;
};

// One bias-corrected update of `params` in place; advances `state`.
void adam_step(Matrix& params, const Matrix& grads, AdamState& state);

}  // namespace lens
