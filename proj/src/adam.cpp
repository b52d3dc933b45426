#include "lens/adam.hpp"

#include <cmath>
#include <string>

#include "lens/errors.hpp"

namespace lens {

void AdamState::step(Matrix& params, const Matrix& grads) {
  if (params.rows() != m_.rows() || params.cols() != m_.cols() ||
      grads.rows() != m_.rows() || grads.cols() != m_.cols()) {
    throw ShapeError("adam_step: parameter/gradient shape does not match state (" +
                     std::to_string(params.rows()) + "x" +
                     std::to_string(params.cols()) + " vs " +
                     std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()) +
                     ")");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  double* p = params.data();
  const double* g = grads.data();
  double* m = m_.data();
  double* v = v_.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

void adam_step(Matrix& params, const Matrix& grads, AdamState& state) {
  state.step(params, grads);
}

}  // namespace lens
