#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lens/matrix.hpp"

namespace lens {

// Max over coordinates of |central difference - analytic| / (|analytic| + 1e-8).
// `loss` is re-evaluated with params perturbed in place, so it must read the
// same Matrix object the caller passes here.
double finite_diff_check(const std::function<double()>& loss, Matrix& params,
                         const Matrix& analytic_grads, double h = 1e-5);

// Same check over a list of parameter tensors with matching gradient tensors.
double finite_diff_check_many(const std::function<double()>& loss,
                              std::span<Matrix* const> params,
                              std::span<const Matrix* const> grads,
                              double h = 1e-5);

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares on (ln x, ln y). All inputs must be positive and at
// least two xs distinct.
LogLogFit loglog_fit(std::span<const double> xs, std::span<const double> ys);

double mean(std::span<const double> v);
double variance(std::span<const double> v);

}  // namespace lens
