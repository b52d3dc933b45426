#include "lens/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lens/errors.hpp"

namespace lens {

namespace {

double central_difference(const std::function<double()>& loss, double& coord,
                          double h) {
  const double saved = coord;
  coord = saved + h;
  const double up = loss();
  coord = saved - h;
  const double down = loss();
  coord = saved;
  if (!std::isfinite(up) || !std::isfinite(down)) {
    throw NumericError("finite_diff_check: loss is non-finite at perturbed point");
  }
  return (up - down) / (2.0 * h);
}

}  // namespace

double finite_diff_check(const std::function<double()>& loss, Matrix& params,
                         const Matrix& analytic_grads, double h) {
  Matrix* p = &params;
  const Matrix* g = &analytic_grads;
  return finite_diff_check_many(loss, std::span<Matrix* const>(&p, 1),
                                std::span<const Matrix* const>(&g, 1), h);
}

double finite_diff_check_many(const std::function<double()>& loss,
                              std::span<Matrix* const> params,
                              std::span<const Matrix* const> grads, double h) {
  if (params.size() != grads.size()) {
    throw ShapeError("finite_diff_check: parameter/gradient list size mismatch");
  }
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& p = *params[t];
    const Matrix& g = *grads[t];
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
      throw ShapeError("finite_diff_check: tensor " + std::to_string(t) +
                       " gradient shape mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double cd = central_difference(loss, p.data()[i], h);
      const double rel = std::abs(cd - g.data()[i]) / (std::abs(g.data()[i]) + 1e-8);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

LogLogFit loglog_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw ShapeError("loglog_fit: xs/ys length mismatch");
  }
  if (xs.size() < 2) {
    throw DomainError("loglog_fit: need at least 2 points");
  }
  std::vector<double> lx(xs.size()), ly(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
      throw DomainError("loglog_fit: inputs must be positive (point " +
                        std::to_string(i) + ")");
    }
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  const double mx = mean(lx);
  const double my = mean(ly);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) {
    throw DomainError("loglog_fit: need at least 2 distinct x values");
  }
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

double mean(std::span<const double> v) {
  if (v.empty()) {
    throw DomainError("mean of empty range");
  }
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size());
}

}  // namespace lens
