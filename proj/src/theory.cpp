#include "lens/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lens/assignment.hpp"
#include "lens/errors.hpp"
#include "lens/numeric.hpp"

namespace lens {

double estimate_p(std::span<const double> ns, std::span<const double> eps_rec) {
  if (ns.size() < 4) {
    throw DomainError("estimate_p: need at least 4 values of N");
  }
  for (double e : eps_rec) {
    if (!(e > 0.0)) {
      throw DomainError("estimate_p: reconstruction errors must be positive");
    }
  }
  return -loglog_fit(ns, eps_rec).slope;
}

double estimate_C1(std::span<const double> ns, std::span<const double> zetas,
                   int d, double delta) {
  if (ns.size() != zetas.size()) {
    throw ShapeError("estimate_C1: ns/zetas length mismatch");
  }
  if (ns.size() < 3) {
    throw DomainError("estimate_C1: need at least 3 values of N");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw DomainError("estimate_C1: delta must be in (0, 1)");
  }
  const double c2 = static_cast<double>(d) + std::log(1.0 / delta);
  double sxy = 0.0, sxx = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!(zetas[i] > 0.0)) continue;
    const double x = std::sqrt(c2 / ns[i]);
    sxy += zetas[i] * x;
    sxx += x * x;
    ++used;
  }
  if (used == 0) {
    throw DomainError("estimate_C1: degenerate fit, all zeta values nonpositive");
  }
  return sxy / sxx;
}

B0Fit estimate_B0(std::span<const double> ns, std::span<const double> zeta_aug,
                  double c1, double p, int d, double delta, int k) {
  if (ns.size() != zeta_aug.size()) {
    throw ShapeError("estimate_B0: ns/zeta_aug length mismatch");
  }
  if (ns.empty()) {
    throw DomainError("estimate_B0: empty input");
  }
  if (k < 2) {
    throw DomainError("estimate_B0: k must be >= 2");
  }
  const double c2 = static_cast<double>(d) + std::log(1.0 / delta);
  const double frac = (static_cast<double>(k) - 1.0) / static_cast<double>(k);

  std::vector<double> bias(ns.size());
  bool all_negative = true;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    bias[i] = zeta_aug[i] - c1 * std::sqrt(c2 / (static_cast<double>(k) * ns[i]));
    if (bias[i] >= 0.0) all_negative = false;
  }
  B0Fit fit;
  if (all_negative) {
    fit.clamped = true;
    for (double& b : bias) b = std::max(b, 0.0);
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double u = frac * std::pow(ns[i], -p);
    sxy += bias[i] * u;
    sxx += u * u;
  }
  fit.b0 = sxy / sxx;
  return fit;
}

double compute_N0(double c1, double b0, double p, int d, double delta) {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw DomainError("compute_N0: delta must be in (0, 1)");
  }
  if (!(p > 0.0)) {
    throw DomainError("compute_N0: p must be positive");
  }
  if (p >= 0.5) {
    throw DomainError("compute_N0: condition degenerate, 1/2 - p <= 0");
  }
  if (!(b0 > 0.0)) {
    throw NumericError("compute_N0: B0 must be positive (N0 diverges as B0 -> 0)");
  }
  if (!(c1 > 0.0)) {
    throw DomainError("compute_N0: C1 must be positive");
  }
  const double base =
      c1 * std::sqrt(static_cast<double>(d) + std::log(1.0 / delta)) / b0;
  const double n0 = std::pow(base, 1.0 / (0.5 - p));
  if (!std::isfinite(n0)) {
    throw NumericError("compute_N0: overflow, threshold diverges");
  }
  return n0;
}

double compute_t_delta(double sigma_noise, int d_vae, double delta) {
  if (!(sigma_noise > 0.0)) {
    throw DomainError("compute_t_delta: sigma_noise must be > 0");
  }
  if (d_vae < 1) {
    throw DomainError("compute_t_delta: d_vae must be >= 1");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw DomainError("compute_t_delta: delta must be in (0, 1)");
  }
  const double dv = static_cast<double>(d_vae);
  const double l = std::log(4.0 / delta);
  return sigma_noise * std::sqrt(dv + 2.0 * std::sqrt(dv * l) + 2.0 * l);
}

W1Check w1_checks(std::span<const std::vector<double>> originals,
                  std::span<const std::vector<double>> reconstructions) {
  if (originals.size() != reconstructions.size()) {
    throw ShapeError("w1_checks: set sizes differ (" +
                     std::to_string(originals.size()) + " vs " +
                     std::to_string(reconstructions.size()) + ")");
  }
  if (originals.empty()) {
    throw DomainError("w1_checks: empty sets");
  }
  const std::size_t n = originals.size();
  W1Check check;
  for (std::size_t i = 0; i < n; ++i) {
    check.coupling_bound +=
        std::sqrt(squared_distance(originals[i], reconstructions[i]));
  }
  check.coupling_bound /= static_cast<double>(n);

  if (n > 512) {
    throw DomainError("w1_checks: exact W1 requires count <= 512, got " +
                      std::to_string(n));
  }
  Matrix cost(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost(i, j) = std::sqrt(squared_distance(originals[i], reconstructions[j]));
    }
  }
  check.exact_w1 = assignment_min_cost(cost).total_cost / static_cast<double>(n);
  return check;
}

Theorem1Constants estimate_theorem1_constants(const VaeParams& params,
                                              const RewardHead& reference,
                                              std::span<const PreferencePair> pairs,
                                              Rng& rng) {
  if (pairs.empty()) {
    throw DomainError("estimate_theorem1_constants: empty data");
  }
  Theorem1Constants c;
  c.alpha = 1.0;

  // Decoder Lipschitz estimate: max ratio over posterior-mean latents plus
  // perturbed versions at the synthesis noise scale and larger.
  const std::size_t probes = std::min<std::size_t>(pairs.size(), 256);
  std::vector<std::vector<double>> zs;
  zs.reserve(probes * 2);
  for (std::size_t i = 0; i < probes; ++i) {
    for (Sign sign : {Sign::plus, Sign::minus}) {
      const auto& e = sign == Sign::plus ? pairs[i].e_plus : pairs[i].e_minus;
      zs.push_back(encode(params, e, sign).mu);
    }
  }
  for (std::size_t i = 0; i + 1 < zs.size(); i += 2) {
    for (double scale : {0.1, 1.0}) {
      std::vector<double> z2 = zs[i];
      for (double& x : z2) x += scale * rng.normal();
      const auto g1 = decode(params, zs[i], Sign::plus);
      const auto g2 = decode(params, z2, Sign::plus);
      const double dz = std::sqrt(squared_distance(zs[i], z2));
      if (dz > 1e-12) {
        c.l_g = std::max(
            c.l_g, std::sqrt(squared_distance(g1, g2)) / dz);
      }
    }
  }

  // Reward Hoelder (alpha = 1) estimate over original/reconstruction pairs
  // and random cross pairs.
  auto ratio = [&](std::span<const double> a, std::span<const double> b) {
    const double de = std::sqrt(squared_distance(a, b));
    if (de <= 1e-12) return 0.0;
    return std::abs(reward_score(reference, a) - reward_score(reference, b)) / de;
  };
  for (std::size_t i = 0; i < probes; ++i) {
    const auto& p = pairs[i];
    const auto qp = encode(params, p.e_plus, Sign::plus);
    const auto rec = decode(params, qp.mu, Sign::plus);
    c.l_r = std::max(c.l_r, ratio(p.e_plus, rec));
    c.l_r = std::max(c.l_r, ratio(p.e_plus, p.e_minus));
    const auto& other = pairs[rng.below(pairs.size())];
    c.l_r = std::max(c.l_r, ratio(p.e_plus, other.e_minus));
    // Reconstruction norm bound (Assumption-style sup over the data).
    c.eps_rec_norm =
        std::max(c.eps_rec_norm, std::sqrt(squared_distance(p.e_plus, rec)));
    const auto qm = encode(params, p.e_minus, Sign::minus);
    const auto rec_m = decode(params, qm.mu, Sign::minus);
    c.eps_rec_norm =
        std::max(c.eps_rec_norm, std::sqrt(squared_distance(p.e_minus, rec_m)));
  }
  return c;
}

double theorem1_margin_check(const RewardHead& reference,
                             std::span<const PreferencePair> originals,
                             std::span<const PreferencePair> synth_pairs,
                             double sigma_noise, int d_vae, double delta,
                             const Theorem1Constants& constants) {
  if (originals.size() != synth_pairs.size()) {
    throw ShapeError("theorem1_margin_check: originals and synthetic pairs "
                     "must be aligned");
  }
  if (originals.empty()) {
    throw DomainError("theorem1_margin_check: empty input");
  }
  if (constants.l_r < 0.0 || constants.l_g < 0.0 || constants.alpha <= 0.0 ||
      constants.alpha > 1.0) {
    throw DomainError("theorem1_margin_check: invalid constants");
  }
  const double t_delta =
      sigma_noise > 0.0 ? compute_t_delta(sigma_noise, d_vae, delta) : 0.0;
  const double slack =
      2.0 * constants.l_r *
      std::pow(constants.l_g * t_delta + constants.eps_rec_norm, constants.alpha);

  std::size_t violations = 0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const double orig_margin = reward_score(reference, originals[i].e_plus) -
                               reward_score(reference, originals[i].e_minus);
    const double synth_margin = reward_score(reference, synth_pairs[i].e_plus) -
                                reward_score(reference, synth_pairs[i].e_minus);
    if (synth_margin < orig_margin - slack) {
      ++violations;
    }
  }
  return static_cast<double>(violations) / static_cast<double>(originals.size());
}

}  // namespace lens
