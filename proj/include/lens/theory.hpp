#pragma once

#include <span>
#include <vector>

#include "lens/dataset.hpp"
#include "lens/reward.hpp"
#include "lens/rng.hpp"
#include "lens/vae.hpp"

namespace lens {

// Decay exponent of the reconstruction error: p = -slope of the log-log fit
// of eps_rec against N.
double estimate_p(std::span<const double> ns, std::span<const double> eps_rec);

// Least-squares scalar fit of zeta(N) ~ C1 * sqrt((d + ln(1/delta)) / N),
// over the points with positive zeta.
double estimate_C1(std::span<const double> ns, std::span<const double> zetas,
                   int d, double delta);

// Subtracts the statistical term from zeta_aug and fits
// bias(N) = ((k-1)/k) * B0 * N^-p. If every bias estimate is negative the fit
// runs on values clamped to zero (and the caller is warned via return flag).
struct B0Fit {
  double b0 = 0.0;
  bool clamped = false;
};
B0Fit estimate_B0(std::span<const double> ns, std::span<const double> zeta_aug,
                  double c1, double p, int d, double delta, int k);

// Threshold sample size N0 = (C1 sqrt(d + ln(1/delta)) / B0)^(1/(1/2 - p)).
double compute_N0(double c1, double b0, double p, int d, double delta);

// High-probability latent-noise norm bound:
// t_delta = sigma * sqrt(d_vae + 2 sqrt(d_vae ln(4/delta)) + 2 ln(4/delta)).
double compute_t_delta(double sigma_noise, int d_vae, double delta);

struct W1Check {
  double coupling_bound = 0.0;  // mean |e_hat_i - e_i| (identity coupling)
  double exact_w1 = 0.0;        // Hungarian optimal transport / count
};

// Both sides of the W1 coupling inequality between equal-size empirical
// measures. Exact computation requires count <= 512.
W1Check w1_checks(std::span<const std::vector<double>> originals,
                  std::span<const std::vector<double>> reconstructions);

struct Theorem1Constants {
  double l_g = 0.0;           // decoder Lipschitz estimate
  double l_r = 0.0;           // reward Hoelder constant estimate
  double alpha = 1.0;         // Hoelder exponent
  double eps_rec_norm = 0.0;  // max |e_hat - e| over the data (norm bound)
};

// Empirical max-ratio estimates of the regularity constants over sampled
// input pairs.
Theorem1Constants estimate_theorem1_constants(const VaeParams& params,
                                              const RewardHead& reference,
                                              std::span<const PreferencePair> pairs,
                                              Rng& rng);

// Fraction of synthetic pairs violating
// r(e_hat+) - r(e_hat-) >= r(e+) - r(e-) - 2 L_r (L_g t_delta + eps_rec)^alpha.
double theorem1_margin_check(const RewardHead& reference,
                             std::span<const PreferencePair> originals,
                             std::span<const PreferencePair> synth_pairs,
                             double sigma_noise, int d_vae, double delta,
                             const Theorem1Constants& constants);

}  // namespace lens
