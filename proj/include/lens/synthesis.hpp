#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lens/dataset.hpp"
#include "lens/rng.hpp"
#include "lens/vae.hpp"

namespace lens {

enum class SynthMethod : std::uint8_t {
  lens,                 // VAE latent perturbation (default)
  direct_perturbation,  // noise added directly in embedding space
  gaussian_sampling,    // iid draws from a fitted diagonal Gaussian per sign
};

std::string to_string(SynthMethod m);
SynthMethod synth_method_from_string(const std::string& s);

struct SynthesisConfig {
  double sigma_noise_sq = 0.01;
  int candidates_per_embedding = 8;  // j
  int top_k = 0;                     // 0 = derived from k_aug
  int k_aug = 4;                     // target dataset multiplier
  std::uint64_t seed = 0;
  SynthMethod method = SynthMethod::lens;

  void validate() const;
  // Smallest top_k such that the per-prompt cross product (1 + top_k)^2 can
  // supply k_aug pairs; explicit top_k is validated against j.
  int resolved_top_k() const;
};

struct SyntheticEmbedding {
  std::int64_t source_prompt_id = 0;
  Sign sign = Sign::plus;
  std::vector<double> vec;
  double latent_log_density = 0.0;
};

// Log-density of x under the diagonal Gaussian q.
double diag_gaussian_log_density(const DiagonalGaussian& q,
                                 std::span<const double> x);

// Indices of the k highest-density latents under q, in decreasing density
// order (ties broken by candidate index).
std::vector<std::size_t> select_top_k(const DiagonalGaussian& q,
                                      std::span<const std::vector<double>> latents,
                                      int k);

// Eq.-(7)-style synthesis for one embedding: sample z from the posterior,
// draw j noisy latents z + eta, keep the top_k by posterior density, decode.
std::vector<SyntheticEmbedding> perturb_and_decode(const VaeParams& params,
                                                   std::span<const double> e,
                                                   Sign sign,
                                                   std::int64_t prompt_id,
                                                   const SynthesisConfig& cfg,
                                                   Rng& rng);

// Synthetic pools for a whole dataset; per-prompt rng streams derived from
// cfg.seed so output does not depend on scheduling.
struct SynthPools {
  std::vector<SyntheticEmbedding> plus;
  std::vector<SyntheticEmbedding> minus;
};
SynthPools synthesize_pools(const VaeParams& params,
                            const PairDataset& originals,
                            const SynthesisConfig& cfg);

// Compositional pairing: per prompt the candidate pairs are
// ({e+} u synth+) x ({e-} u synth-); the original pair is always included
// once and the remainder is sampled without replacement until each prompt
// contributes k_aug pairs.
PairDataset build_augmented_set(const PairDataset& originals,
                                std::span<const SyntheticEmbedding> synth_plus,
                                std::span<const SyntheticEmbedding> synth_minus,
                                int k_aug, Rng& rng);

// Table-1 baselines.
std::vector<double> baseline_direct_perturbation(std::span<const double> e,
                                                 double sigma_sq, Rng& rng);

struct GaussianFit {
  std::vector<double> mean;
  std::vector<double> var;  // floored at 1e-8
};
GaussianFit fit_sign_gaussian(std::span<const PreferencePair> pairs, Sign sign);
std::vector<double> baseline_gaussian_sampling(const GaussianFit& fit, Rng& rng);

}  // namespace lens
