#include "lens/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "lens/errors.hpp"

namespace lens {

namespace {

constexpr std::uint64_t kPlusStream = 0x73796e2bULL;   // "syn+"
constexpr std::uint64_t kMinusStream = 0x73796e2dULL;  // "syn-"

}  // namespace

std::string to_string(SynthMethod m) {
  switch (m) {
    case SynthMethod::lens: return "lens";
    case SynthMethod::direct_perturbation: return "direct_perturbation";
    case SynthMethod::gaussian_sampling: return "gaussian_sampling";
  }
  return "lens";
}

SynthMethod synth_method_from_string(const std::string& s) {
  if (s == "lens") return SynthMethod::lens;
  if (s == "direct_perturbation") return SynthMethod::direct_perturbation;
  if (s == "gaussian_sampling") return SynthMethod::gaussian_sampling;
  throw ConfigError("unknown synthesis method '" + s + "'");
}

void SynthesisConfig::validate() const {
  if (!(sigma_noise_sq > 0.0)) {
    throw ConfigError("synthesis config: sigma_noise_sq must be > 0");
  }
  if (candidates_per_embedding < 1) {
    throw ConfigError("synthesis config: candidates_per_embedding must be >= 1");
  }
  if (k_aug < 1) {
    throw ConfigError("synthesis config: k_aug must be >= 1");
  }
  if (top_k < 0) {
    throw ConfigError("synthesis config: top_k must be >= 0 (0 = auto)");
  }
  if (top_k > candidates_per_embedding) {
    throw ConfigError("synthesis config: top_k " + std::to_string(top_k) +
                      " exceeds candidates_per_embedding " +
                      std::to_string(candidates_per_embedding));
  }
}

int SynthesisConfig::resolved_top_k() const {
  validate();
  if (top_k > 0) {
    return top_k;
  }
  int t = 1;
  while ((1 + t) * (1 + t) < k_aug) {
    ++t;
  }
  if (t > candidates_per_embedding) {
    throw ConfigError("synthesis config: k_aug " + std::to_string(k_aug) +
                      " needs top_k " + std::to_string(t) +
                      " but only " + std::to_string(candidates_per_embedding) +
                      " candidates per embedding are drawn");
  }
  return t;
}

double diag_gaussian_log_density(const DiagonalGaussian& q,
                                 std::span<const double> x) {
  if (x.size() != q.mu.size()) {
    throw ShapeError("diag_gaussian_log_density: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double var = std::exp(q.log_var[i]);
    const double d = x[i] - q.mu[i];
    acc += q.log_var[i] + d * d / var + std::log(2.0 * std::numbers::pi);
  }
  return -0.5 * acc;
}

std::vector<std::size_t> select_top_k(const DiagonalGaussian& q,
                                      std::span<const std::vector<double>> latents,
                                      int k) {
  if (k < 1 || static_cast<std::size_t>(k) > latents.size()) {
    throw ConfigError("select_top_k: k must be in [1, candidate count]");
  }
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(latents.size());
  for (std::size_t i = 0; i < latents.size(); ++i) {
    scored.emplace_back(diag_gaussian_log_density(q, latents[i]), i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> keep(k);
  for (int i = 0; i < k; ++i) {
    keep[i] = scored[i].second;
  }
  return keep;
}

std::vector<SyntheticEmbedding> perturb_and_decode(const VaeParams& params,
                                                   std::span<const double> e,
                                                   Sign sign,
                                                   std::int64_t prompt_id,
                                                   const SynthesisConfig& cfg,
                                                   Rng& rng) {
  const int k = cfg.resolved_top_k();
  const int j = cfg.candidates_per_embedding;
  const double noise_sd = std::sqrt(cfg.sigma_noise_sq);

  const DiagonalGaussian q = encode(params, e, sign);
  const auto z = reparameterize(q, rng);

  std::vector<std::vector<double>> latents(j);
  for (int c = 0; c < j; ++c) {
    latents[c].resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      latents[c][i] = z[i] + noise_sd * rng.normal();
    }
  }
  const auto keep = select_top_k(q, latents, k);

  std::vector<SyntheticEmbedding> out;
  out.reserve(keep.size());
  for (std::size_t idx : keep) {
    SyntheticEmbedding s;
    s.source_prompt_id = prompt_id;
    s.sign = sign;
    s.latent_log_density = diag_gaussian_log_density(q, latents[idx]);
    s.vec = decode(params, latents[idx], sign);
    ensure_finite(s.vec, "synthetic embedding");
    out.push_back(std::move(s));
  }
  return out;
}

SynthPools synthesize_pools(const VaeParams& params, const PairDataset& originals,
                            const SynthesisConfig& cfg) {
  cfg.validate();
  const std::size_t n = originals.pairs.size();
  SynthPools pools;
  const int k = cfg.resolved_top_k();
  pools.plus.resize(n * k);
  pools.minus.resize(n * k);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto& pair = originals.pairs[i];
    const auto pid = static_cast<std::uint64_t>(pair.prompt_id);
    Rng rng_p = Rng::derive(cfg.seed ^ kPlusStream, pid);
    Rng rng_m = Rng::derive(cfg.seed ^ kMinusStream, pid);
    auto sp = perturb_and_decode(params, pair.e_plus, Sign::plus,
                                 pair.prompt_id, cfg, rng_p);
    auto sm = perturb_and_decode(params, pair.e_minus, Sign::minus,
                                 pair.prompt_id, cfg, rng_m);
    for (int c = 0; c < k; ++c) {
      pools.plus[static_cast<std::size_t>(i) * k + c] = std::move(sp[c]);
      pools.minus[static_cast<std::size_t>(i) * k + c] = std::move(sm[c]);
    }
  }
  return pools;
}

PairDataset build_augmented_set(const PairDataset& originals,
                                std::span<const SyntheticEmbedding> synth_plus,
                                std::span<const SyntheticEmbedding> synth_minus,
                                int k_aug, Rng& rng) {
  if (k_aug < 1) {
    throw ConfigError("build_augmented_set: k_aug must be >= 1");
  }
  std::map<std::int64_t, std::vector<const SyntheticEmbedding*>> plus_by_prompt;
  std::map<std::int64_t, std::vector<const SyntheticEmbedding*>> minus_by_prompt;
  for (const auto& s : synth_plus) {
    if (s.sign != Sign::plus) {
      throw DomainError("build_augmented_set: negative embedding in plus pool");
    }
    plus_by_prompt[s.source_prompt_id].push_back(&s);
  }
  for (const auto& s : synth_minus) {
    if (s.sign != Sign::minus) {
      throw DomainError("build_augmented_set: positive embedding in minus pool");
    }
    minus_by_prompt[s.source_prompt_id].push_back(&s);
  }

  PairDataset out;
  out.dim = originals.dim;
  out.split = originals.split;
  out.seed = originals.seed;
  out.gold_digest = originals.gold_digest;
  out.pairs.reserve(originals.pairs.size() * k_aug);
  out.prov_plus.reserve(originals.pairs.size() * k_aug);
  out.prov_minus.reserve(originals.pairs.size() * k_aug);

  const std::uint64_t base_seed = rng.next_u64();
  for (const auto& orig : originals.pairs) {
    const auto* sp = &plus_by_prompt[orig.prompt_id];
    const auto* sm = &minus_by_prompt[orig.prompt_id];
    // Pool index 0 is the original embedding on both sides.
    const std::size_t np = 1 + sp->size();
    const std::size_t nm = 1 + sm->size();
    const std::size_t universe = np * nm;
    if (universe < static_cast<std::size_t>(k_aug)) {
      int need = 1;
      while ((1 + need) * (1 + need) < k_aug) ++need;
      throw ConfigError(
          "build_augmented_set: prompt " + std::to_string(orig.prompt_id) +
          " has only " + std::to_string(universe) + " candidate pairs for k_aug " +
          std::to_string(k_aug) + "; need at least " + std::to_string(need) +
          " synthetic embeddings per sign");
    }

    auto emit = [&](std::size_t ip, std::size_t im) {
      PreferencePair p;
      p.prompt_id = orig.prompt_id;
      p.e_plus = ip == 0 ? orig.e_plus : (*sp)[ip - 1]->vec;
      p.e_minus = im == 0 ? orig.e_minus : (*sm)[im - 1]->vec;
      out.pairs.push_back(std::move(p));
      out.prov_plus.push_back(ip == 0 ? Provenance::original
                                      : Provenance::synthetic);
      out.prov_minus.push_back(im == 0 ? Provenance::original
                                       : Provenance::synthetic);
    };

    emit(0, 0);  // original pair, exactly once
    if (k_aug > 1) {
      // Sample the remaining cross-product cells without replacement.
      std::vector<std::size_t> cells(universe - 1);
      for (std::size_t c = 1; c < universe; ++c) cells[c - 1] = c;
      Rng prompt_rng =
          Rng::derive(base_seed, static_cast<std::uint64_t>(orig.prompt_id));
      for (int t = 0; t < k_aug - 1; ++t) {
        const std::size_t pick =
            t + prompt_rng.below(cells.size() - static_cast<std::size_t>(t));
        std::swap(cells[t], cells[pick]);
        emit(cells[t] / nm, cells[t] % nm);
      }
    }
  }
  return out;
}

std::vector<double> baseline_direct_perturbation(std::span<const double> e,
                                                 double sigma_sq, Rng& rng) {
  if (sigma_sq < 0.0) {
    throw DomainError("baseline_direct_perturbation: sigma_sq must be >= 0");
  }
  const double sd = std::sqrt(sigma_sq);
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    out[i] = e[i] + sd * rng.normal();
  }
  return out;
}

GaussianFit fit_sign_gaussian(std::span<const PreferencePair> pairs, Sign sign) {
  if (pairs.size() < 2) {
    throw DomainError("fit_sign_gaussian: need at least 2 embeddings");
  }
  const std::size_t dim =
      sign == Sign::plus ? pairs.front().e_plus.size() : pairs.front().e_minus.size();
  GaussianFit fit;
  fit.mean.assign(dim, 0.0);
  fit.var.assign(dim, 0.0);
  for (const auto& p : pairs) {
    const auto& e = sign == Sign::plus ? p.e_plus : p.e_minus;
    for (std::size_t i = 0; i < dim; ++i) fit.mean[i] += e[i];
  }
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (double& m : fit.mean) m *= inv_n;
  for (const auto& p : pairs) {
    const auto& e = sign == Sign::plus ? p.e_plus : p.e_minus;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = e[i] - fit.mean[i];
      fit.var[i] += d * d;
    }
  }
  for (double& v : fit.var) {
    v = std::max(v * inv_n, 1e-8);
  }
  return fit;
}

std::vector<double> baseline_gaussian_sampling(const GaussianFit& fit, Rng& rng) {
  std::vector<double> out(fit.mean.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fit.mean[i] + std::sqrt(fit.var[i]) * rng.normal();
  }
  return out;
}

}  // namespace lens
