#include "lens/benchgen.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "lens/errors.hpp"

namespace lens {

namespace {

constexpr std::uint64_t kTestStreamBase = 0x7465737400000000ULL;  // "test"

std::vector<double> gaussian_point(Rng& rng, int dim, double scale) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal() * scale;
  return v;
}

std::vector<double> candidate_around(Rng& rng, std::span<const double> center,
                                     double scale) {
  std::vector<double> v(center.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = center[i] + rng.normal() * scale;
  }
  return v;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Orders (a, b) into (preferred, rejected) using the gold reward, optionally
// with Bradley-Terry label noise. Returns false on an exact tie.
bool label_pair(const GoldRewardSpec& gold, double temperature, Rng& rng,
                std::vector<double>& a, std::vector<double>& b,
                PreferencePair& out) {
  const double ra = gold_reward(gold, a);
  const double rb = gold_reward(gold, b);
  if (ra == rb) {
    return false;
  }
  bool a_preferred;
  if (temperature > 0.0) {
    a_preferred = rng.uniform() < sigmoid((ra - rb) / temperature);
  } else {
    a_preferred = ra > rb;
  }
  if (a_preferred) {
    out.e_plus = std::move(a);
    out.e_minus = std::move(b);
  } else {
    out.e_plus = std::move(b);
    out.e_minus = std::move(a);
  }
  return true;
}

}  // namespace

void SyntheticBenchConfig::validate() const {
  if (dim < 1) throw ConfigError("benchmark config: dim must be >= 1");
  if (num_prompts < 1) throw ConfigError("benchmark config: num_prompts must be >= 1");
  if (num_test_prompts < 0) {
    throw ConfigError("benchmark config: num_test_prompts must be >= 0");
  }
  if (candidates_per_prompt < 2) {
    throw ConfigError("benchmark config: candidates_per_prompt must be >= 2");
  }
  if (!(cluster_scale > 0.0)) {
    throw ConfigError("benchmark config: cluster_scale must be > 0");
  }
  if (!(response_scale > 0.0)) {
    throw ConfigError("benchmark config: response_scale must be > 0");
  }
  if (label_temperature < 0.0) {
    throw ConfigError("benchmark config: label_temperature must be >= 0");
  }
}

Benchmark generate_benchmark(const SyntheticBenchConfig& cfg,
                             const GoldRewardSpec& gold, Rng& rng) {
  cfg.validate();
  if (gold.dim != cfg.dim) {
    throw ConfigError("benchmark config: dim " + std::to_string(cfg.dim) +
                      " does not match gold spec dim " + std::to_string(gold.dim));
  }

  // The caller's rng only anchors the seed; every prompt draws from its own
  // derived stream so output is independent of generation order.
  const std::uint64_t base_seed = rng.next_u64();

  Benchmark bench;
  bench.train.dim = cfg.dim;
  bench.train.split = "train";
  bench.train.seed = base_seed;
  bench.train.gold_digest = gold.digest();
  bench.train.pairs.reserve(cfg.num_prompts);
  for (int i = 0; i < cfg.num_prompts; ++i) {
    Rng prompt_rng = Rng::derive(base_seed, static_cast<std::uint64_t>(i));
    const auto center = gaussian_point(prompt_rng, cfg.dim, cfg.cluster_scale);
    PreferencePair pair;
    pair.prompt_id = i;
    while (true) {
      auto a = candidate_around(prompt_rng, center, cfg.response_scale);
      auto b = candidate_around(prompt_rng, center, cfg.response_scale);
      if (label_pair(gold, cfg.label_temperature, prompt_rng, a, b, pair)) {
        break;
      }
    }
    bench.train.pairs.push_back(std::move(pair));
  }

  bench.test.dim = cfg.dim;
  bench.test.split = "test";
  bench.test.seed = base_seed;
  bench.test.gold_digest = gold.digest();
  bench.test.prompts.reserve(cfg.num_test_prompts);
  for (int i = 0; i < cfg.num_test_prompts; ++i) {
    Rng prompt_rng = Rng::derive(base_seed, kTestStreamBase + static_cast<std::uint64_t>(i));
    const auto center = gaussian_point(prompt_rng, cfg.dim, cfg.cluster_scale);
    CandidateSet set;
    set.prompt_id = i;
    set.embeddings.reserve(cfg.candidates_per_prompt);
    for (int c = 0; c < cfg.candidates_per_prompt; ++c) {
      set.embeddings.push_back(
          candidate_around(prompt_rng, center, cfg.response_scale));
    }
    bench.test.prompts.push_back(std::move(set));
  }
  return bench;
}

PairDataset pairs_from_candidates(const CandidateDataset& candidates,
                                  const GoldRewardSpec& gold, Rng& rng,
                                  int pairs_per_prompt,
                                  double label_temperature) {
  if (pairs_per_prompt < 1) {
    throw ConfigError("pairs_from_candidates: pairs_per_prompt must be >= 1");
  }
  PairDataset ds;
  ds.dim = candidates.dim;
  ds.split = "eval";
  ds.seed = candidates.seed;
  ds.gold_digest = gold.digest();
  ds.pairs.reserve(candidates.prompts.size() * pairs_per_prompt);
  const std::uint64_t base_seed = rng.next_u64();
  for (const auto& set : candidates.prompts) {
    if (set.embeddings.size() < 2) {
      throw DomainError("pairs_from_candidates: prompt " +
                        std::to_string(set.prompt_id) +
                        " has fewer than 2 candidates");
    }
    Rng prompt_rng =
        Rng::derive(base_seed, static_cast<std::uint64_t>(set.prompt_id));
    for (int k = 0; k < pairs_per_prompt; ++k) {
      PreferencePair pair;
      pair.prompt_id = set.prompt_id;
      while (true) {
        const std::size_t ia = prompt_rng.below(set.embeddings.size());
        std::size_t ib = prompt_rng.below(set.embeddings.size());
        if (ia == ib) continue;
        auto a = set.embeddings[ia];
        auto b = set.embeddings[ib];
        if (label_pair(gold, label_temperature, prompt_rng, a, b, pair)) {
          break;
        }
      }
      ds.pairs.push_back(std::move(pair));
    }
  }
  return ds;
}

}  // namespace lens
