#pragma once

#include <cstdint>

#include "lens/dataset.hpp"
#include "lens/gold.hpp"
#include "lens/rng.hpp"

namespace lens {

// Desk-scale surrogate for LLM preference embeddings: clustered Gaussians
// labeled by the frozen gold reward.
struct SyntheticBenchConfig {
  int dim = 64;
  int num_prompts = 1000;
  int num_test_prompts = 500;
  int candidates_per_prompt = 16;
  double cluster_scale = 1.0;    // prompt-center spread
  double response_scale = 0.5;   // within-prompt spread
  double label_temperature = 0.0;  // 0 = deterministic gold labels

  void validate() const;
};

struct Benchmark {
  PairDataset train;
  CandidateDataset test;
};

// Per prompt draws a center c ~ N(0, cluster_scale^2 I); train pairs are two
// candidates c + N(0, response_scale^2 I) labeled by the gold reward (with
// Bradley-Terry label noise when label_temperature > 0). Test prompts keep all
// candidates_per_prompt candidates for Best-of-N.
Benchmark generate_benchmark(const SyntheticBenchConfig& cfg,
                             const GoldRewardSpec& gold, Rng& rng);

// Preference pairs drawn from existing candidate sets, labeled by gold; used
// for held-out estimation-error evaluation.
PairDataset pairs_from_candidates(const CandidateDataset& candidates,
                                  const GoldRewardSpec& gold, Rng& rng,
                                  int pairs_per_prompt,
                                  double label_temperature = 0.0);

}  // namespace lens
