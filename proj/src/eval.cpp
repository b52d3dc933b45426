#include "lens/eval.hpp"

#include <limits>
#include <string>

#include "lens/errors.hpp"
#include "lens/rng.hpp"

namespace lens {

BonResult best_of_n(const RewardHead& head, const CandidateDataset& test,
                    const GoldRewardSpec& gold, std::uint64_t seed) {
  if (test.prompts.empty()) {
    throw DomainError("best_of_n: empty test set");
  }
  BonResult result;
  result.n = test.prompts.empty()
                 ? 0
                 : static_cast<int>(test.prompts.front().embeddings.size());
  double sum_selected = 0.0, sum_random = 0.0, sum_oracle = 0.0;
  for (const auto& prompt : test.prompts) {
    if (prompt.embeddings.size() < 2) {
      throw DomainError("best_of_n: prompt " + std::to_string(prompt.prompt_id) +
                        " has fewer than 2 candidates");
    }
    std::size_t best_by_head = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    double best_gold = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < prompt.embeddings.size(); ++c) {
      const double s = reward_score(head, prompt.embeddings[c]);
      if (s > best_score) {
        best_score = s;
        best_by_head = c;
      }
      const double g = gold_reward(gold, prompt.embeddings[c]);
      if (g > best_gold) {
        best_gold = g;
      }
    }
    sum_selected += gold_reward(gold, prompt.embeddings[best_by_head]);
    sum_oracle += best_gold;
    Rng pick_rng = Rng::derive(seed, static_cast<std::uint64_t>(prompt.prompt_id));
    const std::size_t r = pick_rng.below(prompt.embeddings.size());
    sum_random += gold_reward(gold, prompt.embeddings[r]);
  }
  const double inv = 1.0 / static_cast<double>(test.prompts.size());
  result.selected = sum_selected * inv;
  result.random_pick = sum_random * inv;
  result.oracle = sum_oracle * inv;
  return result;
}

OrderingStats ordering_preservation(const GoldRewardSpec& gold,
                                    std::span<const PreferencePair> originals,
                                    std::span<const PreferencePair> synth_pairs) {
  OrderingStats stats;
  if (!originals.empty()) {
    double acc = 0.0;
    for (const auto& p : originals) {
      acc += gold_reward(gold, p.e_plus) - gold_reward(gold, p.e_minus);
    }
    stats.gap_original = acc / static_cast<double>(originals.size());
  }
  if (!synth_pairs.empty()) {
    double acc = 0.0;
    std::size_t preserved = 0;
    for (const auto& p : synth_pairs) {
      const double gap = gold_reward(gold, p.e_plus) - gold_reward(gold, p.e_minus);
      acc += gap;
      if (gap > 0.0) ++preserved;
    }
    stats.gap_synthetic = acc / static_cast<double>(synth_pairs.size());
    stats.fraction =
        static_cast<double>(preserved) / static_cast<double>(synth_pairs.size());
  }
  return stats;
}

}  // namespace lens
