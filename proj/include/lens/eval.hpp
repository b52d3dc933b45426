#pragma once

#include <cstdint>
#include <span>

#include "lens/dataset.hpp"
#include "lens/gold.hpp"
#include "lens/reward.hpp"

namespace lens {

struct BonResult {
  double selected = 0.0;     // mean gold reward of the head's argmax picks
  double random_pick = 0.0;  // seeded random-candidate baseline
  double oracle = 0.0;       // mean gold reward of gold-argmax picks
  int n = 0;                 // candidates per prompt
};

// Best-of-N: the head picks the top candidate per prompt; all picks are
// scored by the gold reward.
BonResult best_of_n(const RewardHead& head, const CandidateDataset& test,
                    const GoldRewardSpec& gold, std::uint64_t seed);

struct OrderingStats {
  double fraction = 0.0;       // synthetic pairs with gold(e+) > gold(e-)
  double gap_original = 0.0;   // mean gold gap of original pairs
  double gap_synthetic = 0.0;  // mean gold gap of synthetic pairs
};

// Gold-reward ordering preservation of synthesized pairs relative to the
// originals they were derived from.
OrderingStats ordering_preservation(const GoldRewardSpec& gold,
                                    std::span<const PreferencePair> originals,
                                    std::span<const PreferencePair> synth_pairs);

}  // namespace lens
