#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lens/dataset.hpp"
#include "lens/matrix.hpp"
#include "lens/rng.hpp"

namespace lens {

struct RewardLinear {
  Matrix w;  // out x in
  Matrix b;  // 1 x out
};

// Embedding reward model: linear(dim -> hidden) + ReLU + linear(hidden -> 1).
struct RewardHead {
  int dim = 0;
  int hidden = 256;
  RewardLinear l1;
  RewardLinear l2;

  static RewardHead init(int dim, int hidden, Rng& rng);
  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  std::vector<Matrix*> tensors();
};

double reward_score(const RewardHead& head, std::span<const double> e);

// Bradley-Terry loss -ln sigmoid(r(e+) - r(e-)) via the stable softplus form.
// Gradients accumulate into *grads when provided.
double bt_loss(const RewardHead& head, std::span<const double> e_plus,
               std::span<const double> e_minus, RewardHead* grads = nullptr);

// Mean BT loss over a batch. Block-parallel with fixed reduction order.
double batch_bt_loss(const RewardHead& head,
                     std::span<const PreferencePair> pairs,
                     RewardHead* grads = nullptr);
// Naive linear-accumulation reference, kept for testing the parallel kernel.
double batch_bt_loss_serial(const RewardHead& head,
                            std::span<const PreferencePair> pairs,
                            RewardHead* grads = nullptr);

struct RewardTrainConfig {
  double lr = 1e-4;
  int max_epochs = 20;
  int patience = 5;
  int batch = 128;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  int hidden = 256;

  void validate() const;
};

struct RewardTrainResult {
  RewardHead head;  // best-validation checkpoint
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = 0;
  int epochs_run = 0;
};

// Seeded train/validation split, minibatch Adam, early stop when validation
// BT loss has not improved for `patience` epochs.
RewardTrainResult train_reward(std::span<const PreferencePair> pairs,
                               const RewardTrainConfig& cfg);

// Fraction of pairs with positive margin.
double pairwise_accuracy(const RewardHead& head,
                         std::span<const PreferencePair> pairs);

// zeta: mean BT loss of `head` on test_pairs minus that of `reference` (the
// proxy for the best possible reward function).
double estimation_error(const RewardHead& head,
                        std::span<const PreferencePair> test_pairs,
                        const RewardHead& reference);

void save_reward(const RewardHead& head, const std::string& path_stem);
RewardHead load_reward(const std::string& path_stem);

}  // namespace lens
