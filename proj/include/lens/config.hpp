#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lens/benchgen.hpp"
#include "lens/reward.hpp"
#include "lens/synthesis.hpp"
#include "lens/vae.hpp"

namespace lens {

struct DataConfig {
  SyntheticBenchConfig bench;
  int gold_hidden = 32;
  std::string ingest_train;  // optional JSONL path; replaces synthetic train
};

struct HeadRef {
  std::string name;
  std::string path;  // stem of a saved reward head
};

struct EvalConfig {
  int n_bon = 16;
  double delta = 0.05;
  std::vector<double> sweep_ns = {100, 250, 500, 1000, 2500, 5000};
  int zeta_eval_pairs = 5000;
  int proxy_pairs = 20000;
  int seeds = 3;
  std::vector<HeadRef> heads;  // extra heads for eval-bon comparisons
  // Test hook for verify-theory: when nonempty, skip the VAE sweep and fit p
  // on these (N, eps_rec) points directly.
  std::vector<std::pair<double, double>> injected_eps_rec;

  void validate() const;
};

// One declarative document driving every subcommand. Defaults match the
// recommended operating point (beta 1.0, gamma 0.1, sigma^2 0.01, VAE
// lr 1e-4 / 100 epochs / batch 128, reward lr 1e-4 / 20 epochs / patience 5,
// n = 16).
struct RunConfig {
  std::uint64_t seed = 42;
  DataConfig data;
  VaeTrainConfig vae;
  SynthesisConfig synthesis;
  RewardTrainConfig reward;
  EvalConfig eval;
  std::string output_dir = "out";
  int jobs = 1;
  // Which pairs train-rm consumes: auto (augmented when present), original,
  // or augmented.
  std::string rm_dataset = "auto";

  void validate() const;
};

RunConfig default_config();
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& cfg);

}  // namespace lens
