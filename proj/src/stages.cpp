#include "lens/stages.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lens/benchgen.hpp"
#include "lens/dataset.hpp"
#include "lens/errors.hpp"
#include "lens/eval.hpp"
#include "lens/gold.hpp"
#include "lens/log.hpp"
#include "lens/numeric.hpp"
#include "lens/theory.hpp"

namespace lens {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kDataStream = 0x64617461ULL;    // "data"
constexpr std::uint64_t kZetaStream = 0x7a657461ULL;    // "zeta"
constexpr std::uint64_t kHeldStream = 0x68656c64ULL;    // "held"
constexpr std::uint64_t kProxyStream = 0x70726f78ULL;   // "prox"
constexpr std::uint64_t kSweepStream = 0x73776565ULL;   // "swee"
constexpr std::uint64_t kAugStream = 0x61756700ULL;     // "aug"
constexpr std::uint64_t kDirectStream = 0x64697263ULL;  // "dirc"
constexpr std::uint64_t kGaussStream = 0x67617573ULL;   // "gaus"

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

void ensure_output_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) {
    throw IoError("cannot create output dir " + cfg.output_dir + ": " +
                  ec.message());
  }
}

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void record_timing(const RunConfig& cfg, const std::string& stage, double secs) {
  LENS_LOG_INFO("%s finished in %.2fs", stage.c_str(), secs);
  nlohmann::json t;
  const std::string path = out_path(cfg, "timings.json");
  {
    std::ifstream in(path);
    if (in) {
      try {
        in >> t;
      } catch (const nlohmann::json::exception&) {
        t = nlohmann::json::object();
      }
    }
  }
  t[stage] = secs;
  std::ofstream out(path);
  if (out) out << t.dump(2) << "\n";
}

class StageTimer {
 public:
  StageTimer(const RunConfig& cfg, std::string stage)
      : cfg_(cfg), stage_(std::move(stage)), start_(Clock::now()) {}
  ~StageTimer() {
    const double secs =
        std::chrono::duration<double>(Clock::now() - start_).count();
    record_timing(cfg_, stage_, secs);
  }

 private:
  const RunConfig& cfg_;
  std::string stage_;
  Clock::time_point start_;
};

void check_finite_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number_float()) {
    if (!std::isfinite(j.get<double>())) {
      throw NumericError("report value at " + where + " is not finite");
    }
  } else if (j.is_object()) {
    for (const auto& [k, v] : j.items()) check_finite_json(v, where + "." + k);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      check_finite_json(j[i], where + "[" + std::to_string(i) + "]");
    }
  }
}

const std::vector<std::string>& required_fields(const std::string& kind) {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"gen_data_report", {"train", "test", "gold_digest"}},
      {"vae_report", {"dim", "d_vae", "sharing", "epoch_loss", "epochs"}},
      {"synth_report", {"method", "k_aug", "top_k", "pairs_out"}},
      {"rm_report", {"dataset", "train_loss", "val_loss", "best_epoch"}},
      {"bon_report", {"heads", "n"}},
      {"theory_report",
       {"C1", "p", "B0", "N0", "t_delta", "eps_rec_curve",
        "ordering_preservation", "gap_original", "gap_synthetic",
        "w1_coupling_bound", "w1_exact"}},
      {"ablate_report", {"axis", "rows"}},
      {"summary_report", {"stages"}},
  };
  const auto it = schema.find(kind);
  if (it == schema.end()) {
    throw ConfigError("unknown report kind '" + kind + "'");
  }
  return it->second;
}

}  // namespace

std::string write_report(const nlohmann::json& report, const std::string& path) {
  if (!report.contains("kind")) {
    throw ConfigError("report missing 'kind'");
  }
  for (const auto& field : required_fields(report["kind"].get<std::string>())) {
    if (!report.contains(field)) {
      throw ConfigError("report " + report["kind"].get<std::string>() +
                        " missing required field '" + field + "'");
    }
  }
  check_finite_json(report, report["kind"].get<std::string>());
  const std::string bytes = report.dump(2) + "\n";
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write report " + path);
  }
  out << bytes;
  return bytes;
}

namespace {

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << header << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ",";
      out << fmt_double(row[i]);
    }
    out << "\n";
  }
}

struct BenchArtifacts {
  GoldRewardSpec gold;
  PairDataset train;
  CandidateDataset test;
};

GoldRewardSpec load_gold_for(const RunConfig& cfg) {
  return load_gold(out_path(cfg, "gold.json"));
}

BenchArtifacts load_bench(const RunConfig& cfg, bool need_test = true) {
  BenchArtifacts a{load_gold_for(cfg), read_dataset(out_path(cfg, "train")),
                   CandidateDataset{}};
  if (need_test) {
    a.test = read_candidates(out_path(cfg, "test"));
  }
  return a;
}

// Runs fn(i) for i in [0, n); jobs > 1 fans out over a worker pool. Results
// must be written to per-index slots so the merge is order-independent.
void parallel_jobs(std::size_t n, int jobs,
                   const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
#pragma omp parallel for num_threads(jobs) schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
}

PairDataset subsample(const PairDataset& ds, std::size_t n) {
  if (n > ds.pairs.size()) {
    throw ConfigError("requested subset of " + std::to_string(n) +
                      " pairs but dataset has " + std::to_string(ds.pairs.size()));
  }
  PairDataset out;
  out.dim = ds.dim;
  out.split = ds.split;
  out.seed = ds.seed;
  out.gold_digest = ds.gold_digest;
  out.pairs.assign(ds.pairs.begin(), ds.pairs.begin() + n);
  return out;
}

// Synthetic pools for the two latent baselines, shaped like the VAE pools so
// the pairing machinery is shared.
SynthPools baseline_pools(const PairDataset& train, const SynthesisConfig& cfg) {
  SynthPools pools;
  const int k = cfg.resolved_top_k();
  const std::size_t n = train.pairs.size();
  pools.plus.resize(n * k);
  pools.minus.resize(n * k);
  if (cfg.method == SynthMethod::direct_perturbation) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& pair = train.pairs[i];
      Rng rng = Rng::derive(cfg.seed ^ kDirectStream,
                            static_cast<std::uint64_t>(pair.prompt_id));
      for (int c = 0; c < k; ++c) {
        pools.plus[i * k + c] = {pair.prompt_id, Sign::plus,
                                 baseline_direct_perturbation(
                                     pair.e_plus, cfg.sigma_noise_sq, rng),
                                 0.0};
        pools.minus[i * k + c] = {pair.prompt_id, Sign::minus,
                                  baseline_direct_perturbation(
                                      pair.e_minus, cfg.sigma_noise_sq, rng),
                                  0.0};
      }
    }
  } else if (cfg.method == SynthMethod::gaussian_sampling) {
    const GaussianFit fit_p = fit_sign_gaussian(train.pairs, Sign::plus);
    const GaussianFit fit_m = fit_sign_gaussian(train.pairs, Sign::minus);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& pair = train.pairs[i];
      Rng rng = Rng::derive(cfg.seed ^ kGaussStream,
                            static_cast<std::uint64_t>(pair.prompt_id));
      for (int c = 0; c < k; ++c) {
        pools.plus[i * k + c] = {pair.prompt_id, Sign::plus,
                                 baseline_gaussian_sampling(fit_p, rng), 0.0};
        pools.minus[i * k + c] = {pair.prompt_id, Sign::minus,
                                  baseline_gaussian_sampling(fit_m, rng), 0.0};
      }
    }
  } else {
    throw ConfigError("baseline_pools: method must be a baseline");
  }
  return pools;
}

PairDataset make_augmented(const VaeParams* vae, const PairDataset& train,
                           const SynthesisConfig& scfg) {
  SynthPools pools;
  if (scfg.method == SynthMethod::lens) {
    if (vae == nullptr) {
      throw ConfigError("lens synthesis requires a trained VAE");
    }
    pools = synthesize_pools(*vae, train, scfg);
  } else {
    pools = baseline_pools(train, scfg);
  }
  Rng rng = Rng::derive(scfg.seed, kAugStream);
  PairDataset aug =
      build_augmented_set(train, pools.plus, pools.minus, scfg.k_aug, rng);
  aug.split = "train";
  return aug;
}

// Synthetic counterpart pairs (j-th plus with j-th minus per prompt) used by
// the ordering-preservation and Theorem-1 margin checks.
struct CounterpartPairs {
  std::vector<PreferencePair> originals;  // aligned with synth
  std::vector<PreferencePair> synth;
};

CounterpartPairs counterpart_pairs(const VaeParams& vae,
                                   const PairDataset& train,
                                   const SynthesisConfig& scfg) {
  SynthPools pools = synthesize_pools(vae, train, scfg);
  const int k = scfg.resolved_top_k();
  CounterpartPairs cp;
  cp.originals.reserve(train.pairs.size() * k);
  cp.synth.reserve(train.pairs.size() * k);
  for (std::size_t i = 0; i < train.pairs.size(); ++i) {
    for (int c = 0; c < k; ++c) {
      cp.originals.push_back(train.pairs[i]);
      PreferencePair s;
      s.prompt_id = train.pairs[i].prompt_id;
      s.e_plus = pools.plus[i * k + c].vec;
      s.e_minus = pools.minus[i * k + c].vec;
      cp.synth.push_back(std::move(s));
    }
  }
  return cp;
}

PairDataset eval_pairs_for(const RunConfig& cfg, const BenchArtifacts& bench,
                           std::uint64_t stream, int total_pairs) {
  if (bench.test.prompts.empty()) {
    throw ConfigError("no test prompts available to build evaluation pairs; "
                      "set data.num_test_prompts > 0");
  }
  const int per_prompt = std::max<int>(
      1, (total_pairs + static_cast<int>(bench.test.prompts.size()) - 1) /
             static_cast<int>(bench.test.prompts.size()));
  Rng rng = Rng::derive(cfg.seed, stream);
  PairDataset pairs = pairs_from_candidates(bench.test, bench.gold, rng,
                                            per_prompt,
                                            cfg.data.bench.label_temperature);
  if (static_cast<int>(pairs.pairs.size()) > total_pairs) {
    pairs.pairs.resize(total_pairs);
  }
  return pairs;
}

CandidateDataset truncated_test(const CandidateDataset& test, int n_bon) {
  CandidateDataset t = test;
  for (auto& prompt : t.prompts) {
    if (static_cast<int>(prompt.embeddings.size()) < n_bon) {
      throw ConfigError("eval.n_bon " + std::to_string(n_bon) +
                        " exceeds candidates per prompt " +
                        std::to_string(prompt.embeddings.size()));
    }
    prompt.embeddings.resize(n_bon);
  }
  return t;
}

nlohmann::json bon_to_json(const BonResult& r) {
  return {{"selected", r.selected},
          {"random_pick", r.random_pick},
          {"oracle", r.oracle},
          {"n", r.n}};
}

}  // namespace

nlohmann::json stage_gen_data(const RunConfig& cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  StageTimer timer(cfg, "gen-data");

  const GoldRewardSpec gold =
      GoldRewardSpec::create(cfg.seed, cfg.data.bench.dim, cfg.data.gold_hidden);
  save_gold(gold, out_path(cfg, "gold.json"));

  PairDataset train;
  CandidateDataset test;
  if (!cfg.data.ingest_train.empty()) {
    train = read_dataset(cfg.data.ingest_train);
    if (train.dim != cfg.data.bench.dim) {
      throw ConfigError("ingested dataset dim " + std::to_string(train.dim) +
                        " does not match data.dim " +
                        std::to_string(cfg.data.bench.dim));
    }
    train.split = "train";
    train.seed = cfg.seed;
    train.gold_digest = gold.digest();
    Rng rng = Rng::derive(cfg.seed, kDataStream);
    SyntheticBenchConfig test_cfg = cfg.data.bench;
    test_cfg.num_prompts = 1;  // only the test half is used
    Benchmark bench = generate_benchmark(test_cfg, gold, rng);
    test = std::move(bench.test);
  } else {
    Rng rng = Rng::derive(cfg.seed, kDataStream);
    Benchmark bench = generate_benchmark(cfg.data.bench, gold, rng);
    train = std::move(bench.train);
    test = std::move(bench.test);
  }

  write_dataset(train, out_path(cfg, "train"));
  if (!test.prompts.empty()) {
    write_candidates(test, out_path(cfg, "test"));
  }

  nlohmann::json report;
  report["kind"] = "gen_data_report";
  report["gold_digest"] = gold.digest();
  report["train"] = {{"pairs", train.pairs.size()},
                     {"dim", train.dim},
                     {"split", train.split}};
  report["test"] = {{"prompts", test.prompts.size()},
                    {"candidates_per_prompt",
                     test.prompts.empty() ? 0 : test.prompts[0].embeddings.size()},
                    {"dim", test.dim}};
  write_report(report, out_path(cfg, "gen_data_report.json"));
  return report;
}

nlohmann::json stage_train_vae(const RunConfig& cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  StageTimer timer(cfg, "train-vae");

  BenchArtifacts bench = load_bench(cfg, /*need_test=*/false);
  VaeTrainConfig vcfg = cfg.vae;
  vcfg.seed = cfg.seed;

  PairDataset heldout;
  const std::string test_manifest = out_path(cfg, "test.manifest.json");
  if (fs::exists(test_manifest)) {
    bench.test = read_candidates(out_path(cfg, "test"));
    heldout = eval_pairs_for(cfg, bench, kHeldStream, 2000);
  }

  const VaeTrainResult result =
      train_vae(bench.train.pairs, vcfg, heldout.pairs);
  save_vae(result.params, out_path(cfg, "vae"));

  nlohmann::json report;
  report["kind"] = "vae_report";
  report["dim"] = result.params.dim;
  report["d_vae"] = result.params.d_vae;
  report["hidden"] = result.params.hidden;
  report["sharing"] = to_string(result.params.sharing);
  report["epochs"] = vcfg.epochs;
  report["beta"] = vcfg.beta;
  report["gamma"] = vcfg.gamma;
  report["epoch_loss"] = result.epoch_loss;
  report["train_pairs"] = bench.train.pairs.size();
  // The divergence gradient flows into both posteriors; no early stopping.
  report["divergence_gradient"] = "both_sides";
  if (result.heldout_recon.has_value()) {
    report["heldout_recon"] = *result.heldout_recon;
    report["heldout_pairs"] = heldout.pairs.size();
  }
  write_report(report, out_path(cfg, "vae_report.json"));
  return report;
}

nlohmann::json stage_synth(const RunConfig& cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  StageTimer timer(cfg, "synth");

  BenchArtifacts bench = load_bench(cfg, /*need_test=*/false);
  SynthesisConfig scfg = cfg.synthesis;
  scfg.seed = cfg.seed;

  VaeParams vae;
  const VaeParams* vae_ptr = nullptr;
  if (scfg.method == SynthMethod::lens) {
    vae = load_vae(out_path(cfg, "vae"));
    if (vae.dim != bench.train.dim) {
      throw ConfigError("vae dim " + std::to_string(vae.dim) +
                        " does not match train dim " +
                        std::to_string(bench.train.dim));
    }
    vae_ptr = &vae;
  }

  const PairDataset aug = make_augmented(vae_ptr, bench.train, scfg);
  write_dataset(aug, out_path(cfg, "augmented"));

  std::size_t synthetic_embeddings = 0;
  for (std::size_t i = 0; i < aug.pairs.size(); ++i) {
    synthetic_embeddings +=
        (aug.prov_plus[i] == Provenance::synthetic ? 1 : 0) +
        (aug.prov_minus[i] == Provenance::synthetic ? 1 : 0);
  }

  nlohmann::json report;
  report["kind"] = "synth_report";
  report["method"] = to_string(scfg.method);
  report["k_aug"] = scfg.k_aug;
  report["top_k"] = scfg.resolved_top_k();
  report["candidates_per_embedding"] = scfg.candidates_per_embedding;
  report["sigma_noise_sq"] = scfg.sigma_noise_sq;
  report["pairs_in"] = bench.train.pairs.size();
  report["pairs_out"] = aug.pairs.size();
  report["synthetic_embeddings"] = synthetic_embeddings;
  write_report(report, out_path(cfg, "synth_report.json"));
  return report;
}

nlohmann::json stage_train_rm(const RunConfig& cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  StageTimer timer(cfg, "train-rm");

  std::string dataset = cfg.rm_dataset;
  if (dataset == "auto") {
    dataset = fs::exists(out_path(cfg, "augmented.manifest.json")) ? "augmented"
                                                                   : "original";
  }
  const PairDataset pairs =
      dataset == "augmented" ? read_dataset(out_path(cfg, "augmented"))
                             : read_dataset(out_path(cfg, "train"));

  RewardTrainConfig rcfg = cfg.reward;
  rcfg.seed = cfg.seed;
  const RewardTrainResult result = train_reward(pairs.pairs, rcfg);
  save_reward(result.head, out_path(cfg, "rm"));

  nlohmann::json report;
  report["kind"] = "rm_report";
  report["dataset"] = dataset;
  report["pairs"] = pairs.pairs.size();
  report["dim"] = result.head.dim;
  report["hidden"] = result.head.hidden;
  report["train_loss"] = result.train_loss;
  report["val_loss"] = result.val_loss;
  report["best_epoch"] = result.best_epoch;
  report["epochs_run"] = result.epochs_run;
  report["train_accuracy"] = pairwise_accuracy(result.head, pairs.pairs);
  write_report(report, out_path(cfg, "rm_report.json"));
  return report;
}

nlohmann::json stage_eval_bon(const RunConfig& cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  StageTimer timer(cfg, "eval-bon");

  const GoldRewardSpec gold = load_gold_for(cfg);
  const CandidateDataset test =
      truncated_test(read_candidates(out_path(cfg, "test")), cfg.eval.n_bon);

  std::vector<HeadRef> heads = cfg.eval.heads;
  if (heads.empty()) {
    heads.push_back({"rm", out_path(cfg, "rm")});
  }

  nlohmann::json head_reports = nlohmann::json::array();
  std::vector<std::pair<std::string, double>> selected;
  for (const auto& ref : heads) {
    const RewardHead head = load_reward(ref.path);
    if (head.dim != test.dim) {
      throw ConfigError("head '" + ref.name + "' dim " +
                        std::to_string(head.dim) + " does not match test dim " +
                        std::to_string(test.dim));
    }
    const BonResult r = best_of_n(head, test, gold, cfg.seed);
    nlohmann::json h = bon_to_json(r);
    h["name"] = ref.name;
    head_reports.push_back(h);
    selected.emplace_back(ref.name, r.selected);
  }

  nlohmann::json deltas = nlohmann::json::array();
  for (std::size_t i = 0; i + 1 < selected.size(); ++i) {
    for (std::size_t j = i + 1; j < selected.size(); ++j) {
      deltas.push_back({{"a", selected[i].first},
                        {"b", selected[j].first},
                        {"selected_delta", selected[i].second - selected[j].second}});
    }
  }

  nlohmann::json report;
  report["kind"] = "bon_report";
  report["n"] = cfg.eval.n_bon;
  report["prompts"] = test.prompts.size();
  report["heads"] = head_reports;
  report["pairwise"] = deltas;
  write_report(report, out_path(cfg, "bon_report.json"));
  return report;
}

nlohmann::json stage_verify_theory(const RunConfig& cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  StageTimer timer(cfg, "verify-theory");

  if (cfg.eval.sweep_ns.size() < 4 && cfg.eval.injected_eps_rec.empty()) {
    throw ConfigError("verify-theory: eval.sweep_Ns needs at least 4 sizes");
  }

  BenchArtifacts bench = load_bench(cfg);
  const int d = bench.train.dim;
  const double delta = cfg.eval.delta;

  nlohmann::json report;
  report["kind"] = "theory_report";
  report["delta"] = delta;
  report["d"] = d;
  report["d_vae"] = cfg.vae.d_vae;

  // t_delta from the synthesis noise actually in use.
  const double sigma_noise = std::sqrt(cfg.synthesis.sigma_noise_sq);
  report["t_delta"] = compute_t_delta(sigma_noise, cfg.vae.d_vae, delta);
  report["sigma_noise"] = sigma_noise;

  if (!cfg.eval.injected_eps_rec.empty()) {
    // Test mode: fit p on injected points only.
    std::vector<double> ns, eps;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [n, e] : cfg.eval.injected_eps_rec) {
      ns.push_back(n);
      eps.push_back(e);
      curve.push_back({{"N", n}, {"eps_rec", e}});
    }
    const double p = estimate_p(ns, eps);
    report["p"] = p;
    report["eps_rec_curve"] = curve;
    report["injected"] = true;
    report["C1"] = 0.0;
    report["B0"] = 0.0;
    report["N0"] = nullptr;
    report["N0_note"] = "injected test mode: no zeta sweep";
    report["ordering_preservation"] = 0.0;
    report["gap_original"] = 0.0;
    report["gap_synthetic"] = 0.0;
    report["w1_coupling_bound"] = 0.0;
    report["w1_exact"] = 0.0;
    write_report(report, out_path(cfg, "theory_report.json"));
    return report;
  }

  const PairDataset eval_pairs =
      eval_pairs_for(cfg, bench, kZetaStream, cfg.eval.zeta_eval_pairs);

  // Proxy for the best possible reward function: trained on the largest pool.
  SyntheticBenchConfig proxy_cfg = cfg.data.bench;
  proxy_cfg.num_prompts = cfg.eval.proxy_pairs;
  proxy_cfg.num_test_prompts = 0;
  Rng proxy_rng = Rng::derive(cfg.seed, kProxyStream);
  const Benchmark proxy_bench =
      generate_benchmark(proxy_cfg, bench.gold, proxy_rng);
  RewardTrainConfig proxy_rcfg = cfg.reward;
  proxy_rcfg.seed = cfg.seed;
  const RewardHead proxy = train_reward(proxy_bench.train.pairs, proxy_rcfg).head;

  // Sweep pool: one fixed pool, subset per N.
  std::vector<double> ns = cfg.eval.sweep_ns;
  std::sort(ns.begin(), ns.end());
  const std::size_t max_n = static_cast<std::size_t>(ns.back());
  SyntheticBenchConfig sweep_cfg = cfg.data.bench;
  sweep_cfg.num_prompts = static_cast<int>(max_n);
  sweep_cfg.num_test_prompts = 0;
  Rng sweep_rng = Rng::derive(cfg.seed, kSweepStream);
  const Benchmark sweep_bench =
      generate_benchmark(sweep_cfg, bench.gold, sweep_rng);

  const int seeds = cfg.eval.seeds;
  const std::size_t jobs_n = ns.size() * static_cast<std::size_t>(seeds);
  std::vector<double> eps_grid(jobs_n), zeta_grid(jobs_n), zeta_aug_grid(jobs_n);
  std::vector<VaeParams> vae_seed0(ns.size());

  parallel_jobs(jobs_n, cfg.jobs, [&](std::size_t job) {
    const std::size_t ni = job / static_cast<std::size_t>(seeds);
    const int seed_idx = static_cast<int>(job % static_cast<std::size_t>(seeds));
    const std::size_t n = static_cast<std::size_t>(ns[ni]);
    const PairDataset sub = subsample(sweep_bench.train, n);

    VaeTrainConfig vcfg = cfg.vae;
    vcfg.seed = cfg.seed + static_cast<std::uint64_t>(seed_idx);
    const VaeTrainResult vres = train_vae(sub.pairs, vcfg);
    eps_grid[job] = reconstruction_error(vres.params, eval_pairs.pairs);

    RewardTrainConfig rcfg = cfg.reward;
    rcfg.seed = cfg.seed + static_cast<std::uint64_t>(seed_idx);
    const RewardHead rm = train_reward(sub.pairs, rcfg).head;
    zeta_grid[job] = estimation_error(rm, eval_pairs.pairs, proxy);

    SynthesisConfig scfg = cfg.synthesis;
    scfg.seed = cfg.seed + static_cast<std::uint64_t>(seed_idx);
    scfg.k_aug = 2;
    scfg.top_k = 0;
    const PairDataset aug = make_augmented(&vres.params, sub, scfg);
    const RewardHead rm_aug = train_reward(aug.pairs, rcfg).head;
    zeta_aug_grid[job] = estimation_error(rm_aug, eval_pairs.pairs, proxy);

    if (seed_idx == 0) {
      vae_seed0[ni] = vres.params;
    }
  });

  std::vector<double> eps_mean(ns.size()), zeta_mean(ns.size()),
      zeta_aug_mean(ns.size());
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    double se = 0.0, sz = 0.0, sza = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const std::size_t job = ni * static_cast<std::size_t>(seeds) +
                              static_cast<std::size_t>(s);
      se += eps_grid[job];
      sz += zeta_grid[job];
      sza += zeta_aug_grid[job];
    }
    eps_mean[ni] = se / seeds;
    zeta_mean[ni] = sz / seeds;
    zeta_aug_mean[ni] = sza / seeds;
  }

  const double p = estimate_p(ns, eps_mean);
  report["p"] = p;
  double c1 = 0.0;
  try {
    c1 = estimate_C1(ns, zeta_mean, d, delta);
    report["C1"] = c1;
  } catch (const DomainError& e) {
    report["C1"] = nullptr;
    report["C1_note"] = e.what();
  }
  if (report["C1"].is_null()) {
    report["B0"] = nullptr;
    report["N0"] = nullptr;
    report["N0_note"] = "C1 fit degenerate";
  } else {
    const B0Fit b0 = estimate_B0(ns, zeta_aug_mean, c1, p, d, delta, 2);
    report["B0"] = b0.b0;
    report["B0_clamped"] = b0.clamped;
    try {
      report["N0"] = compute_N0(c1, b0.b0, p, d, delta);
    } catch (const std::runtime_error& e) {
      report["N0"] = nullptr;
      report["N0_note"] = e.what();
    }
  }

  // Ordering preservation and Theorem-1 margin check with the sweep VAE
  // closest to the default train size.
  std::size_t ref_ni = 0;
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    if (std::abs(ns[ni] - 1000.0) < std::abs(ns[ref_ni] - 1000.0)) ref_ni = ni;
  }
  const VaeParams& ref_vae = vae_seed0[ref_ni];
  SynthesisConfig order_cfg = cfg.synthesis;
  order_cfg.seed = cfg.seed;
  const PairDataset order_base =
      subsample(sweep_bench.train, static_cast<std::size_t>(ns[ref_ni]));
  const CounterpartPairs cp = counterpart_pairs(ref_vae, order_base, order_cfg);
  const OrderingStats stats =
      ordering_preservation(bench.gold, order_base.pairs, cp.synth);
  report["ordering_preservation"] = stats.fraction;
  report["gap_original"] = stats.gap_original;
  report["gap_synthetic"] = stats.gap_synthetic;
  report["ordering_reference_N"] = ns[ref_ni];

  // Lemma-1 coupling check on VAE reconstructions of held-out embeddings.
  {
    std::vector<std::vector<double>> originals, recons;
    const std::size_t limit = std::min<std::size_t>(eval_pairs.pairs.size(), 128);
    for (std::size_t i = 0; i < limit; ++i) {
      for (Sign sign : {Sign::plus, Sign::minus}) {
        const auto& e = sign == Sign::plus ? eval_pairs.pairs[i].e_plus
                                           : eval_pairs.pairs[i].e_minus;
        originals.push_back(e);
        recons.push_back(decode(ref_vae, encode(ref_vae, e, sign).mu, sign));
      }
    }
    const W1Check w1 = w1_checks(originals, recons);
    if (w1.exact_w1 > w1.coupling_bound + 1e-9) {
      throw NumericError("theory_report: exact W1 exceeds the coupling bound");
    }
    report["w1_coupling_bound"] = w1.coupling_bound;
    report["w1_exact"] = w1.exact_w1;
    report["w1_count"] = originals.size();
  }

  // Theorem-1 margin violations under empirically estimated constants.
  {
    Rng const_rng = Rng::derive(cfg.seed, 0x7468316bULL);
    const Theorem1Constants constants = estimate_theorem1_constants(
        ref_vae, proxy, order_base.pairs, const_rng);
    const double violations = theorem1_margin_check(
        proxy, cp.originals, cp.synth, sigma_noise, cfg.vae.d_vae, delta,
        constants);
    report["theorem1_violation_fraction"] = violations;
    report["theorem1_constants"] = {{"L_g", constants.l_g},
                                    {"L_r", constants.l_r},
                                    {"alpha", constants.alpha},
                                    {"eps_rec_norm", constants.eps_rec_norm}};
  }

  nlohmann::json curve = nlohmann::json::array();
  std::vector<std::vector<double>> eps_rows, zeta_rows;
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    curve.push_back({{"N", ns[ni]},
                     {"eps_rec", eps_mean[ni]},
                     {"zeta", zeta_mean[ni]},
                     {"zeta_aug", zeta_aug_mean[ni]}});
    eps_rows.push_back({ns[ni], eps_mean[ni]});
    zeta_rows.push_back({ns[ni], zeta_mean[ni], zeta_aug_mean[ni]});
  }
  report["eps_rec_curve"] = curve;
  nlohmann::json per_seed = nlohmann::json::array();
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    for (int s = 0; s < seeds; ++s) {
      const std::size_t job =
          ni * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(s);
      per_seed.push_back({{"N", ns[ni]},
                          {"seed", s},
                          {"eps_rec", eps_grid[job]},
                          {"zeta", zeta_grid[job]},
                          {"zeta_aug", zeta_aug_grid[job]}});
    }
  }
  report["per_seed"] = per_seed;

  write_csv(out_path(cfg, "eps_rec.csv"), "N,eps_rec", eps_rows);
  write_csv(out_path(cfg, "zeta.csv"), "N,zeta,zeta_aug", zeta_rows);
  write_report(report, out_path(cfg, "theory_report.json"));
  return report;
}

nlohmann::json stage_ablate(const RunConfig& cfg, const std::string& axis) {
  cfg.validate();
  ensure_output_dir(cfg);
  StageTimer timer(cfg, "ablate-" + axis);

  BenchArtifacts bench = load_bench(cfg);
  const CandidateDataset test = truncated_test(bench.test, cfg.eval.n_bon);

  struct GridPoint {
    double value = 0.0;
    std::string tag;
  };
  std::vector<GridPoint> grid;
  if (axis == "gamma") {
    for (double g : {0.0, 0.01, 0.1, 0.5, 1.0}) grid.push_back({g, ""});
  } else if (axis == "beta") {
    for (double b : {0.1, 0.5, 1.0, 2.0, 5.0}) grid.push_back({b, ""});
  } else if (axis == "sigma") {
    for (double s : {1e-3, 1e-2, 1e-1, 1.0}) grid.push_back({s, ""});
  } else if (axis == "k") {
    for (double k : {2.0, 4.0, 8.0}) grid.push_back({k, ""});
  } else if (axis == "N") {
    for (double n : cfg.eval.sweep_ns) {
      if (n <= static_cast<double>(bench.train.pairs.size())) {
        grid.push_back({n, ""});
      }
    }
    if (grid.empty()) {
      throw ConfigError("ablate N: no sweep size fits the train set");
    }
  } else if (axis == "mix") {
    grid.push_back({0.0, "original"});
    grid.push_back({1.0, "synthetic"});
    grid.push_back({2.0, "combined"});
  } else if (axis == "sharing") {
    grid.push_back({0.0, "separate"});
    grid.push_back({1.0, "shared_trunk"});
    grid.push_back({2.0, "fully_shared"});
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }

  const int seeds = cfg.eval.seeds;
  const std::size_t jobs_n = grid.size() * static_cast<std::size_t>(seeds);
  struct Row {
    double value = 0.0;
    std::string tag;
    int seed = 0;
    BonResult bon;
    double ordering = 0.0;
    double eps_rec = 0.0;
  };
  std::vector<Row> rows(jobs_n);

  parallel_jobs(jobs_n, cfg.jobs, [&](std::size_t job) {
    const std::size_t gi = job / static_cast<std::size_t>(seeds);
    const int seed_idx = static_cast<int>(job % static_cast<std::size_t>(seeds));
    const GridPoint& point = grid[gi];

    VaeTrainConfig vcfg = cfg.vae;
    SynthesisConfig scfg = cfg.synthesis;
    RewardTrainConfig rcfg = cfg.reward;
    const std::uint64_t job_seed =
        cfg.seed + static_cast<std::uint64_t>(seed_idx);
    vcfg.seed = job_seed;
    scfg.seed = job_seed;
    rcfg.seed = job_seed;

    PairDataset train = bench.train;
    if (axis == "gamma") vcfg.gamma = point.value;
    if (axis == "beta") vcfg.beta = point.value;
    if (axis == "sigma") scfg.sigma_noise_sq = point.value;
    if (axis == "k") {
      scfg.k_aug = static_cast<int>(point.value);
      scfg.top_k = 0;
    }
    if (axis == "N") train = subsample(bench.train, static_cast<std::size_t>(point.value));
    if (axis == "sharing") vcfg.sharing = sharing_from_string(point.tag);

    const VaeTrainResult vres = train_vae(train.pairs, vcfg);

    PairDataset rm_train;
    if (axis == "mix") {
      const PairDataset aug = make_augmented(&vres.params, train, scfg);
      if (point.tag == "original") {
        rm_train = train;
      } else if (point.tag == "synthetic") {
        rm_train.dim = aug.dim;
        rm_train.split = aug.split;
        rm_train.seed = aug.seed;
        rm_train.gold_digest = aug.gold_digest;
        for (std::size_t i = 0; i < aug.pairs.size(); ++i) {
          if (aug.prov_plus[i] == Provenance::synthetic ||
              aug.prov_minus[i] == Provenance::synthetic) {
            rm_train.pairs.push_back(aug.pairs[i]);
          }
        }
      } else {
        rm_train = aug;
      }
    } else {
      rm_train = make_augmented(&vres.params, train, scfg);
    }

    const RewardHead head = train_reward(rm_train.pairs, rcfg).head;

    Row row;
    row.value = point.value;
    row.tag = point.tag;
    row.seed = seed_idx;
    row.bon = best_of_n(head, test, bench.gold, job_seed);
    const CounterpartPairs cp = counterpart_pairs(vres.params, train, scfg);
    row.ordering =
        ordering_preservation(bench.gold, train.pairs, cp.synth).fraction;
    row.eps_rec = reconstruction_error(vres.params, train.pairs);
    rows[job] = std::move(row);
  });

  nlohmann::json jrows = nlohmann::json::array();
  std::vector<std::vector<double>> csv_rows;
  std::ofstream csv(out_path(cfg, "ablate_" + axis + ".csv"));
  if (!csv) {
    throw IoError("cannot write ablate CSV");
  }
  csv << "axis,value,tag,seed,bon_selected,bon_random,bon_oracle,ordering,eps_rec\n";
  for (const Row& row : rows) {
    nlohmann::json r;
    r["axis"] = axis;
    r["value"] = row.value;
    if (!row.tag.empty()) r["tag"] = row.tag;
    r["seed"] = row.seed;
    r["bon"] = bon_to_json(row.bon);
    r["ordering"] = row.ordering;
    r["eps_rec"] = row.eps_rec;
    jrows.push_back(r);
    csv << axis << "," << fmt_double(row.value) << "," << row.tag << ","
        << row.seed << "," << fmt_double(row.bon.selected) << ","
        << fmt_double(row.bon.random_pick) << "," << fmt_double(row.bon.oracle)
        << "," << fmt_double(row.ordering) << "," << fmt_double(row.eps_rec)
        << "\n";
  }

  nlohmann::json report;
  report["kind"] = "ablate_report";
  report["axis"] = axis;
  report["seeds"] = seeds;
  report["rows"] = jrows;
  write_report(report, out_path(cfg, "ablate_" + axis + ".json"));
  return report;
}

nlohmann::json stage_report(const RunConfig& cfg) {
  cfg.validate();
  ensure_output_dir(cfg);

  nlohmann::json stages = nlohmann::json::object();
  for (const char* name :
       {"gen_data_report", "vae_report", "synth_report", "rm_report",
        "bon_report", "theory_report"}) {
    const std::string path = out_path(cfg, std::string(name) + ".json");
    std::ifstream in(path);
    if (!in) continue;
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
    stages[name] = j;
  }

  nlohmann::json report;
  report["kind"] = "summary_report";
  report["stages"] = stages;
  write_report(report, out_path(cfg, "summary.json"));
  return report;
}

std::string run_scorer(const std::string& head_stem,
                       const std::string& dataset_path) {
  const RewardHead head = load_reward(head_stem);
  std::ostringstream out;
  const std::string manifest = dataset_path + ".manifest.json";
  bool is_candidates = false;
  {
    std::ifstream in(manifest);
    if (in) {
      nlohmann::json j;
      try {
        in >> j;
        is_candidates = j.value("layout", "pairs") == "candidates";
      } catch (const nlohmann::json::exception&) {
      }
    }
  }
  if (is_candidates) {
    const CandidateDataset ds = read_candidates(dataset_path);
    for (const auto& prompt : ds.prompts) {
      for (const auto& e : prompt.embeddings) {
        out << fmt_double(reward_score(head, e)) << "\n";
      }
    }
  } else {
    const PairDataset ds = read_dataset(dataset_path);
    for (const auto& p : ds.pairs) {
      out << fmt_double(reward_score(head, p.e_plus)) << "\n";
      out << fmt_double(reward_score(head, p.e_minus)) << "\n";
    }
  }
  return out.str();
}

}  // namespace lens
