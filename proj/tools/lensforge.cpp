#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lens/config.hpp"
#include "lens/errors.hpp"
#include "lens/log.hpp"
#include "lens/stages.hpp"

namespace {

// Exit codes: 0 ok, 2 config, 3 I/O or file format, 4 numeric, 1 anything else.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int jobs = 0;
};

lens::RunConfig resolve_config(const CommonFlags& flags) {
  lens::RunConfig cfg = flags.config_path.empty()
                            ? lens::default_config()
                            : lens::load_config(flags.config_path);
  if (flags.seed.has_value()) {
    cfg.seed = *flags.seed;
    cfg.vae.seed = *flags.seed;
    cfg.synthesis.seed = *flags.seed;
    cfg.reward.seed = *flags.seed;
  }
  if (!flags.out_dir.empty()) {
    cfg.output_dir = flags.out_dir;
  }
  if (flags.jobs > 0) {
    cfg.jobs = flags.jobs;
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
  cmd->add_option("--jobs", flags.jobs, "worker pool size for sweeps");
}

void print_summary(const nlohmann::json& report) {
  const std::string kind = report.value("kind", "report");
  if (kind == "gen_data_report") {
    std::printf("gen-data: %llu train pairs (dim %d), %llu test prompts, gold %s\n",
                static_cast<unsigned long long>(
                    report["train"]["pairs"].get<std::size_t>()),
                report["train"]["dim"].get<int>(),
                static_cast<unsigned long long>(
                    report["test"]["prompts"].get<std::size_t>()),
                report["gold_digest"].get<std::string>().c_str());
  } else if (kind == "vae_report") {
    const auto& losses = report["epoch_loss"];
    std::printf("train-vae: %d epochs, first loss %.4f, last loss %.4f\n",
                report["epochs"].get<int>(), losses.front().get<double>(),
                losses.back().get<double>());
    if (report.contains("heldout_recon")) {
      std::printf("train-vae: heldout recon %.4f\n",
                  report["heldout_recon"].get<double>());
    }
  } else if (kind == "synth_report") {
    std::printf("synth: method %s, %llu -> %llu pairs (k_aug %d, top_k %d)\n",
                report["method"].get<std::string>().c_str(),
                static_cast<unsigned long long>(
                    report["pairs_in"].get<std::size_t>()),
                static_cast<unsigned long long>(
                    report["pairs_out"].get<std::size_t>()),
                report["k_aug"].get<int>(), report["top_k"].get<int>());
  } else if (kind == "rm_report") {
    std::printf("train-rm: dataset %s, best epoch %d/%d, train accuracy %.3f\n",
                report["dataset"].get<std::string>().c_str(),
                report["best_epoch"].get<int>(), report["epochs_run"].get<int>(),
                report["train_accuracy"].get<double>());
  } else if (kind == "bon_report") {
    for (const auto& h : report["heads"]) {
      std::printf("eval-bon[%s]: selected %.4f (random %.4f, oracle %.4f)\n",
                  h["name"].get<std::string>().c_str(),
                  h["selected"].get<double>(), h["random_pick"].get<double>(),
                  h["oracle"].get<double>());
    }
  } else if (kind == "theory_report") {
    std::printf("verify-theory: p %.4f", report["p"].get<double>());
    if (report["C1"].is_number()) {
      std::printf(", C1 %.4f", report["C1"].get<double>());
    }
    if (report["B0"].is_number()) {
      std::printf(", B0 %.4f", report["B0"].get<double>());
    }
    if (report["N0"].is_number()) {
      std::printf(", N0 %.2f", report["N0"].get<double>());
    }
    std::printf(", t_delta %.4f, ordering %.3f\n",
                report["t_delta"].get<double>(),
                report["ordering_preservation"].get<double>());
  } else if (kind == "ablate_report") {
    std::printf("ablate[%s]: %llu rows\n",
                report["axis"].get<std::string>().c_str(),
                static_cast<unsigned long long>(report["rows"].size()));
  } else if (kind == "summary_report") {
    std::printf("report: %llu stage reports aggregated into summary.json\n",
                static_cast<unsigned long long>(report["stages"].size()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lensforge: preference-embedding synthesis and reward modeling"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string ablate_axis;
  std::string score_head, score_data;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic benchmark");
  add_common(gen, flags);
  CLI::App* tv = app.add_subcommand("train-vae", "train the divergence-regularized VAE");
  add_common(tv, flags);
  CLI::App* sy = app.add_subcommand("synth", "synthesize an augmented pair set");
  add_common(sy, flags);
  CLI::App* tr = app.add_subcommand("train-rm", "train the reward model");
  add_common(tr, flags);
  CLI::App* eb = app.add_subcommand("eval-bon", "Best-of-N evaluation against gold");
  add_common(eb, flags);
  CLI::App* vt = app.add_subcommand("verify-theory", "scaling-law and bound checks");
  add_common(vt, flags);
  CLI::App* ab = app.add_subcommand("ablate", "grid ablations");
  add_common(ab, flags);
  ab->add_option("--axis", ablate_axis,
                 "gamma|beta|sigma|k|N|mix|sharing")
      ->required();
  CLI::App* rp = app.add_subcommand("report", "aggregate stage reports");
  add_common(rp, flags);
  CLI::App* sc = app.add_subcommand("score", "score an embedding file, one line per embedding");
  add_common(sc, flags);
  sc->add_option("--head", score_head, "reward head stem (default <out>/rm)");
  sc->add_option("--data", score_data, "dataset stem or .jsonl file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const lens::RunConfig cfg = resolve_config(flags);
    nlohmann::json report;
    if (gen->parsed()) {
      report = lens::stage_gen_data(cfg);
    } else if (tv->parsed()) {
      report = lens::stage_train_vae(cfg);
    } else if (sy->parsed()) {
      report = lens::stage_synth(cfg);
    } else if (tr->parsed()) {
      report = lens::stage_train_rm(cfg);
    } else if (eb->parsed()) {
      report = lens::stage_eval_bon(cfg);
    } else if (vt->parsed()) {
      report = lens::stage_verify_theory(cfg);
    } else if (ab->parsed()) {
      report = lens::stage_ablate(cfg, ablate_axis);
    } else if (rp->parsed()) {
      report = lens::stage_report(cfg);
    } else if (sc->parsed()) {
      const std::string head =
          score_head.empty() ? cfg.output_dir + "/rm" : score_head;
      std::fputs(lens::run_scorer(head, score_data).c_str(), stdout);
      return 0;
    }
    print_summary(report);
    return 0;
  } catch (const lens::ConfigError& e) {
    LENS_LOG_ERROR("config error: %s", e.what());
    return kExitConfig;
  } catch (const lens::DomainError& e) {
    LENS_LOG_ERROR("config error: %s", e.what());
    return kExitConfig;
  } catch (const lens::IoError& e) {
    LENS_LOG_ERROR("io error: %s", e.what());
    return kExitIo;
  } catch (const lens::FormatError& e) {
    LENS_LOG_ERROR("format error: %s", e.what());
    return kExitIo;
  } catch (const lens::NumericError& e) {
    LENS_LOG_ERROR("numeric error: %s", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    LENS_LOG_ERROR("%s", e.what());
    return 1;
  }
}
