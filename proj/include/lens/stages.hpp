#pragma once

#include <string>

#include <json.hpp>

#include "lens/config.hpp"

namespace lens {

// Pipeline stages behind the CLI subcommands. Each one reads its upstream
// artifacts from cfg.output_dir, writes its own artifact plus a deterministic
// JSON report, and returns that report. Wall-clock timings go to the log and
// to timings.json, never into the reports, so reruns with the same seed are
// byte-identical.

nlohmann::json stage_gen_data(const RunConfig& cfg);
nlohmann::json stage_train_vae(const RunConfig& cfg);
nlohmann::json stage_synth(const RunConfig& cfg);
nlohmann::json stage_train_rm(const RunConfig& cfg);
nlohmann::json stage_eval_bon(const RunConfig& cfg);
nlohmann::json stage_verify_theory(const RunConfig& cfg);
nlohmann::json stage_ablate(const RunConfig& cfg, const std::string& axis);
nlohmann::json stage_report(const RunConfig& cfg);

// Scores every embedding record in `dataset_path` with the head at
// `head_stem`; one score per line in blob order.
std::string run_scorer(const std::string& head_stem,
                       const std::string& dataset_path);

// Validates a report (finite numbers, required fields per kind) and writes it
// with stable formatting. Returns the serialized bytes.
std::string write_report(const nlohmann::json& report, const std::string& path);

}  // namespace lens
