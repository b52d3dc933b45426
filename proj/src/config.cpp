#include "lens/config.hpp"

#include <fstream>
#include <set>

#include "lens/errors.hpp"

namespace lens {

namespace {

void check_known_keys(const nlohmann::json& j, const std::string& scope,
                      const std::set<std::string>& known) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError("unknown config field '" +
                        (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const std::string& scope,
                const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field '" + (scope.empty() ? key : scope + "." + key) +
                      "' has the wrong type");
  }
}

}  // namespace

void EvalConfig::validate() const {
  if (n_bon < 2) throw ConfigError("eval.n_bon must be >= 2");
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw ConfigError("eval.delta must be in (0, 1)");
  }
  for (double n : sweep_ns) {
    if (!(n >= 1.0)) throw ConfigError("eval.sweep_Ns entries must be >= 1");
  }
  if (zeta_eval_pairs < 1) throw ConfigError("eval.zeta_eval_pairs must be >= 1");
  if (proxy_pairs < 2) throw ConfigError("eval.proxy_pairs must be >= 2");
  if (seeds < 1) throw ConfigError("eval.seeds must be >= 1");
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (rm_dataset != "auto" && rm_dataset != "original" &&
      rm_dataset != "augmented") {
    throw ConfigError("rm_dataset must be auto, original or augmented");
  }
  try {
    data.bench.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("data: " + std::string(e.what()));
  }
  if (data.gold_hidden < 1) throw ConfigError("data.gold_hidden must be >= 1");
  vae.validate();
  synthesis.validate();
  reward.validate();
  eval.validate();
}

RunConfig default_config() {
  return RunConfig{};
}

RunConfig parse_config(const nlohmann::json& j) {
  RunConfig cfg;
  check_known_keys(j, "", {"seed", "data", "vae", "synthesis", "reward", "eval",
                           "output_dir", "jobs", "rm_dataset"});
  read_field(j, "", "seed", cfg.seed);
  read_field(j, "", "output_dir", cfg.output_dir);
  read_field(j, "", "jobs", cfg.jobs);
  read_field(j, "", "rm_dataset", cfg.rm_dataset);

  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_known_keys(d, "data",
                     {"dim", "num_prompts", "num_test_prompts",
                      "candidates_per_prompt", "cluster_scale", "response_scale",
                      "label_temperature", "gold_hidden", "ingest_train"});
    read_field(d, "data", "dim", cfg.data.bench.dim);
    read_field(d, "data", "num_prompts", cfg.data.bench.num_prompts);
    read_field(d, "data", "num_test_prompts", cfg.data.bench.num_test_prompts);
    read_field(d, "data", "candidates_per_prompt",
               cfg.data.bench.candidates_per_prompt);
    read_field(d, "data", "cluster_scale", cfg.data.bench.cluster_scale);
    read_field(d, "data", "response_scale", cfg.data.bench.response_scale);
    read_field(d, "data", "label_temperature", cfg.data.bench.label_temperature);
    read_field(d, "data", "gold_hidden", cfg.data.gold_hidden);
    read_field(d, "data", "ingest_train", cfg.data.ingest_train);
    if (d.contains("num_prompts") && cfg.data.bench.num_prompts < 1) {
      throw ConfigError("data.num_prompts must be >= 1");
    }
  }

  if (j.contains("vae")) {
    const auto& v = j.at("vae");
    check_known_keys(v, "vae", {"epochs", "batch", "lr", "beta", "gamma",
                                "d_vae", "hidden", "sharing"});
    read_field(v, "vae", "epochs", cfg.vae.epochs);
    read_field(v, "vae", "batch", cfg.vae.batch);
    read_field(v, "vae", "lr", cfg.vae.lr);
    read_field(v, "vae", "beta", cfg.vae.beta);
    read_field(v, "vae", "gamma", cfg.vae.gamma);
    read_field(v, "vae", "d_vae", cfg.vae.d_vae);
    read_field(v, "vae", "hidden", cfg.vae.hidden);
    if (v.contains("sharing")) {
      cfg.vae.sharing = sharing_from_string(v.at("sharing").get<std::string>());
    }
  }

  if (j.contains("synthesis")) {
    const auto& s = j.at("synthesis");
    check_known_keys(s, "synthesis",
                     {"sigma_noise_sq", "candidates_per_embedding", "top_k",
                      "k_aug", "method"});
    read_field(s, "synthesis", "sigma_noise_sq", cfg.synthesis.sigma_noise_sq);
    read_field(s, "synthesis", "candidates_per_embedding",
               cfg.synthesis.candidates_per_embedding);
    read_field(s, "synthesis", "top_k", cfg.synthesis.top_k);
    read_field(s, "synthesis", "k_aug", cfg.synthesis.k_aug);
    if (s.contains("method")) {
      cfg.synthesis.method =
          synth_method_from_string(s.at("method").get<std::string>());
    }
  }

  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_known_keys(r, "reward", {"lr", "max_epochs", "patience", "batch",
                                   "validation_fraction", "hidden"});
    read_field(r, "reward", "lr", cfg.reward.lr);
    read_field(r, "reward", "max_epochs", cfg.reward.max_epochs);
    read_field(r, "reward", "patience", cfg.reward.patience);
    read_field(r, "reward", "batch", cfg.reward.batch);
    read_field(r, "reward", "validation_fraction",
               cfg.reward.validation_fraction);
    read_field(r, "reward", "hidden", cfg.reward.hidden);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_known_keys(e, "eval",
                     {"n_bon", "delta", "sweep_Ns", "zeta_eval_pairs",
                      "proxy_pairs", "seeds", "heads", "injected_eps_rec"});
    read_field(e, "eval", "n_bon", cfg.eval.n_bon);
    read_field(e, "eval", "delta", cfg.eval.delta);
    if (e.contains("sweep_Ns")) {
      cfg.eval.sweep_ns = e.at("sweep_Ns").get<std::vector<double>>();
    }
    read_field(e, "eval", "zeta_eval_pairs", cfg.eval.zeta_eval_pairs);
    read_field(e, "eval", "proxy_pairs", cfg.eval.proxy_pairs);
    read_field(e, "eval", "seeds", cfg.eval.seeds);
    if (e.contains("heads")) {
      for (const auto& h : e.at("heads")) {
        check_known_keys(h, "eval.heads[]", {"name", "path"});
        cfg.eval.heads.push_back({h.at("name").get<std::string>(),
                                  h.at("path").get<std::string>()});
      }
    }
    if (e.contains("injected_eps_rec")) {
      for (const auto& point : e.at("injected_eps_rec")) {
        if (!point.is_array() || point.size() != 2) {
          throw ConfigError("eval.injected_eps_rec entries must be [N, eps]");
        }
        cfg.eval.injected_eps_rec.emplace_back(point[0].get<double>(),
                                               point[1].get<double>());
      }
    }
  }

  // Propagate the master seed into sub-configs.
  cfg.vae.seed = cfg.seed;
  cfg.synthesis.seed = cfg.seed;
  cfg.reward.seed = cfg.seed;

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return parse_config(j);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["jobs"] = cfg.jobs;
  j["rm_dataset"] = cfg.rm_dataset;
  j["data"] = {{"dim", cfg.data.bench.dim},
               {"num_prompts", cfg.data.bench.num_prompts},
               {"num_test_prompts", cfg.data.bench.num_test_prompts},
               {"candidates_per_prompt", cfg.data.bench.candidates_per_prompt},
               {"cluster_scale", cfg.data.bench.cluster_scale},
               {"response_scale", cfg.data.bench.response_scale},
               {"label_temperature", cfg.data.bench.label_temperature},
               {"gold_hidden", cfg.data.gold_hidden},
               {"ingest_train", cfg.data.ingest_train}};
  j["vae"] = {{"epochs", cfg.vae.epochs},   {"batch", cfg.vae.batch},
              {"lr", cfg.vae.lr},           {"beta", cfg.vae.beta},
              {"gamma", cfg.vae.gamma},     {"d_vae", cfg.vae.d_vae},
              {"hidden", cfg.vae.hidden},   {"sharing", to_string(cfg.vae.sharing)}};
  j["synthesis"] = {{"sigma_noise_sq", cfg.synthesis.sigma_noise_sq},
                    {"candidates_per_embedding",
                     cfg.synthesis.candidates_per_embedding},
                    {"top_k", cfg.synthesis.top_k},
                    {"k_aug", cfg.synthesis.k_aug},
                    {"method", to_string(cfg.synthesis.method)}};
  j["reward"] = {{"lr", cfg.reward.lr},
                 {"max_epochs", cfg.reward.max_epochs},
                 {"patience", cfg.reward.patience},
                 {"batch", cfg.reward.batch},
                 {"validation_fraction", cfg.reward.validation_fraction},
                 {"hidden", cfg.reward.hidden}};
  j["eval"] = {{"n_bon", cfg.eval.n_bon},
               {"delta", cfg.eval.delta},
               {"sweep_Ns", cfg.eval.sweep_ns},
               {"zeta_eval_pairs", cfg.eval.zeta_eval_pairs},
               {"proxy_pairs", cfg.eval.proxy_pairs},
               {"seeds", cfg.eval.seeds}};
  return j;
}

}  // namespace lens
