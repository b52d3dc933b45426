#include "lens/gold.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "lens/errors.hpp"
#include "lens/rng.hpp"

namespace lens {

GoldRewardSpec GoldRewardSpec::create(std::uint64_t seed, int dim, int hidden) {
  if (dim < 1 || hidden < 1) {
    throw ConfigError("gold reward: dim and hidden must be >= 1");
  }
  GoldRewardSpec g;
  g.seed = seed;
  g.dim = dim;
  g.hidden = hidden;
  Rng rng = Rng::derive(seed, 0x676f6c64ULL);  // "gold" stream
  g.w1 = Matrix(hidden, dim);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < g.w1.size(); ++i) {
    g.w1.data()[i] = rng.normal() * s1;
  }
  g.w2.resize(hidden);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& w : g.w2) {
    w = rng.normal() * s2;
  }
  return g;
}

std::string GoldRewardSpec::digest() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "gold:v1:seed=%llu:dim=%d:hidden=%d",
                static_cast<unsigned long long>(seed), dim, hidden);
  // FNV-1a 64
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = buf; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

double gold_reward(const GoldRewardSpec& gold, std::span<const double> e) {
  if (static_cast<int>(e.size()) != gold.dim) {
    throw ShapeError("gold_reward: embedding dim " + std::to_string(e.size()) +
                     " does not match spec dim " + std::to_string(gold.dim));
  }
  double out = 0.0;
  for (int j = 0; j < gold.hidden; ++j) {
    double a = 0.0;
    const double* row = gold.w1.data() + static_cast<std::size_t>(j) * gold.dim;
    for (int i = 0; i < gold.dim; ++i) {
      a += row[i] * e[i];
    }
    out += gold.w2[j] * std::tanh(a);
  }
  return out;
}

void save_gold(const GoldRewardSpec& gold, const std::string& path) {
  nlohmann::json j;
  j["kind"] = "gold_reward_spec";
  j["seed"] = gold.seed;
  j["dim"] = gold.dim;
  j["hidden"] = gold.hidden;
  j["digest"] = gold.digest();
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write gold spec to " + path);
  }
  out << j.dump(2) << "\n";
}

GoldRewardSpec load_gold(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read gold spec from " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("gold spec " + path + ": " + e.what());
  }
  GoldRewardSpec g = GoldRewardSpec::create(j.at("seed").get<std::uint64_t>(),
                                            j.at("dim").get<int>(),
                                            j.at("hidden").get<int>());
  if (j.contains("digest") && j["digest"].get<std::string>() != g.digest()) {
    throw FormatError("gold spec " + path + ": digest mismatch");
  }
  return g;
}

}  // namespace lens
