#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lens {

struct PreferencePair {
  std::int64_t prompt_id = 0;
  std::vector<double> e_plus;
  std::vector<double> e_minus;
};

enum class Provenance : std::uint8_t { original = 0, synthetic = 1 };

// Preference pairs plus the manifest metadata they travel with. The blob on
// disk is little-endian f32, row-major, each pair stored as [e+ then e-];
// `count` in the manifest counts dim-width records, so one pair contributes 2.
struct PairDataset {
  int dim = 0;
  std::string split = "train";
  std::uint64_t seed = 0;
  std::string gold_digest;
  std::vector<PreferencePair> pairs;
  // Per-embedding provenance for augmented sets; empty or pairs.size() each.
  std::vector<Provenance> prov_plus;
  std::vector<Provenance> prov_minus;

  bool has_provenance() const { return !prov_plus.empty(); }
};

struct CandidateSet {
  std::int64_t prompt_id = 0;
  std::vector<std::vector<double>> embeddings;
};

// Per-prompt candidate pools for Best-of-N evaluation.
struct CandidateDataset {
  int dim = 0;
  std::string split = "test";
  std::uint64_t seed = 0;
  std::string gold_digest;
  std::vector<CandidateSet> prompts;

  std::size_t total_candidates() const;
};

// path_stem ".manifest.json" and ".bin" are written next to each other.
void write_dataset(const PairDataset& ds, const std::string& path_stem);
void write_candidates(const CandidateDataset& ds, const std::string& path_stem);

// Accepts a path stem (expects <stem>.manifest.json + <stem>.bin), an explicit
// manifest path, or a .jsonl file with one
// {"prompt_id":int,"e_plus":[...],"e_minus":[...]} record per line.
PairDataset read_dataset(const std::string& path);
CandidateDataset read_candidates(const std::string& path);

// Flat list of every embedding in the dataset (e+ and e- interleaved per pair).
std::vector<std::vector<double>> all_embeddings(const PairDataset& ds);

}  // namespace lens
