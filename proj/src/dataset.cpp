#include "lens/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lens/errors.hpp"

namespace lens {

namespace {

static_assert(std::endian::native == std::endian::little,
              "dataset blobs are little-endian f32; big-endian hosts unsupported");

void write_blob(const std::string& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write blob " + path);
  }
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) {
    throw IoError("short write to " + path);
  }
}

std::vector<float> read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw IoError("cannot read blob " + path);
  }
  const std::streamsize bytes = in.tellg();
  in.seekg(0);
  if (bytes % sizeof(float) != 0) {
    throw FormatError("blob " + path + ": size " + std::to_string(bytes) +
                      " bytes is not a multiple of 4");
  }
  std::vector<float> values(static_cast<std::size_t>(bytes) / sizeof(float));
  in.read(reinterpret_cast<char*>(values.data()), bytes);
  if (!in) {
    throw IoError("short read from " + path);
  }
  return values;
}

nlohmann::json load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read manifest " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path + ": " + e.what());
  }
  return j;
}

void check_blob_size(const nlohmann::json& manifest, std::size_t actual_floats,
                     const std::string& blob_path) {
  const std::size_t count = manifest.at("count").get<std::size_t>();
  const std::size_t dim = manifest.at("dim").get<std::size_t>();
  const std::size_t expected_bytes = count * dim * sizeof(float);
  const std::size_t actual_bytes = actual_floats * sizeof(float);
  if (expected_bytes != actual_bytes) {
    const std::size_t record = actual_bytes / (dim * sizeof(float));
    throw FormatError(blob_path + ": expected " + std::to_string(expected_bytes) +
                      " bytes (count " + std::to_string(count) + " x dim " +
                      std::to_string(dim) + " x 4), got " +
                      std::to_string(actual_bytes) +
                      "; first incomplete record index " + std::to_string(record));
  }
}

std::string provenance_name(Provenance p) {
  return p == Provenance::original ? "original" : "synthetic";
}

Provenance provenance_from_name(const std::string& s, std::size_t index) {
  if (s == "original") return Provenance::original;
  if (s == "synthetic") return Provenance::synthetic;
  throw FormatError("manifest provenance[" + std::to_string(index) +
                    "]: unknown value '" + s + "'");
}

void validate_pair(const PreferencePair& p, int dim, std::size_t index) {
  if (static_cast<int>(p.e_plus.size()) != dim ||
      static_cast<int>(p.e_minus.size()) != dim) {
    throw FormatError("record " + std::to_string(index) +
                      ": embedding length does not match dim " +
                      std::to_string(dim));
  }
  for (double x : p.e_plus) {
    if (!std::isfinite(x)) {
      throw FormatError("record " + std::to_string(index) +
                        ": non-finite value in e_plus");
    }
  }
  for (double x : p.e_minus) {
    if (!std::isfinite(x)) {
      throw FormatError("record " + std::to_string(index) +
                        ": non-finite value in e_minus");
    }
  }
  if (p.e_plus == p.e_minus) {
    throw FormatError("record " + std::to_string(index) +
                      ": e_plus equals e_minus");
  }
}

PairDataset read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read " + path);
  }
  PairDataset ds;
  ds.split = "ingest";
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + " record " + std::to_string(index) + ": " +
                        e.what());
    }
    PreferencePair p;
    try {
      p.prompt_id = j.at("prompt_id").get<std::int64_t>();
      p.e_plus = j.at("e_plus").get<std::vector<double>>();
      p.e_minus = j.at("e_minus").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + " record " + std::to_string(index) + ": " +
                        e.what());
    }
    if (ds.dim == 0) {
      ds.dim = static_cast<int>(p.e_plus.size());
      if (ds.dim < 1) {
        throw FormatError(path + " record 0: empty embedding");
      }
    }
    validate_pair(p, ds.dim, index);
    ds.pairs.push_back(std::move(p));
    ++index;
  }
  if (ds.pairs.empty()) {
    throw FormatError(path + ": no records");
  }
  return ds;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string stem_of(const std::string& path) {
  if (ends_with(path, ".manifest.json")) {
    return path.substr(0, path.size() - std::string(".manifest.json").size());
  }
  return path;
}

}  // namespace

std::size_t CandidateDataset::total_candidates() const {
  std::size_t n = 0;
  for (const auto& p : prompts) n += p.embeddings.size();
  return n;
}

void write_dataset(const PairDataset& ds, const std::string& path_stem) {
  if (ds.dim < 1) {
    throw FormatError("write_dataset: dim must be >= 1");
  }
  if (ds.has_provenance() && (ds.prov_plus.size() != ds.pairs.size() ||
                              ds.prov_minus.size() != ds.pairs.size())) {
    throw FormatError("write_dataset: provenance length does not match pairs");
  }
  std::vector<float> blob;
  blob.reserve(ds.pairs.size() * 2 * ds.dim);
  std::vector<std::int64_t> prompt_ids;
  prompt_ids.reserve(ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    validate_pair(p, ds.dim, i);
    for (double x : p.e_plus) blob.push_back(static_cast<float>(x));
    for (double x : p.e_minus) blob.push_back(static_cast<float>(x));
    prompt_ids.push_back(p.prompt_id);
  }

  nlohmann::json manifest;
  manifest["layout"] = "pairs";
  manifest["dim"] = ds.dim;
  manifest["count"] = ds.pairs.size() * 2;  // dim-width records in the blob
  manifest["dtype"] = "f32le";
  manifest["split"] = ds.split;
  manifest["seed"] = ds.seed;
  manifest["gold_spec_digest"] = ds.gold_digest;
  manifest["prompt_ids"] = prompt_ids;
  if (ds.has_provenance()) {
    std::vector<std::string> prov;
    prov.reserve(ds.pairs.size() * 2);
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
      prov.push_back(provenance_name(ds.prov_plus[i]));
      prov.push_back(provenance_name(ds.prov_minus[i]));
    }
    manifest["provenance"] = prov;
  }

  write_blob(path_stem + ".bin", blob);
  std::ofstream out(path_stem + ".manifest.json");
  if (!out) {
    throw IoError("cannot write manifest " + path_stem + ".manifest.json");
  }
  out << manifest.dump(2) << "\n";
}

PairDataset read_dataset(const std::string& path) {
  if (ends_with(path, ".jsonl")) {
    return read_jsonl(path);
  }
  const std::string stem = stem_of(path);
  const std::string manifest_path = stem + ".manifest.json";
  const std::string blob_path = stem + ".bin";
  const nlohmann::json manifest = load_manifest(manifest_path);

  try {
    if (manifest.at("layout").get<std::string>() != "pairs") {
      throw FormatError(manifest_path + ": layout is not 'pairs'");
    }
    if (manifest.at("dtype").get<std::string>() != "f32le") {
      throw FormatError(manifest_path + ": unsupported dtype");
    }
    const int dim = manifest.at("dim").get<int>();
    if (dim < 1) {
      throw FormatError(manifest_path + ": dim must be >= 1");
    }
    const std::size_t count = manifest.at("count").get<std::size_t>();
    if (count % 2 != 0) {
      throw FormatError(manifest_path + ": pair layout requires even count");
    }
    const std::vector<float> blob = read_blob(blob_path);
    check_blob_size(manifest, blob.size(), blob_path);

    const std::size_t num_pairs = count / 2;
    const auto prompt_ids =
        manifest.at("prompt_ids").get<std::vector<std::int64_t>>();
    if (prompt_ids.size() != num_pairs) {
      throw FormatError(manifest_path + ": prompt_ids length " +
                        std::to_string(prompt_ids.size()) + " != pair count " +
                        std::to_string(num_pairs));
    }

    PairDataset ds;
    ds.dim = dim;
    ds.split = manifest.at("split").get<std::string>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.gold_digest = manifest.at("gold_spec_digest").get<std::string>();
    ds.pairs.resize(num_pairs);
    for (std::size_t i = 0; i < num_pairs; ++i) {
      PreferencePair& p = ds.pairs[i];
      p.prompt_id = prompt_ids[i];
      p.e_plus.resize(dim);
      p.e_minus.resize(dim);
      const float* base = blob.data() + i * 2 * dim;
      for (int k = 0; k < dim; ++k) p.e_plus[k] = base[k];
      for (int k = 0; k < dim; ++k) p.e_minus[k] = base[dim + k];
      validate_pair(p, dim, i);
    }
    if (manifest.contains("provenance")) {
      const auto prov = manifest["provenance"].get<std::vector<std::string>>();
      if (prov.size() != count) {
        throw FormatError(manifest_path + ": provenance length " +
                          std::to_string(prov.size()) + " != count " +
                          std::to_string(count));
      }
      ds.prov_plus.resize(num_pairs);
      ds.prov_minus.resize(num_pairs);
      for (std::size_t i = 0; i < num_pairs; ++i) {
        ds.prov_plus[i] = provenance_from_name(prov[2 * i], 2 * i);
        ds.prov_minus[i] = provenance_from_name(prov[2 * i + 1], 2 * i + 1);
      }
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }
}

void write_candidates(const CandidateDataset& ds, const std::string& path_stem) {
  if (ds.dim < 1) {
    throw FormatError("write_candidates: dim must be >= 1");
  }
  std::vector<float> blob;
  std::vector<std::int64_t> prompt_ids;
  std::size_t index = 0;
  for (const auto& set : ds.prompts) {
    for (const auto& e : set.embeddings) {
      if (static_cast<int>(e.size()) != ds.dim) {
        throw FormatError("record " + std::to_string(index) +
                          ": embedding length does not match dim " +
                          std::to_string(ds.dim));
      }
      for (double x : e) {
        if (!std::isfinite(x)) {
          throw FormatError("record " + std::to_string(index) +
                            ": non-finite value");
        }
        blob.push_back(static_cast<float>(x));
      }
      prompt_ids.push_back(set.prompt_id);
      ++index;
    }
  }

  nlohmann::json manifest;
  manifest["layout"] = "candidates";
  manifest["dim"] = ds.dim;
  manifest["count"] = index;
  manifest["dtype"] = "f32le";
  manifest["split"] = ds.split;
  manifest["seed"] = ds.seed;
  manifest["gold_spec_digest"] = ds.gold_digest;
  manifest["prompt_ids"] = prompt_ids;

  write_blob(path_stem + ".bin", blob);
  std::ofstream out(path_stem + ".manifest.json");
  if (!out) {
    throw IoError("cannot write manifest " + path_stem + ".manifest.json");
  }
  out << manifest.dump(2) << "\n";
}

CandidateDataset read_candidates(const std::string& path) {
  const std::string stem = stem_of(path);
  const std::string manifest_path = stem + ".manifest.json";
  const std::string blob_path = stem + ".bin";
  const nlohmann::json manifest = load_manifest(manifest_path);
  try {
    if (manifest.at("layout").get<std::string>() != "candidates") {
      throw FormatError(manifest_path + ": layout is not 'candidates'");
    }
    if (manifest.at("dtype").get<std::string>() != "f32le") {
      throw FormatError(manifest_path + ": unsupported dtype");
    }
    const int dim = manifest.at("dim").get<int>();
    if (dim < 1) {
      throw FormatError(manifest_path + ": dim must be >= 1");
    }
    const std::size_t count = manifest.at("count").get<std::size_t>();
    const std::vector<float> blob = read_blob(blob_path);
    check_blob_size(manifest, blob.size(), blob_path);
    const auto prompt_ids =
        manifest.at("prompt_ids").get<std::vector<std::int64_t>>();
    if (prompt_ids.size() != count) {
      throw FormatError(manifest_path + ": prompt_ids length != count");
    }

    CandidateDataset ds;
    ds.dim = dim;
    ds.split = manifest.at("split").get<std::string>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.gold_digest = manifest.at("gold_spec_digest").get<std::string>();
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<double> e(dim);
      const float* base = blob.data() + i * dim;
      for (int k = 0; k < dim; ++k) {
        if (!std::isfinite(base[k])) {
          throw FormatError("record " + std::to_string(i) + ": non-finite value");
        }
        e[k] = base[k];
      }
      if (ds.prompts.empty() || ds.prompts.back().prompt_id != prompt_ids[i]) {
        ds.prompts.push_back({prompt_ids[i], {}});
      }
      ds.prompts.back().embeddings.push_back(std::move(e));
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }
}

std::vector<std::vector<double>> all_embeddings(const PairDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.pairs.size() * 2);
  for (const auto& p : ds.pairs) {
    out.push_back(p.e_plus);
    out.push_back(p.e_minus);
  }
  return out;
}

}  // namespace lens
