#include <fstream>
#include <set>

#include <json.hpp>

#include "dscpmd/error.hpp"
#include "dscpmd/pipeline.hpp"

namespace dscpmd {

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

nlohmann::json config_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["svd_fraction"] = c.svd_fraction;
  j["svd_min_keep"] = c.svd_min_keep;
  j["aif_search_ids"] = c.aif_search_ids;  // std::set: already sorted
  j["aif_top_voxels"] = c.aif_top_voxels;
  j["aif_arrival_frac"] = c.aif_arrival_frac;
  j["default_tr"] = c.default_tr;
  j["default_te"] = c.default_te;
  j["include_asym"] = c.include_asym;
  j["alpha"] = c.alpha;
  j["min_effect"] = c.min_effect;
  j["multiplicity"] = c.multiplicity;
  j["lambda"] = c.lambda;
  j["bootstrap_samples"] = c.bootstrap_samples;
  j["seed"] = c.seed;
  j["region_table_path"] = c.region_table_path;
  // `threads` is deliberately absent: it is an execution detail and outputs
  // must be identical for any thread count.
  return j;
}

}  // namespace

std::string PipelineConfig::to_json() const {
  return config_json(*this).dump(2);
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(to_json()); }

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  // The default AIF search region: the cingulate pair ids of the shipped
  // region table, which carry the arterial-like signal in the phantom too.
  c.aif_search_ids = {57, 58, 59, 60};
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) {
    throw format_error("config '" + path + "' must be a JSON object");
  }
  static const std::set<std::string> known = {
      "svd_fraction",   "svd_min_keep",     "aif_search_ids",
      "aif_top_voxels", "aif_arrival_frac", "default_tr",
      "default_te",     "include_asym",     "alpha",
      "min_effect",     "multiplicity",     "lambda",
      "bootstrap_samples", "seed",          "threads",
      "region_table_path"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) {
      throw format_error("config '" + path + "': unknown key '" + key + "'");
    }
  }
  PipelineConfig c = default_pipeline_config();
  try {
    if (j.contains("svd_fraction")) c.svd_fraction = j["svd_fraction"].get<double>();
    if (j.contains("svd_min_keep")) c.svd_min_keep = j["svd_min_keep"].get<int>();
    if (j.contains("aif_search_ids")) {
      c.aif_search_ids.clear();
      for (const auto& e : j["aif_search_ids"]) {
        c.aif_search_ids.insert(e.get<int>());
      }
    }
    if (j.contains("aif_top_voxels")) c.aif_top_voxels = j["aif_top_voxels"].get<int>();
    if (j.contains("aif_arrival_frac")) c.aif_arrival_frac = j["aif_arrival_frac"].get<double>();
    if (j.contains("default_tr")) c.default_tr = j["default_tr"].get<double>();
    if (j.contains("default_te")) c.default_te = j["default_te"].get<double>();
    if (j.contains("include_asym")) c.include_asym = j["include_asym"].get<bool>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("min_effect")) c.min_effect = j["min_effect"].get<double>();
    if (j.contains("multiplicity")) c.multiplicity = j["multiplicity"].get<int>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("bootstrap_samples")) c.bootstrap_samples = j["bootstrap_samples"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("region_table_path")) c.region_table_path = j["region_table_path"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error("config '" + path + "': " + e.what());
  }

  if (c.svd_fraction < 0 || c.svd_fraction >= 1) {
    throw format_error("config '" + path + "': svd_fraction must be in [0, 1)");
  }
  if (c.svd_min_keep < 1) {
    throw format_error("config '" + path + "': svd_min_keep must be >= 1");
  }
  if (c.aif_top_voxels < 1) {
    throw format_error("config '" + path + "': aif_top_voxels must be >= 1");
  }
  if (!(c.aif_arrival_frac > 0) || c.aif_arrival_frac >= 1) {
    throw format_error("config '" + path +
                       "': aif_arrival_frac must be in (0, 1)");
  }
  if (!(c.default_tr > 0) || !(c.default_te > 0)) {
    throw format_error("config '" + path +
                       "': default_tr and default_te must be positive");
  }
  if (!(c.alpha > 0) || c.alpha >= 1) {
    throw format_error("config '" + path + "': alpha must be in (0, 1)");
  }
  if (c.min_effect < 0) {
    throw format_error("config '" + path + "': min_effect must be >= 0");
  }
  if (!(c.lambda > 0)) {
    throw format_error("config '" + path + "': lambda must be positive");
  }
  if (c.bootstrap_samples < 2) {
    throw format_error("config '" + path + "': bootstrap_samples must be >= 2");
  }
  if (c.threads < 1) {
    throw format_error("config '" + path + "': threads must be >= 1");
  }
  return c;
}

}  // namespace dscpmd
