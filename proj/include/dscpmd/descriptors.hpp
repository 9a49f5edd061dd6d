#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dscpmd/atlas.hpp"
#include "dscpmd/volume.hpp"

namespace dscpmd {

// Hartigan's dip statistic: largest vertical distance between the empirical
// CDF and the nearest unimodal CDF, halved. 0 for n <= 1 or constant input;
// otherwise in [1/(2n), 1/4].
double dip_statistic(std::vector<double> values);

// Quantile at position 1 + (n-1)*p with linear interpolation between order
// statistics (requires sorted input).
double quantile_sorted(const std::vector<double>& sorted, double p);

struct RegionStats {
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> sd;        // n-1 denominator; 0 when n == 1
  std::optional<double> iqr;
  std::optional<double> skewness;  // m3 / m2^1.5 (population moments)
  std::optional<double> kurtosis;  // m4 / m2^2 - 3
  std::optional<double> dip;
  std::size_t n = 0;
};

// All fields missing iff the sample is empty; skewness/kurtosis/dip missing
// iff n < 3 or sd == 0.
RegionStats region_stats(const std::vector<double>& values);

inline constexpr const char* kMapNames[4] = {"cbf", "cbv", "mtt", "tmax"};
inline constexpr const char* kStatNames[7] = {"mean", "median",   "sd",
                                              "iqr",  "skewness", "kurtosis",
                                              "dip"};

std::optional<double> stat_by_index(const RegionStats& s, int stat);

struct FeatureInfo {
  std::string name;     // {map}_{stat}_{RegionToken} or {map}_{stat}_asym_{BaseToken}
  int map = 0;          // index into kMapNames
  int stat = 0;         // index into kStatNames
  int region_id = 0;    // region id; for asym features, the left member's id
  bool asym = false;
};

// Region/base-name token: spaces replaced with underscores.
std::string region_token(const std::string& name);

struct ParsedFeatureName {
  int map = 0;
  int stat = 0;
  bool asym = false;
  std::string region_token;
};

// Parses "{map}_{stat}[_asym]_{token}". Throws format_error on unknown
// map/stat or malformed structure.
ParsedFeatureName parse_feature_name(const std::string& name);

// Bundles the four normalized maps for descriptor extraction.
struct PerMapVolumes {
  const Volume3D* maps[4] = {nullptr, nullptr, nullptr, nullptr};
};

struct PMDTable {
  std::vector<FeatureInfo> features;              // canonical order
  std::vector<std::string> subjects;              // row labels
  std::vector<std::string> classes;               // per-row class label
  std::vector<std::vector<std::optional<double>>> rows;  // [subject][feature]
};

// Canonical feature order for one subject: map-major over (cbf,cbv,mtt,tmax),
// then stat (mean..dip), then region in table order; followed by the
// asymmetry block in map/stat/pair order. asym = |left - right|, missing if
// either side is missing.
std::vector<FeatureInfo> canonical_features(const RegionTable& table,
                                            bool include_asym = true);

std::vector<std::optional<double>> extract_pmds(
    const PerMapVolumes& maps, const LabelVolume& labels,
    const RegionTable& table, bool include_asym = true);

void save_pmd_csv(const PMDTable& table, const std::string& path);
PMDTable load_pmd_csv(const std::string& path);
void save_pmd_json(const PMDTable& table, const std::string& path);

}  // namespace dscpmd
