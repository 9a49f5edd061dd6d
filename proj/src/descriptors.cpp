#include "dscpmd/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "dscpmd/error.hpp"

namespace dscpmd {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) {
    throw validation_error("quantile of an empty sample");
  }
  const std::size_t n = sorted.size();
  const double h = 1.0 + (static_cast<double>(n) - 1.0) * p;  // 1-based
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  if (lo >= n) return sorted[n - 1];
  if (frac == 0.0) return sorted[lo - 1];
  return sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]);
}

RegionStats region_stats(const std::vector<double>& values) {
  RegionStats s;
  s.n = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());

  double sum = 0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  s.mean = mean;

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = sorted.size() / 2;
  s.median = sorted.size() % 2 == 1
                 ? sorted[half]
                 : 0.5 * (sorted[half - 1] + sorted[half]);
  s.iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);

  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.sd = values.size() == 1 ? 0.0 : std::sqrt(m2 * n / (n - 1.0));

  if (values.size() >= 3 && m2 > 0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2) - 3.0;
    s.dip = dip_statistic(values);
  }
  return s;
}

std::optional<double> stat_by_index(const RegionStats& s, int stat) {
  switch (stat) {
    case 0: return s.mean;
    case 1: return s.median;
    case 2: return s.sd;
    case 3: return s.iqr;
    case 4: return s.skewness;
    case 5: return s.kurtosis;
    case 6: return s.dip;
    default: throw validation_error("statistic index out of range");
  }
}

std::string region_token(const std::string& name) {
  std::string out = name;
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

ParsedFeatureName parse_feature_name(const std::string& name) {
  const auto u1 = name.find('_');
  const auto u2 = u1 == std::string::npos ? std::string::npos
                                          : name.find('_', u1 + 1);
  if (u1 == std::string::npos || u2 == std::string::npos ||
      u2 + 1 >= name.size()) {
    throw format_error("feature name '" + name +
                       "' does not match {map}_{stat}[_asym]_{region}");
  }
  ParsedFeatureName out;
  const std::string map_tok = name.substr(0, u1);
  const std::string stat_tok = name.substr(u1 + 1, u2 - u1 - 1);
  out.map = -1;
  for (int i = 0; i < 4; ++i) {
    if (map_tok == kMapNames[i]) out.map = i;
  }
  if (out.map < 0) {
    throw format_error("feature name '" + name + "': unknown map '" +
                       map_tok + "'");
  }
  out.stat = -1;
  for (int i = 0; i < 7; ++i) {
    if (stat_tok == kStatNames[i]) out.stat = i;
  }
  if (out.stat < 0) {
    throw format_error("feature name '" + name + "': unknown statistic '" +
                       stat_tok + "'");
  }
  std::string rest = name.substr(u2 + 1);
  if (rest.rfind("asym_", 0) == 0 && rest.size() > 5) {
    out.asym = true;
    rest = rest.substr(5);
  }
  out.region_token = rest;
  return out;
}

std::vector<FeatureInfo> canonical_features(const RegionTable& table,
                                            bool include_asym) {
  std::vector<FeatureInfo> out;
  const std::size_t n_regional = 4u * 7u * table.size();
  const std::size_t n_asym = include_asym ? 4u * 7u * table.pairs().size() : 0u;
  out.reserve(n_regional + n_asym);
  for (int map = 0; map < 4; ++map) {
    for (int stat = 0; stat < 7; ++stat) {
      for (const auto& r : table.regions()) {
        FeatureInfo f;
        f.name = std::string(kMapNames[map]) + "_" + kStatNames[stat] + "_" +
                 region_token(r.name);
        f.map = map;
        f.stat = stat;
        f.region_id = r.id;
        f.asym = false;
        out.push_back(std::move(f));
      }
    }
  }
  if (include_asym) {
    for (int map = 0; map < 4; ++map) {
      for (int stat = 0; stat < 7; ++stat) {
        for (const auto& pair : table.pairs()) {
          FeatureInfo f;
          f.name = std::string(kMapNames[map]) + "_" + kStatNames[stat] +
                   "_asym_" + region_token(pair.base_name);
          f.map = map;
          f.stat = stat;
          f.region_id = pair.left_id;
          f.asym = true;
          out.push_back(std::move(f));
        }
      }
    }
  }
  return out;
}

std::vector<std::optional<double>> extract_pmds(const PerMapVolumes& maps,
                                                const LabelVolume& labels,
                                                const RegionTable& table,
                                                bool include_asym) {
  for (const auto* m : maps.maps) {
    if (m == nullptr) {
      throw validation_error("all four maps are required for descriptors");
    }
    if (m->nx != labels.nx || m->ny != labels.ny || m->nz != labels.nz) {
      throw validation_error("map and label dimensions differ");
    }
  }

  // Collect per-region samples for each map in one pass over the labels.
  std::map<int, std::size_t> region_index;
  for (std::size_t i = 0; i < table.regions().size(); ++i) {
    region_index[table.regions()[i].id] = i;
  }
  std::vector<std::vector<std::vector<double>>> samples(
      4, std::vector<std::vector<double>>(table.size()));
  for (std::size_t v = 0; v < labels.data.size(); ++v) {
    const std::int32_t id = labels.data[v];
    if (id <= 0) continue;
    const auto it = region_index.find(id);
    if (it == region_index.end()) continue;  // label not in the table
    for (int map = 0; map < 4; ++map) {
      samples[static_cast<std::size_t>(map)][it->second].push_back(
          maps.maps[static_cast<std::size_t>(map)]->data[v]);
    }
  }

  std::vector<std::vector<RegionStats>> stats(
      4, std::vector<RegionStats>(table.size()));
  for (int map = 0; map < 4; ++map) {
    for (std::size_t r = 0; r < table.size(); ++r) {
      stats[static_cast<std::size_t>(map)][r] =
          region_stats(samples[static_cast<std::size_t>(map)][r]);
    }
  }

  std::vector<std::optional<double>> out;
  out.reserve(4u * 7u * (table.size() + (include_asym ? table.pairs().size() : 0u)));
  for (int map = 0; map < 4; ++map) {
    for (int stat = 0; stat < 7; ++stat) {
      for (std::size_t r = 0; r < table.size(); ++r) {
        out.push_back(
            stat_by_index(stats[static_cast<std::size_t>(map)][r], stat));
      }
    }
  }
  if (include_asym) {
    for (int map = 0; map < 4; ++map) {
      for (int stat = 0; stat < 7; ++stat) {
        for (const auto& pair : table.pairs()) {
          const auto left = stat_by_index(
              stats[static_cast<std::size_t>(map)][region_index[pair.left_id]],
              stat);
          const auto right = stat_by_index(
              stats[static_cast<std::size_t>(map)][region_index[pair.right_id]],
              stat);
          if (left && right) {
            out.push_back(std::abs(*left - *right));
          } else {
            out.push_back(std::nullopt);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace dscpmd
