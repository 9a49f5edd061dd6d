#include "dscpmd/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dscpmd/error.hpp"

namespace dscpmd {

namespace {

// 56 base structures; each appears as Left/Right with pair-interleaved ids
// (Left = 2b-1, Right = 2b for the b-th base), then the midline brainstem.
const char* const kBaseNames[56] = {
    "Frontal Pole",
    "Insular Cortex",
    "Superior Frontal Gyrus",
    "Middle Frontal Gyrus",
    "Inferior Frontal Gyrus pars triangularis",
    "Inferior Frontal Gyrus pars opercularis",
    "Precentral Gyrus",
    "Temporal Pole",
    "Superior Temporal Gyrus anterior division",
    "Superior Temporal Gyrus posterior division",
    "Middle Temporal Gyrus anterior division",
    "Middle Temporal Gyrus posterior division",
    "Middle Temporal Gyrus temporooccipital part",
    "Inferior Temporal Gyrus anterior division",
    "Inferior Temporal Gyrus posterior division",
    "Inferior Temporal Gyrus temporooccipital part",
    "Postcentral Gyrus",
    "Superior Parietal Lobule",
    "Supramarginal Gyrus anterior division",
    "Supramarginal Gyrus posterior division",
    "Angular Gyrus",
    "Lateral Occipital Cortex superior division",
    "Lateral Occipital Cortex inferior division",
    "Intracalcarine Cortex",
    "Frontal Medial Cortex",
    "Juxtapositional Lobule Cortex",
    "Subcallosal Cortex",
    "Paracingulate Gyrus",
    "Cingulate Gyrus anterior division",
    "Cingulate Gyrus posterior division",
    "Precuneous Cortex",
    "Cuneal Cortex",
    "Frontal Orbital Cortex",
    "Parahippocampal Gyrus anterior division",
    "Parahippocampal Gyrus posterior division",
    "Lingual Gyrus",
    "Temporal Fusiform Cortex anterior division",
    "Temporal Fusiform Cortex posterior division",
    "Temporal Occipital Fusiform Cortex",
    "Occipital Fusiform Gyrus",
    "Frontal Operculum Cortex",
    "Central Opercular Cortex",
    "Parietal Operculum Cortex",
    "Planum Polare",
    "Heschls Gyrus",
    "Planum Temporale",
    "Supracalcarine Cortex",
    "Occipital Pole",
    "Lateral Ventricle",
    "Thalamus",
    "Caudate",
    "Putamen",
    "Pallidum",
    "Hippocampus",
    "Amygdala",
    "Accumbens",
};

bool strip_prefix_ci(const std::string& name, const std::string& prefix,
                     std::string* rest) {
  if (name.size() <= prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(name[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  *rest = name.substr(prefix.size());
  return true;
}

std::string base_of(const Region& r) {
  std::string rest;
  if (strip_prefix_ci(r.name, "Left ", &rest)) return rest;
  if (strip_prefix_ci(r.name, "Right ", &rest)) return rest;
  return r.name;
}

}  // namespace

RegionTable::RegionTable(std::vector<Region> regions)
    : regions_(std::move(regions)) {
  if (regions_.empty()) {
    throw validation_error("region table is empty");
  }
  std::set<int> seen_ids;
  std::set<std::string> seen_names;
  for (const auto& r : regions_) {
    if (r.id <= 0) {
      throw validation_error("region id " + std::to_string(r.id) +
                             " must be positive");
    }
    if (!seen_ids.insert(r.id).second) {
      throw validation_error("duplicate region id " + std::to_string(r.id));
    }
    if (r.name.empty()) {
      throw validation_error("region " + std::to_string(r.id) +
                             " has an empty name");
    }
    if (r.name.find(',') != std::string::npos ||
        r.name.find('"') != std::string::npos) {
      throw validation_error("region name '" + r.name +
                             "' may not contain commas or quotes");
    }
    if (!seen_names.insert(r.name).second) {
      throw validation_error("duplicate region name '" + r.name + "'");
    }
    if (r.hemisphere != 'L' && r.hemisphere != 'R' && r.hemisphere != 'M') {
      throw validation_error("region '" + r.name +
                             "' has hemisphere '" +
                             std::string(1, r.hemisphere) +
                             "', expected L, R, or M");
    }
  }
  // Pair left/right regions by base name, in left-appearance order.
  std::map<std::string, int> right_by_base;
  for (const auto& r : regions_) {
    if (r.hemisphere == 'R') right_by_base[base_of(r)] = r.id;
  }
  std::set<int> paired;
  for (const auto& r : regions_) {
    if (r.hemisphere != 'L') continue;
    auto it = right_by_base.find(base_of(r));
    if (it == right_by_base.end()) continue;
    pairs_.push_back(RegionPair{base_of(r), r.id, it->second});
    paired.insert(r.id);
    paired.insert(it->second);
  }
  for (const auto& r : regions_) {
    if (!paired.count(r.id)) unpaired_.push_back(r.id);
  }
}

const Region* RegionTable::find(int id) const {
  for (const auto& r : regions_) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::vector<int> RegionTable::ids_with_name_containing(
    const std::string& needle) const {
  std::vector<int> out;
  for (const auto& r : regions_) {
    if (r.name.find(needle) != std::string::npos) out.push_back(r.id);
  }
  return out;
}

RegionTable load_region_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open region table '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw format_error("region table '" + path + "' is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,name,hemisphere") {
    throw format_error("region table '" + path +
                       "': header must be \"id,name,hemisphere\", got \"" +
                       line + "\"");
  }
  std::vector<Region> regions;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos
                                            : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos) {
      throw format_error("region table '" + path + "' line " +
                         std::to_string(lineno) +
                         ": expected exactly 3 comma-separated fields");
    }
    Region r;
    try {
      r.id = std::stoi(line.substr(0, c1));
    } catch (const std::exception&) {
      throw format_error("region table '" + path + "' line " +
                         std::to_string(lineno) + ": id field '" +
                         line.substr(0, c1) + "' is not an integer");
    }
    r.name = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string hemi = line.substr(c2 + 1);
    if (hemi.size() != 1) {
      throw format_error("region table '" + path + "' line " +
                         std::to_string(lineno) + ": hemisphere field '" +
                         hemi + "' must be a single character");
    }
    r.hemisphere = hemi[0];
    regions.push_back(std::move(r));
  }
  try {
    return RegionTable(std::move(regions));
  } catch (const validation_error& e) {
    throw format_error("region table '" + path + "': " + e.what());
  }
}

void save_region_table(const std::string& path, const RegionTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write region table '" + path + "'");
  out << "id,name,hemisphere\n";
  for (const auto& r : table.regions()) {
    out << r.id << ',' << r.name << ',' << r.hemisphere << '\n';
  }
  if (!out) throw io_error("failed writing region table '" + path + "'");
}

RegionTable default_region_table() {
  std::vector<Region> regions;
  regions.reserve(113);
  for (int b = 0; b < 56; ++b) {
    regions.push_back(
        Region{2 * b + 1, std::string("Left ") + kBaseNames[b], 'L'});
    regions.push_back(
        Region{2 * b + 2, std::string("Right ") + kBaseNames[b], 'R'});
  }
  regions.push_back(Region{113, "Brain-Stem", 'M'});
  return RegionTable(std::move(regions));
}

LabelVolume make_synthetic_labels(int nx, int ny, int nz,
                                  const std::array<double, 3>& spacing) {
  if (nx < 32 || nx % 2 != 0 || ny < 20 || nz < 4) {
    throw validation_error(
        "synthetic labels need nx even and >= 32, ny >= 20, nz >= 4; got " +
        std::to_string(nx) + "x" + std::to_string(ny) + "x" +
        std::to_string(nz));
  }
  LabelVolume v = LabelVolume::zeros(nx, ny, nz);
  v.spacing = spacing;
  v.affine = Affine::from_spacing(spacing[0], spacing[1], spacing[2]);

  const int mx = nx / 2;
  const int x0 = 2, x1 = mx - 3;            // left hemisphere block
  const int y0 = 2, y1 = ny - 3;
  const int z0 = 1, z1 = nz - 2;
  const int xw = (x1 - x0 + 1) / 4;         // 4 columns of paired regions
  const int yw = (y1 - y0 + 1) / 14;        // 14 rows; remainder to the last

  for (int z = z0; z <= z1; ++z) {
    for (int y = y0; y <= y1; ++y) {
      int yi = (y - y0) / yw;
      if (yi > 13) yi = 13;
      for (int x = x0; x <= x1; ++x) {
        int xi = (x - x0) / xw;
        if (xi > 3) xi = 3;
        const int base = xi * 14 + yi;  // 0..55
        v.at(x, y, z) = 2 * base + 1;
        v.at(nx - 1 - x, y, z) = 2 * base + 2;
      }
    }
  }

  // Midline brainstem: bridges the hemisphere blocks (face-adjacency on both
  // sides) while the rest of the 4-voxel midline gap stays background.
  const int by0 = ny / 2 - 3;
  const int bz0 = (nz - 4) / 2;
  for (int z = bz0; z < bz0 + 4; ++z) {
    for (int y = by0; y < by0 + 6; ++y) {
      for (int x = mx - 2; x <= mx + 1; ++x) {
        v.at(x, y, z) = 113;
      }
    }
  }
  return v;
}

LabelVolume resample_labels_nn(const LabelVolume& labels,
                               const std::optional<Affine>& label_affine,
                               int ref_nx, int ref_ny, int ref_nz,
                               const std::array<double, 3>& ref_spacing,
                               const Affine& ref_affine) {
  const Affine lab = label_affine ? *label_affine : labels.affine;
  const Affine world_to_label = lab.inverse();
  const Affine ref_to_label = world_to_label.mul(ref_affine);

  LabelVolume out = LabelVolume::zeros(ref_nx, ref_ny, ref_nz);
  out.spacing = ref_spacing;
  out.affine = ref_affine;
  for (int k = 0; k < ref_nz; ++k) {
    for (int j = 0; j < ref_ny; ++j) {
      for (int i = 0; i < ref_nx; ++i) {
        const auto p = ref_to_label.apply(i, j, k);
        const int x = static_cast<int>(std::lround(p[0]));
        const int y = static_cast<int>(std::lround(p[1]));
        const int z = static_cast<int>(std::lround(p[2]));
        if (x < 0 || x >= labels.nx || y < 0 || y >= labels.ny || z < 0 ||
            z >= labels.nz) {
          continue;
        }
        out.at(i, j, k) = labels.at(x, y, z);
      }
    }
  }
  return out;
}

Affine load_affine_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open affine file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("affine file '" + path +
                       "' is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("affine")) j = j["affine"];
  std::vector<double> flat;
  if (j.is_array() && j.size() == 16) {
    for (const auto& e : j) {
      if (!e.is_number()) {
        throw format_error("affine file '" + path +
                           "': entries must be numbers");
      }
      flat.push_back(e.get<double>());
    }
  } else if (j.is_array() && j.size() == 4) {
    for (const auto& row : j) {
      if (!row.is_array() || row.size() != 4) {
        throw format_error("affine file '" + path +
                           "': expected 4 rows of 4 numbers");
      }
      for (const auto& e : row) {
        if (!e.is_number()) {
          throw format_error("affine file '" + path +
                             "': entries must be numbers");
        }
        flat.push_back(e.get<double>());
      }
    }
  } else {
    throw format_error("affine file '" + path +
                       "': expected 16 numbers (row-major) or a 4x4 array");
  }
  Affine a;
  std::copy(flat.begin(), flat.end(), a.m.begin());
  return a;
}

}  // namespace dscpmd
