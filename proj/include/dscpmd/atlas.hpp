#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dscpmd/volume.hpp"

namespace dscpmd {

struct Region {
  int id = 0;
  std::string name;
  char hemisphere = 'M';  // 'L', 'R', or 'M'
};

struct RegionPair {
  std::string base_name;  // name minus the Left/Right prefix
  int left_id = 0;
  int right_id = 0;
};

class RegionTable {
 public:
  explicit RegionTable(std::vector<Region> regions);

  const std::vector<Region>& regions() const { return regions_; }
  std::size_t size() const { return regions_.size(); }
  const Region* find(int id) const;
  // Left/Right pairs matched by base name, in first-appearance order.
  const std::vector<RegionPair>& pairs() const { return pairs_; }
  // Regions that belong to no pair (e.g. the brainstem).
  const std::vector<int>& unpaired() const { return unpaired_; }
  // ids whose name contains the given substring (case-sensitive).
  std::vector<int> ids_with_name_containing(const std::string& needle) const;

 private:
  std::vector<Region> regions_;
  std::vector<RegionPair> pairs_;
  std::vector<int> unpaired_;
};

// CSV with header "id,name,hemisphere"; hemisphere in {L,R,M}.
RegionTable load_region_table(const std::string& path);
void save_region_table(const std::string& path, const RegionTable& table);

// The shipped 113-region table: 49 cortical + 7 subcortical names per
// hemisphere (ids pair-interleaved) plus Brain-Stem (M, id 113).
RegionTable default_region_table();

// Deterministic synthetic label volume covering all 113 default-table
// regions: mirrored boxes left/right of the midline plus a midline
// brainstem box bridging the hemispheres. Requires nx even, nx >= 32,
// ny >= 20, nz >= 4.
LabelVolume make_synthetic_labels(int nx, int ny, int nz,
                                  const std::array<double, 3>& spacing);

// Nearest-neighbour resampling of labels onto a reference grid. The
// label volume's voxel-to-world transform may be overridden (e.g. from a
// 16-number row-major JSON). Reference voxels mapping outside the label
// grid get 0.
LabelVolume resample_labels_nn(const LabelVolume& labels,
                               const std::optional<Affine>& label_affine,
                               int ref_nx, int ref_ny, int ref_nz,
                               const std::array<double, 3>& ref_spacing,
                               const Affine& ref_affine);

Affine load_affine_json(const std::string& path);

}  // namespace dscpmd
