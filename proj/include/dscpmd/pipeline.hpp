#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dscpmd/atlas.hpp"
#include "dscpmd/descriptors.hpp"
#include "dscpmd/model.hpp"
#include "dscpmd/perfusion.hpp"
#include "dscpmd/stats.hpp"
#include "dscpmd/volume.hpp"

namespace dscpmd {

struct PipelineConfig {
  // deconvolution
  double svd_fraction = 0.2;
  int svd_min_keep = 1;
  // AIF search
  std::set<int> aif_search_ids;  // empty = all labeled voxels
  int aif_top_voxels = 5;
  double aif_arrival_frac = 0.10;
  // acquisition fallbacks (used when neither header nor sidecar supplies them)
  double default_tr = 1.5;
  double default_te = 0.030;
  // descriptors
  bool include_asym = true;
  // screening
  double alpha = 0.05;
  double min_effect = 0.3;
  int multiplicity = 0;  // 0 = number of regions (or pairs for asym)
  // classifier
  double lambda = 1.0;
  int bootstrap_samples = 5000;
  std::uint64_t seed = 20240817;
  // execution
  int threads = 1;
  std::string region_table_path;  // empty = built-in table

  std::uint64_t hash() const;  // FNV-1a over the canonical JSON encoding
  std::string to_json() const;
};

PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig default_pipeline_config();

// --- cohort discovery ---------------------------------------------------------

struct SubjectEntry {
  std::string id;
  std::string class_label;
  std::string dsc_path;
  std::string labels_path;
  std::string mask_path;    // empty when absent
  std::string affine_path;  // empty when absent
};

// Expects <root>/<class>/<subject>/dsc.nii with labels.nii beside it and
// optional mask.nii / affine.json. Exactly two class directories are
// required for screening and classification. Throws io_error when the layout
// does not match.
std::vector<SubjectEntry> discover_cohort(const std::string& root);

// --- per-subject processing ----------------------------------------------------

struct SubjectResult {
  std::string id;
  std::string class_label;
  PerfusionMaps maps_raw;    // deconvolution outputs in native units
  PerfusionMaps maps;        // normalized (or raw when a mean was zero)
  Mask3D mask;
  LabelVolume labels;        // resampled onto the DSC grid
  AifResult aif;
  int baseline_end = 0;
  std::vector<std::optional<double>> pmds;
  std::vector<std::string> warnings;
};

SubjectResult run_subject(const SubjectEntry& entry, const PipelineConfig& cfg,
                          const RegionTable& table);

// Writes the eight map volumes (raw + normalized) and aif.json into out_dir.
void write_subject_outputs(const SubjectResult& r, const std::string& out_dir);

// --- cohort-level runs ----------------------------------------------------------

struct CohortTables {
  PMDTable pmds;            // regional + asym columns in canonical order
  std::vector<std::string> class_names;  // sorted; [1] is the positive class
  std::vector<std::string> warnings;     // skipped subjects, normalization notes
};

CohortTables run_cohort(const std::vector<SubjectEntry>& subjects,
                        const PipelineConfig& cfg, const RegionTable& table,
                        const std::string& out_root,
                        bool write_maps = false);

// Splits table rows by class and screens regional (asym = false) or
// asymmetry (asym = true) columns.
ScreenResult screen_cohort(const PMDTable& pmds, const RegionTable& table,
                           const PipelineConfig& cfg, bool asym);

struct ClassifyResult {
  CVReport report;
  LogisticModel full_model;      // fit on all rows (standardized space)
  Preprocessor preprocessor;
  std::vector<std::string> feature_names;
};

ClassifyResult classify_cohort(const PMDTable& pmds, const PipelineConfig& cfg,
                               bool regional_only = false);

struct ShapReport {
  ShapResult shap;
  std::vector<std::string> feature_names;
  std::vector<GroupImportance> by_map;
  std::vector<GroupImportance> by_stat;
  std::vector<GroupImportance> by_region;
};

// SHAP on the full-fit model over all standardized rows. Asymmetry features
// contribute half weight to each paired region; their statistic group is the
// asym variant of the base statistic.
ShapReport shap_cohort(const ClassifyResult& model, const PMDTable& pmds,
                       const RegionTable& table);

void save_cv_report(const CVReport& r, std::uint64_t config_hash,
                    const std::string& path);
void save_shap_report(const ShapReport& r, std::uint64_t config_hash,
                      const std::string& path_json,
                      const std::string& path_csv);

// FNV-1a 64-bit.
std::uint64_t fnv1a64(const std::string& s);

}  // namespace dscpmd
