#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dscpmd/error.hpp"
#include "dscpmd/mask.hpp"
#include "dscpmd/nifti.hpp"
#include "dscpmd/parallel.hpp"
#include "dscpmd/pipeline.hpp"
#include "dscpmd/rng.hpp"
#include "internal_util.hpp"

namespace fs = std::filesystem;

namespace dscpmd {

namespace {

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << h;
  return os.str();
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory()) continue;
    const std::string name = e.path().filename().string();
    if (!name.empty() && name[0] != '.') names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> sorted_class_names(
    const std::vector<std::string>& labels) {
  std::vector<std::string> names(labels);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

void require_two_classes(const std::vector<std::string>& names,
                         const char* what) {
  if (names.size() != 2) {
    throw validation_error(std::string(what) +
                           " requires exactly two classes, found " +
                           std::to_string(names.size()));
  }
}

// Column subset of the PMD table: x (missing -> 0), presence flags, names.
struct ColumnSubset {
  std::vector<int> cols;
  std::vector<std::string> names;
  Matrix x;
  std::vector<std::vector<bool>> present;
};

ColumnSubset select_columns(const PMDTable& pmds, bool regional_only) {
  ColumnSubset s;
  for (std::size_t j = 0; j < pmds.features.size(); ++j) {
    if (regional_only && pmds.features[j].asym) continue;
    s.cols.push_back(static_cast<int>(j));
    s.names.push_back(pmds.features[j].name);
  }
  s.x.resize(pmds.rows.size());
  s.present.resize(pmds.rows.size());
  for (std::size_t i = 0; i < pmds.rows.size(); ++i) {
    s.x[i].resize(s.cols.size(), 0.0);
    s.present[i].resize(s.cols.size(), false);
    for (std::size_t k = 0; k < s.cols.size(); ++k) {
      const auto& cell = pmds.rows[i][static_cast<std::size_t>(s.cols[k])];
      if (cell.has_value()) {
        s.x[i][k] = *cell;
        s.present[i][k] = true;
      }
    }
  }
  return s;
}

}  // namespace

std::vector<SubjectEntry> discover_cohort(const std::string& root) {
  const fs::path r(root);
  if (!fs::exists(r) || !fs::is_directory(r)) {
    throw io_error("cohort root '" + root + "' is not a directory");
  }
  const auto classes = sorted_subdirs(r);
  if (classes.empty()) {
    throw io_error("cohort root '" + root + "' contains no class directories");
  }
  std::vector<SubjectEntry> out;
  for (const auto& cls : classes) {
    const fs::path cdir = r / cls;
    for (const auto& subj : sorted_subdirs(cdir)) {
      const fs::path sdir = cdir / subj;
      SubjectEntry e;
      e.id = subj;
      e.class_label = cls;
      e.dsc_path = (sdir / "dsc.nii").string();
      e.labels_path = (sdir / "labels.nii").string();
      if (!fs::exists(e.dsc_path)) {
        throw io_error("subject '" + sdir.string() + "' has no dsc.nii");
      }
      if (!fs::exists(e.labels_path)) {
        throw io_error("subject '" + sdir.string() + "' has no labels.nii");
      }
      if (fs::exists(sdir / "mask.nii")) e.mask_path = (sdir / "mask.nii").string();
      if (fs::exists(sdir / "affine.json")) {
        e.affine_path = (sdir / "affine.json").string();
      }
      out.push_back(std::move(e));
    }
  }
  if (out.empty()) {
    throw io_error("cohort root '" + root + "' contains no subjects");
  }
  return out;
}

SubjectResult run_subject(const SubjectEntry& entry, const PipelineConfig& cfg,
                          const RegionTable& table) {
  SubjectResult r;
  r.id = entry.id;
  r.class_label = entry.class_label;

  Volume4D dsc = read_nifti_4d(entry.dsc_path, cfg.default_tr, cfg.default_te);
  canonicalize_ras(dsc);

  Mask3D mask;
  if (!entry.mask_path.empty()) {
    LabelVolume m = read_nifti_labels(entry.mask_path);
    canonicalize_ras(m);
    if (m.nx != dsc.nx || m.ny != dsc.ny || m.nz != dsc.nz) {
      throw validation_error("mask '" + entry.mask_path +
                             "' does not match the DSC grid");
    }
    mask = Mask3D::full(m.nx, m.ny, m.nz, false);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      mask.data[i] = m.data[i] != 0 ? 1 : 0;
    }
  } else {
    mask = brain_mask(extract_timepoint(dsc, 0));
  }

  // Labels stay in their native orientation: nearest-neighbour resampling is
  // driven entirely by world coordinates, which an optional affine override
  // (describing the on-disk voxel grid) replaces.
  LabelVolume labels_native = read_nifti_labels(entry.labels_path);
  std::optional<Affine> label_affine;
  if (!entry.affine_path.empty()) {
    label_affine = load_affine_json(entry.affine_path);
  }
  r.labels = resample_labels_nn(labels_native, label_affine, dsc.nx, dsc.ny,
                                dsc.nz, dsc.spacing, dsc.affine);

  ConcentrationResult conc = signal_to_concentration(dsc, mask, dsc.te);
  r.baseline_end = conc.baseline_end;

  AifConfig acfg;
  acfg.top_voxels = cfg.aif_top_voxels;
  acfg.arrival_frac = cfg.aif_arrival_frac;
  r.aif = select_aif(conc.conc, conc.valid, r.labels, cfg.aif_search_ids, acfg);

  TsvdConfig tsvd;
  tsvd.fraction = cfg.svd_fraction;
  tsvd.min_keep = cfg.svd_min_keep;
  // The analysis mask: brain voxels with a usable baseline.
  r.mask = conc.valid;
  r.maps_raw = compute_maps(conc.conc, r.mask, r.aif.curve, tsvd, cfg.threads);

  r.maps = r.maps_raw;
  Volume3D* norm[4] = {&r.maps.cbf, &r.maps.cbv, &r.maps.mtt, &r.maps.tmax};
  for (int m = 0; m < 4; ++m) {
    try {
      normalize_map(*norm[m], r.mask);
    } catch (const processing_error& e) {
      r.warnings.push_back(std::string(kMapNames[m]) +
                           " map left unnormalized: " + e.what());
    }
  }

  PerMapVolumes pm;
  pm.maps[0] = &r.maps.cbf;
  pm.maps[1] = &r.maps.cbv;
  pm.maps[2] = &r.maps.mtt;
  pm.maps[3] = &r.maps.tmax;
  r.pmds = extract_pmds(pm, r.labels, table, cfg.include_asym);
  return r;
}

void write_subject_outputs(const SubjectResult& r, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const Volume3D* raw[4] = {&r.maps_raw.cbf, &r.maps_raw.cbv, &r.maps_raw.mtt,
                            &r.maps_raw.tmax};
  const Volume3D* norm[4] = {&r.maps.cbf, &r.maps.cbv, &r.maps.mtt,
                             &r.maps.tmax};
  for (int m = 0; m < 4; ++m) {
    write_nifti((dir / (std::string(kMapNames[m]) + ".nii")).string(), *raw[m]);
    write_nifti((dir / (std::string(kMapNames[m]) + "_norm.nii")).string(),
                *norm[m]);
  }
  nlohmann::json j;
  j["curve"] = r.aif.curve;
  j["slice"] = r.aif.slice;
  j["score"] = r.aif.score;
  j["baseline_end"] = r.baseline_end;
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& s : r.aif.slices) {
    slices.push_back({{"slice", s.slice},
                      {"score", s.score},
                      {"candidates", s.candidates}});
  }
  j["slices"] = slices;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  std::ofstream out(dir / "aif.json");
  if (!out) throw io_error("cannot write '" + (dir / "aif.json").string() + "'");
  out << j.dump(2) << "\n";
}

CohortTables run_cohort(const std::vector<SubjectEntry>& subjects,
                        const PipelineConfig& cfg, const RegionTable& table,
                        const std::string& out_root, bool write_maps) {
  if (subjects.empty()) throw validation_error("cohort is empty");
  CohortTables out;
  out.pmds.features = canonical_features(table, cfg.include_asym);

  // Subject-level parallelism; inner voxel-level parallelism only when the
  // subjects themselves run serially. Results land in per-subject slots, so
  // aggregation order never depends on the thread count.
  const std::size_t n = subjects.size();
  const bool parallel_subjects = cfg.threads > 1 && n > 1;
  PipelineConfig sub_cfg = cfg;
  if (parallel_subjects) sub_cfg.threads = 1;

  std::vector<std::optional<SubjectResult>> results(n);
  std::vector<std::string> failures(n);
  parallel_for(n, parallel_subjects ? cfg.threads : 1,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   try {
                     SubjectResult r = run_subject(subjects[i], sub_cfg, table);
                     if (write_maps) {
                       const fs::path dir = fs::path(out_root) /
                                            subjects[i].class_label /
                                            subjects[i].id;
                       write_subject_outputs(r, dir.string());
                     }
                     results[i] = std::move(r);
                   } catch (const error& ex) {
                     failures[i] = ex.what();
                   }
                 }
               });

  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i].has_value()) {
      out.warnings.push_back("subject '" + subjects[i].id + "' (" +
                             subjects[i].class_label +
                             ") skipped: " + failures[i]);
      continue;
    }
    SubjectResult& r = *results[i];
    for (const auto& w : r.warnings) {
      out.warnings.push_back("subject '" + r.id + "': " + w);
    }
    out.pmds.subjects.push_back(r.id);
    out.pmds.classes.push_back(r.class_label);
    out.pmds.rows.push_back(std::move(r.pmds));
    labels.push_back(r.class_label);
  }
  if (out.pmds.rows.empty()) {
    throw processing_error("every subject in the cohort failed; first error: " +
                           failures[0]);
  }
  out.class_names = sorted_class_names(labels);
  return out;
}

ScreenResult screen_cohort(const PMDTable& pmds, const RegionTable& table,
                           const PipelineConfig& cfg, bool asym) {
  const auto classes = sorted_class_names(pmds.classes);
  require_two_classes(classes, "screening");
  const std::string& positive = classes[1];

  std::vector<std::string> names;
  std::vector<int> cols;
  for (std::size_t j = 0; j < pmds.features.size(); ++j) {
    if (pmds.features[j].asym != asym) continue;
    cols.push_back(static_cast<int>(j));
    names.push_back(pmds.features[j].name);
  }
  if (names.empty()) {
    throw validation_error(asym ? "table has no asymmetry columns"
                                : "table has no regional columns");
  }

  std::vector<std::vector<std::optional<double>>> group_a, group_b;
  for (std::size_t i = 0; i < pmds.rows.size(); ++i) {
    std::vector<std::optional<double>> row(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      row[k] = pmds.rows[i][static_cast<std::size_t>(cols[k])];
    }
    if (pmds.classes[i] == positive) {
      group_a.push_back(std::move(row));
    } else {
      group_b.push_back(std::move(row));
    }
  }

  const int multiplicity =
      cfg.multiplicity > 0
          ? cfg.multiplicity
          : static_cast<int>(asym ? table.pairs().size() : table.size());
  return screen_features(names, group_a, group_b, multiplicity, cfg.alpha,
                         cfg.min_effect);
}

ClassifyResult classify_cohort(const PMDTable& pmds, const PipelineConfig& cfg,
                               bool regional_only) {
  const auto classes = sorted_class_names(pmds.classes);
  require_two_classes(classes, "classification");
  const std::string& negative = classes[0];
  const std::string& positive = classes[1];

  ColumnSubset s = select_columns(pmds, regional_only);
  std::vector<int> y(pmds.rows.size());
  for (std::size_t i = 0; i < pmds.rows.size(); ++i) {
    y[i] = pmds.classes[i] == positive ? 1 : -1;
  }

  LogisticConfig lcfg;
  lcfg.lambda = cfg.lambda;

  ClassifyResult out;
  out.feature_names = s.names;
  out.report = loo_cv(s.x, s.present, y, pmds.subjects, positive, negative,
                      lcfg, cfg.threads);
  const BootstrapResult bs = bootstrap_auc_ci(
      out.report.truth, out.report.probabilities, cfg.bootstrap_samples,
      cfg.seed);
  out.report.auc_ci_low = bs.low;
  out.report.auc_ci_high = bs.high;
  out.report.bootstrap_samples = cfg.bootstrap_samples;
  out.report.seed = cfg.seed;

  out.preprocessor.fit(s.x, s.present);
  const Matrix z = out.preprocessor.transform(s.x, s.present);
  out.full_model = fit_logistic(z, y, balanced_weights(y), lcfg);
  return out;
}

ShapReport shap_cohort(const ClassifyResult& model, const PMDTable& pmds,
                       const RegionTable& table) {
  // Rebuild the model's design matrix by matching feature names.
  std::map<std::string, int> col_of;
  for (std::size_t j = 0; j < pmds.features.size(); ++j) {
    col_of[pmds.features[j].name] = static_cast<int>(j);
  }
  Matrix x(pmds.rows.size());
  std::vector<std::vector<bool>> present(pmds.rows.size());
  for (std::size_t i = 0; i < pmds.rows.size(); ++i) {
    x[i].resize(model.feature_names.size(), 0.0);
    present[i].resize(model.feature_names.size(), false);
  }
  for (std::size_t k = 0; k < model.feature_names.size(); ++k) {
    auto it = col_of.find(model.feature_names[k]);
    if (it == col_of.end()) {
      throw validation_error("table lacks model feature '" +
                             model.feature_names[k] + "'");
    }
    for (std::size_t i = 0; i < pmds.rows.size(); ++i) {
      const auto& cell = pmds.rows[i][static_cast<std::size_t>(it->second)];
      if (cell.has_value()) {
        x[i][k] = *cell;
        present[i][k] = true;
      }
    }
  }

  ShapReport rep;
  rep.feature_names = model.feature_names;
  const Matrix z = model.preprocessor.transform(x, present);
  rep.shap = linear_shap(z, model.full_model.weights,
                         model.full_model.intercept);

  // Region-token lookups for grouping.
  std::map<std::string, int> region_index;   // token -> table index
  for (std::size_t r = 0; r < table.size(); ++r) {
    region_index[region_token(table.regions()[r].name)] =
        static_cast<int>(r);
  }
  std::map<std::string, std::pair<int, int>> pair_index;  // base token -> L,R
  for (const auto& p : table.pairs()) {
    const Region* left = table.find(p.left_id);
    const Region* right = table.find(p.right_id);
    pair_index[region_token(p.base_name)] = {
        region_index.at(region_token(left->name)),
        region_index.at(region_token(right->name))};
  }

  const std::size_t nf = model.feature_names.size();
  std::vector<std::vector<std::pair<int, double>>> by_map(nf), by_stat(nf),
      by_region(nf);
  for (std::size_t k = 0; k < nf; ++k) {
    const ParsedFeatureName f = parse_feature_name(model.feature_names[k]);
    by_map[k] = {{f.map, 1.0}};
    by_stat[k] = {{f.stat + (f.asym ? 7 : 0), 1.0}};
    if (f.asym) {
      auto it = pair_index.find(f.region_token);
      if (it == pair_index.end()) {
        throw validation_error("unknown pair token '" + f.region_token + "'");
      }
      by_region[k] = {{it->second.first, 0.5}, {it->second.second, 0.5}};
    } else {
      auto it = region_index.find(f.region_token);
      if (it == region_index.end()) {
        throw validation_error("unknown region token '" + f.region_token +
                               "'");
      }
      by_region[k] = {{it->second, 1.0}};
    }
  }

  std::vector<std::string> map_names(kMapNames, kMapNames + 4);
  std::vector<std::string> stat_names;
  for (int s = 0; s < 7; ++s) stat_names.emplace_back(kStatNames[s]);
  for (int s = 0; s < 7; ++s) {
    stat_names.push_back(std::string(kStatNames[s]) + "_asym");
  }
  std::vector<std::string> rg_names;
  for (const auto& rgn : table.regions()) rg_names.push_back(rgn.name);

  rep.by_map = group_importance(rep.shap.mean_abs, by_map, map_names);
  rep.by_stat = group_importance(rep.shap.mean_abs, by_stat, stat_names);
  rep.by_region = group_importance(rep.shap.mean_abs, by_region, rg_names);
  return rep;
}

void save_cv_report(const CVReport& r, std::uint64_t config_hash,
                    const std::string& path) {
  nlohmann::json j;
  j["config_hash"] = hash_hex(config_hash);
  j["positive_class"] = r.positive_class;
  j["negative_class"] = r.negative_class;
  j["subjects"] = r.subjects;
  j["truth"] = r.truth;
  j["probabilities"] = r.probabilities;
  j["auc"] = r.auc;
  j["auc_ci_low"] = r.auc_ci_low;
  j["auc_ci_high"] = r.auc_ci_high;
  j["average_precision"] = r.average_precision;
  j["accuracy"] = r.accuracy;
  j["sensitivity"] = r.sensitivity;
  j["specificity"] = r.specificity;
  j["confusion"] = {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}};
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : r.roc) roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
  j["roc"] = roc;
  nlohmann::json pr = nlohmann::json::array();
  for (const auto& p : r.pr) {
    pr.push_back({{"recall", p.recall}, {"precision", p.precision}});
  }
  j["pr"] = pr;
  j["all_converged"] = r.all_converged;
  j["bootstrap_samples"] = r.bootstrap_samples;
  j["seed"] = r.seed;
  j["rng"] = Xoshiro256StarStar::kName;
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

void save_shap_report(const ShapReport& r, std::uint64_t config_hash,
                      const std::string& path_json,
                      const std::string& path_csv) {
  const std::size_t nf = r.feature_names.size();
  auto group_json = [](const std::vector<GroupImportance>& g) {
    std::vector<const GroupImportance*> order;
    for (const auto& e : g) order.push_back(&e);
    std::sort(order.begin(), order.end(),
              [](const GroupImportance* a, const GroupImportance* b) {
                return a->rank > b->rank;  // most influential first
              });
    nlohmann::json arr = nlohmann::json::array();
    for (const auto* e : order) {
      arr.push_back({{"name", e->name}, {"total", e->total}, {"rank", e->rank}});
    }
    return arr;
  };

  nlohmann::json j;
  j["config_hash"] = hash_hex(config_hash);
  j["base_value"] = r.shap.base.empty() ? 0.0 : r.shap.base.front();
  j["n_samples"] = r.shap.phi.size();
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t k = 0; k < nf; ++k) {
    feats.push_back({{"name", r.feature_names[k]},
                     {"mean_abs_phi", r.shap.mean_abs[k]},
                     {"rank", r.shap.rank[k]}});
  }
  j["features"] = feats;
  j["by_map"] = group_json(r.by_map);
  j["by_stat"] = group_json(r.by_stat);
  j["by_region"] = group_json(r.by_region);
  std::ofstream out(path_json);
  if (!out) throw io_error("cannot write '" + path_json + "'");
  out << j.dump(2) << "\n";

  // CSV: most influential first.
  std::vector<std::size_t> order(nf);
  for (std::size_t k = 0; k < nf; ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.shap.rank[a] > r.shap.rank[b];
  });
  std::ofstream csv(path_csv);
  if (!csv) throw io_error("cannot write '" + path_csv + "'");
  csv << "feature,mean_abs_phi,rank\n";
  for (std::size_t k : order) {
    csv << r.feature_names[k] << ',' << detail::fmt_double(r.shap.mean_abs[k])
        << ',' << r.shap.rank[k] << "\n";
  }
}

}  // namespace dscpmd
