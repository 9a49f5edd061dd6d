// dscpmd: batch CLI for DSC-MRI perfusion quantification, regional
// perfusion-map descriptors, and cohort analyses.
//
// Exit codes: 0 ok, 2 config/spec error, 3 per-subject processing error,
// 4 cohort-level error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dscpmd/atlas.hpp"
#include "dscpmd/error.hpp"
#include "dscpmd/mask.hpp"
#include "dscpmd/nifti.hpp"
#include "dscpmd/phantom.hpp"
#include "dscpmd/pipeline.hpp"
#include "dscpmd/stats.hpp"
#include "dscpmd/volume.hpp"

namespace fs = std::filesystem;
using namespace dscpmd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSubject = 3;
constexpr int kExitCohort = 4;

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << h;
  return os.str();
}

struct CommonOpts {
  std::string config_path;
  int threads = 0;  // 0 = leave config value
};

// Loads the config (file if given, defaults otherwise) and applies flag
// overrides. Throws dscpmd errors on bad files/values.
PipelineConfig resolve_config(const CommonOpts& c) {
  PipelineConfig cfg = c.config_path.empty()
                           ? default_pipeline_config()
                           : load_pipeline_config(c.config_path);
  if (c.threads > 0) cfg.threads = c.threads;
  return cfg;
}

RegionTable resolve_table(const PipelineConfig& cfg) {
  if (cfg.region_table_path.empty()) return default_region_table();
  return load_region_table(cfg.region_table_path);
}

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path,
                  "Pipeline configuration JSON (defaults apply when absent)");
  cmd->add_option("--threads", c.threads, "Worker thread count (overrides config)")
      ->check(CLI::PositiveNumber);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << text;
}

// Resolves PMD-table region ids against the table (tokens in feature names
// are unambiguous because region names are unique).
PMDTable load_table_checked(const std::string& path, const RegionTable& table) {
  PMDTable t = load_pmd_csv(path);
  std::map<std::string, int> id_of;
  for (const auto& r : table.regions()) id_of[region_token(r.name)] = r.id;
  for (auto& f : t.features) {
    if (f.asym) continue;
    const ParsedFeatureName p = parse_feature_name(f.name);
    auto it = id_of.find(p.region_token);
    if (it != id_of.end()) f.region_id = it->second;
  }
  return t;
}

void write_screen_outputs(const ScreenResult& r, const PMDTable& pmds,
                          const std::string& positive, bool asym,
                          const fs::path& out_dir) {
  const std::string stem = asym ? "screen_asym" : "screen_regional";
  save_screen_csv(r, (out_dir / (stem + ".csv")).string());
  save_screen_json(r, (out_dir / (stem + ".json")).string());

  // Boxplot data for the strongest rows.
  std::vector<std::string> names;
  std::vector<int> cols;
  for (std::size_t j = 0; j < pmds.features.size(); ++j) {
    if (pmds.features[j].asym != asym) continue;
    cols.push_back(static_cast<int>(j));
    names.push_back(pmds.features[j].name);
  }
  std::vector<std::vector<std::optional<double>>> ga, gb;
  for (std::size_t i = 0; i < pmds.rows.size(); ++i) {
    std::vector<std::optional<double>> row(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      row[k] = pmds.rows[i][static_cast<std::size_t>(cols[k])];
    }
    (pmds.classes[i] == positive ? ga : gb).push_back(std::move(row));
  }
  save_boxplot_data(r, names, ga, gb, 10,
                    (out_dir / (stem + "_boxplot.dat")).string());
}

int cmd_phantom(const std::string& spec_path, const std::string& out_dir,
                int threads) {
  PhantomSpec spec =
      spec_path.empty() ? default_phantom_spec() : load_phantom_spec(spec_path);
  const PhantomResult ph = generate_phantom(spec, nullptr, threads);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_nifti((dir / "dsc.nii").string(), ph.dsc);
  write_nifti((dir / "labels.nii").string(), ph.labels);
  save_ground_truth((dir / "truth.json").string(), ph.truth);
  save_phantom_spec((dir / "phantom_spec.json").string(), spec);
  std::cout << "phantom: wrote dsc.nii, labels.nii, truth.json to " << out_dir
            << "\n";
  return 0;
}

int cmd_mask(const std::string& in_path, const std::string& out_path,
             const PipelineConfig& cfg) {
  Volume4D v = read_nifti_4d(in_path, cfg.default_tr, cfg.default_te);
  canonicalize_ras(v);
  const Volume3D t0 = extract_timepoint(v, 0);
  const Mask3D m = brain_mask(t0);
  write_nifti(out_path, m, t0.spacing, t0.affine);
  std::cout << "mask: " << m.count() << " voxels -> " << out_path << "\n";
  return 0;
}

int cmd_maps(const SubjectEntry& entry, const PipelineConfig& cfg,
             const RegionTable& table, const std::string& out_dir) {
  const SubjectResult r = run_subject(entry, cfg, table);
  write_subject_outputs(r, out_dir);
  for (const auto& w : r.warnings) {
    std::cerr << "warning [" << entry.id << "]: " << w << "\n";
  }
  std::cout << "maps: subject '" << entry.id << "' -> " << out_dir
            << " (AIF slice " << r.aif.slice << ", score " << r.aif.score
            << ")\n";
  return 0;
}

int cmd_pmd(const std::string& cohort_root, const PipelineConfig& cfg,
            const RegionTable& table, const std::string& out_dir) {
  const auto subjects = discover_cohort(cohort_root);
  const CohortTables tables = run_cohort(subjects, cfg, table, out_dir, false);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  save_pmd_csv(tables.pmds, (dir / "pmd.csv").string());
  save_pmd_json(tables.pmds, (dir / "pmd.json").string());
  for (const auto& w : tables.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "pmd: " << tables.pmds.rows.size() << " subjects x "
            << tables.pmds.features.size() << " features -> "
            << (dir / "pmd.csv").string() << "\n";
  return 0;
}

int cmd_screen(const std::string& pmds_path, const PipelineConfig& cfg,
               const RegionTable& table, const std::string& out_dir,
               bool asym) {
  const PMDTable pmds = load_table_checked(pmds_path, table);
  std::vector<std::string> classes(pmds.classes);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const ScreenResult r = screen_cohort(pmds, table, cfg, asym);
  fs::create_directories(out_dir);
  write_screen_outputs(r, pmds, classes.size() == 2 ? classes[1] : "", asym,
                       out_dir);
  int n_sig = 0;
  for (const auto& row : r.rows) n_sig += row.significant ? 1 : 0;
  std::cout << (asym ? "asym-screen: " : "screen: ") << r.rows.size()
            << " features tested (m=" << r.n_tests << "), " << n_sig
            << " significant, " << r.skipped.size() << " skipped -> "
            << out_dir << "\n";
  return 0;
}

int cmd_classify(const std::string& pmds_path, const PipelineConfig& cfg,
                 const RegionTable& table, const std::string& out_dir,
                 bool regional_only) {
  const PMDTable pmds = load_table_checked(pmds_path, table);
  const ClassifyResult r = classify_cohort(pmds, cfg, regional_only);
  fs::create_directories(out_dir);
  save_cv_report(r.report, cfg.hash(),
                 (fs::path(out_dir) / "cv_report.json").string());
  if (!r.report.all_converged) {
    std::cerr << "warning: at least one LOO fold did not converge\n";
  }
  std::cout << "classify: AUC " << r.report.auc << " [" << r.report.auc_ci_low
            << ", " << r.report.auc_ci_high << "], accuracy "
            << r.report.accuracy << " -> " << out_dir << "/cv_report.json\n";
  return 0;
}

int cmd_shap(const std::string& pmds_path, const PipelineConfig& cfg,
             const RegionTable& table, const std::string& out_dir,
             bool regional_only) {
  const PMDTable pmds = load_table_checked(pmds_path, table);
  const ClassifyResult model = classify_cohort(pmds, cfg, regional_only);
  const ShapReport rep = shap_cohort(model, pmds, table);
  fs::create_directories(out_dir);
  save_shap_report(rep, cfg.hash(),
                   (fs::path(out_dir) / "shap.json").string(),
                   (fs::path(out_dir) / "shap.csv").string());
  std::cout << "shap: " << rep.feature_names.size() << " features ranked -> "
            << out_dir << "/shap.csv\n";
  return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const std::string& mask_path) {
  Volume3D a = read_nifti_3d(a_path);
  Volume3D b = read_nifti_3d(b_path);
  canonicalize_ras(a);
  canonicalize_ras(b);
  Mask3D m;
  if (!mask_path.empty()) {
    m = read_nifti_mask(mask_path);
  } else {
    m = Mask3D::full(a.nx, a.ny, a.nz, true);
  }
  const double r = ncc(a, b, m);
  std::cout << "ncc " << std::setprecision(6) << r << "\n";
  return 0;
}

int cmd_pipeline(const std::string& cohort_root, const PipelineConfig& cfg,
                 const RegionTable& table, const std::string& out_dir,
                 bool write_maps) {
  const auto subjects = discover_cohort(cohort_root);
  const CohortTables tables =
      run_cohort(subjects, cfg, table, out_dir, write_maps);
  if (tables.class_names.size() != 2) {
    throw validation_error("pipeline requires exactly two classes, found " +
                           std::to_string(tables.class_names.size()));
  }
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  save_pmd_csv(tables.pmds, (dir / "pmd.csv").string());
  save_pmd_json(tables.pmds, (dir / "pmd.json").string());

  const std::string& positive = tables.class_names[1];
  const ScreenResult regional = screen_cohort(tables.pmds, table, cfg, false);
  write_screen_outputs(regional, tables.pmds, positive, false, dir);
  ScreenResult asym;
  if (cfg.include_asym) {
    asym = screen_cohort(tables.pmds, table, cfg, true);
    write_screen_outputs(asym, tables.pmds, positive, true, dir);
  }

  const ClassifyResult model = classify_cohort(tables.pmds, cfg, false);
  save_cv_report(model.report, cfg.hash(), (dir / "cv_report.json").string());
  const ShapReport shap = shap_cohort(model, tables.pmds, table);
  save_shap_report(shap, cfg.hash(), (dir / "shap.json").string(),
                   (dir / "shap.csv").string());

  auto count_sig = [](const ScreenResult& r) {
    int n = 0;
    for (const auto& row : r.rows) n += row.significant ? 1 : 0;
    return n;
  };
  nlohmann::json summary;
  summary["config_hash"] = hash_hex(cfg.hash());
  summary["config"] = nlohmann::json::parse(cfg.to_json());
  summary["classes"] = tables.class_names;
  summary["positive_class"] = positive;
  summary["subjects_processed"] = tables.pmds.rows.size();
  summary["subjects_discovered"] = subjects.size();
  summary["warnings"] = tables.warnings;
  summary["warning_count"] = tables.warnings.size();
  summary["n_features"] = tables.pmds.features.size();
  summary["significant_regional"] = count_sig(regional);
  if (cfg.include_asym) summary["significant_asym"] = count_sig(asym);
  summary["auc"] = model.report.auc;
  summary["auc_ci"] = {model.report.auc_ci_low, model.report.auc_ci_high};
  nlohmann::json artifacts = nlohmann::json::array();
  artifacts.push_back("pmd.csv");
  artifacts.push_back("pmd.json");
  artifacts.push_back("screen_regional.csv");
  artifacts.push_back("screen_regional.json");
  if (cfg.include_asym) {
    artifacts.push_back("screen_asym.csv");
    artifacts.push_back("screen_asym.json");
  }
  artifacts.push_back("cv_report.json");
  artifacts.push_back("shap.json");
  artifacts.push_back("shap.csv");
  summary["artifacts"] = artifacts;
  write_text((dir / "summary.json").string(), summary.dump(2) + "\n");

  for (const auto& w : tables.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "pipeline: " << tables.pmds.rows.size() << "/" << subjects.size()
            << " subjects, AUC " << model.report.auc << " -> " << out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dscpmd: DSC-MRI perfusion maps, regional descriptors, and cohort "
      "analyses"};
  app.require_subcommand(1);

  // phantom
  auto* phantom = app.add_subcommand(
      "phantom", "Generate a synthetic DSC series with ground truth");
  std::string ph_spec, ph_out;
  int ph_threads = 1;
  phantom->add_option("--spec", ph_spec, "Phantom spec JSON (default: built-in)");
  phantom->add_option("--out", ph_out, "Output directory")->required();
  phantom->add_option("--threads", ph_threads, "Worker thread count")
      ->check(CLI::PositiveNumber);

  // mask
  auto* mask = app.add_subcommand("mask", "Compute a brain mask");
  CommonOpts mask_c;
  std::string mask_in, mask_out;
  mask->add_option("--in", mask_in, "Input .nii (first timepoint is used)")
      ->required();
  mask->add_option("--out", mask_out, "Output mask .nii")->required();
  add_common(mask, mask_c);

  // maps
  auto* maps = app.add_subcommand(
      "maps", "Perfusion maps + AIF for one subject directory");
  CommonOpts maps_c;
  std::string maps_subject, maps_out;
  maps->add_option("--subject", maps_subject,
                   "Subject directory with dsc.nii and labels.nii")
      ->required();
  maps->add_option("--out", maps_out, "Output directory")->required();
  add_common(maps, maps_c);

  // pmd
  auto* pmd = app.add_subcommand(
      "pmd", "Extract the cohort PMD table (no map files)");
  CommonOpts pmd_c;
  std::string pmd_root, pmd_out;
  pmd->add_option("--cohort", pmd_root, "Cohort root (<class>/<subject>/...)")
      ->required();
  pmd->add_option("--out", pmd_out, "Output directory")->required();
  add_common(pmd, pmd_c);

  // screen / asym-screen
  auto* screen = app.add_subcommand(
      "screen", "Univariate regional screening from a PMD table");
  CommonOpts screen_c;
  std::string screen_pmds, screen_out;
  screen->add_option("--pmds", screen_pmds, "pmd.csv path")->required();
  screen->add_option("--out", screen_out, "Output directory")->required();
  add_common(screen, screen_c);

  auto* ascreen = app.add_subcommand(
      "asym-screen", "Hemispheric-asymmetry screening from a PMD table");
  CommonOpts ascreen_c;
  std::string ascreen_pmds, ascreen_out;
  ascreen->add_option("--pmds", ascreen_pmds, "pmd.csv path")->required();
  ascreen->add_option("--out", ascreen_out, "Output directory")->required();
  add_common(ascreen, ascreen_c);

  // classify
  auto* classify = app.add_subcommand(
      "classify", "Balanced logistic regression with leave-one-out CV");
  CommonOpts classify_c;
  std::string classify_pmds, classify_out;
  bool classify_regional = false;
  classify->add_option("--pmds", classify_pmds, "pmd.csv path")->required();
  classify->add_option("--out", classify_out, "Output directory")->required();
  classify->add_flag("--regional-only", classify_regional,
                     "Use only regional (non-asymmetry) features");
  add_common(classify, classify_c);

  // shap
  auto* shap = app.add_subcommand(
      "shap", "Linear SHAP ranking of the full-cohort model");
  CommonOpts shap_c;
  std::string shap_pmds, shap_out;
  bool shap_regional = false;
  shap->add_option("--pmds", shap_pmds, "pmd.csv path")->required();
  shap->add_option("--out", shap_out, "Output directory")->required();
  shap->add_flag("--regional-only", shap_regional,
                 "Use only regional (non-asymmetry) features");
  add_common(shap, shap_c);

  // compare
  auto* compare =
      app.add_subcommand("compare", "Pearson correlation of two maps");
  std::string cmp_a, cmp_b, cmp_mask;
  compare->add_option("--a", cmp_a, "First .nii map")->required();
  compare->add_option("--b", cmp_b, "Second .nii map")->required();
  compare->add_option("--mask", cmp_mask, "Mask .nii (default: all voxels)");

  // pipeline
  auto* pipeline = app.add_subcommand(
      "pipeline", "End-to-end cohort run: maps, PMDs, screening, classifier");
  CommonOpts pipeline_c;
  std::string pipe_root, pipe_out;
  bool pipe_maps = false;
  pipeline->add_option("--cohort", pipe_root, "Cohort root")->required();
  pipeline->add_option("--out", pipe_out, "Output directory")->required();
  pipeline->add_flag("--write-maps", pipe_maps,
                     "Also write per-subject map volumes");
  add_common(pipeline, pipeline_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*phantom) {
      // Spec problems (bad JSON, invalid parameters) are config errors; the
      // outer handlers map every library error here to exit 2.
      return cmd_phantom(ph_spec, ph_out, ph_threads);
    }
    if (*mask) {
      const PipelineConfig cfg = resolve_config(mask_c);
      try {
        return cmd_mask(mask_in, mask_out, cfg);
      } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSubject;
      }
    }
    if (*maps) {
      const PipelineConfig cfg = resolve_config(maps_c);
      const RegionTable table = resolve_table(cfg);
      SubjectEntry entry;
      const fs::path sdir(maps_subject);
      entry.id = sdir.filename().empty() ? sdir.parent_path().filename().string()
                                         : sdir.filename().string();
      entry.class_label = "";
      entry.dsc_path = (sdir / "dsc.nii").string();
      entry.labels_path = (sdir / "labels.nii").string();
      if (fs::exists(sdir / "mask.nii")) {
        entry.mask_path = (sdir / "mask.nii").string();
      }
      if (fs::exists(sdir / "affine.json")) {
        entry.affine_path = (sdir / "affine.json").string();
      }
      try {
        return cmd_maps(entry, cfg, table, maps_out);
      } catch (const error& e) {
        std::cerr << "error [" << entry.id << "]: " << e.what() << "\n";
        return kExitSubject;
      }
    }
    if (*pmd) {
      const PipelineConfig cfg = resolve_config(pmd_c);
      const RegionTable table = resolve_table(cfg);
      try {
        return cmd_pmd(pmd_root, cfg, table, pmd_out);
      } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCohort;
      }
    }
    if (*screen || *ascreen) {
      const bool asym = static_cast<bool>(*ascreen);
      const CommonOpts& c = asym ? ascreen_c : screen_c;
      const std::string& pmds_path = asym ? ascreen_pmds : screen_pmds;
      const std::string& out_dir = asym ? ascreen_out : screen_out;
      const PipelineConfig cfg = resolve_config(c);
      const RegionTable table = resolve_table(cfg);
      try {
        return cmd_screen(pmds_path, cfg, table, out_dir, asym);
      } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCohort;
      }
    }
    if (*classify) {
      const PipelineConfig cfg = resolve_config(classify_c);
      const RegionTable table = resolve_table(cfg);
      try {
        return cmd_classify(classify_pmds, cfg, table, classify_out,
                            classify_regional);
      } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCohort;
      }
    }
    if (*shap) {
      const PipelineConfig cfg = resolve_config(shap_c);
      const RegionTable table = resolve_table(cfg);
      try {
        return cmd_shap(shap_pmds, cfg, table, shap_out, shap_regional);
      } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCohort;
      }
    }
    if (*compare) {
      try {
        return cmd_compare(cmp_a, cmp_b, cmp_mask);
      } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSubject;
      }
    }
    if (*pipeline) {
      const PipelineConfig cfg = resolve_config(pipeline_c);
      const RegionTable table = resolve_table(cfg);
      try {
        return cmd_pipeline(pipe_root, cfg, table, pipe_out, pipe_maps);
      } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCohort;
      }
    }
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
