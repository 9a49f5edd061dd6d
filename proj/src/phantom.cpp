#include "dscpmd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dscpmd/error.hpp"
#include "dscpmd/parallel.hpp"
#include "dscpmd/rng.hpp"

namespace dscpmd {

namespace {

void check_positive(double v, const char* what) {
  if (!(v > 0)) {
    throw validation_error(std::string(what) + " must be positive, got " +
                           std::to_string(v));
  }
}

RegionPerfusion perfusion_from_json(const nlohmann::json& j) {
  RegionPerfusion p;
  if (j.contains("cbf")) p.cbf = j.at("cbf").get<double>();
  if (j.contains("mtt")) p.mtt = j.at("mtt").get<double>();
  if (j.contains("delay")) p.delay = j.at("delay").get<double>();
  return p;
}

nlohmann::json perfusion_to_json(const RegionPerfusion& p) {
  nlohmann::json j;
  j["cbf"] = p.cbf;
  j["mtt"] = p.mtt;
  j["delay"] = p.delay;
  return j;
}

}  // namespace

void PhantomSpec::validate() const {
  for (int d : grid) {
    if (d < 1) throw validation_error("grid dimensions must be >= 1");
  }
  if (timepoints < 8) {
    throw validation_error("timepoints must be >= 8, got " +
                           std::to_string(timepoints));
  }
  check_positive(tr, "tr");
  check_positive(te, "te");
  check_positive(s0, "s0");
  if (noise_sigma < 0) {
    throw validation_error("noise_sigma must be >= 0");
  }
  for (double s : spacing) check_positive(s, "spacing");
  check_positive(aif.amplitude, "aif amplitude");
  check_positive(aif.alpha, "aif alpha");
  check_positive(aif.beta, "aif beta");
  if (aif.t0 < 0) throw validation_error("aif t0 must be >= 0");
  auto check_region = [&](const RegionPerfusion& p, const std::string& which) {
    if (p.cbf < 0) {
      throw validation_error(which + ": cbf must be >= 0");
    }
    if (p.mtt < tr) {
      throw validation_error(which + ": mtt " + std::to_string(p.mtt) +
                             " must be >= tr " + std::to_string(tr));
    }
    if (p.delay < 0) {
      throw validation_error(which + ": delay must be >= 0");
    }
  };
  check_region(default_region, "default_region");
  for (const auto& [id, p] : region_overrides) {
    check_region(p, "region " + std::to_string(id));
  }
}

std::vector<double> synth_aif(const AifParams& p, int nt, double tr) {
  std::vector<double> out(static_cast<std::size_t>(nt), 0.0);
  for (int i = 0; i < nt; ++i) {
    const double t = i * tr;
    if (t > p.t0) {
      const double u = t - p.t0;
      out[static_cast<std::size_t>(i)] =
          p.amplitude * std::pow(u, p.alpha) * std::exp(-u / p.beta);
    }
  }
  return out;
}

std::vector<double> synth_tissue_curve(const std::vector<double>& aif,
                                       double dt, double cbf_rate, double mtt,
                                       int delay_samples) {
  if (mtt < dt) {
    throw validation_error("mtt must be >= the sampling interval");
  }
  const int nt = static_cast<int>(aif.size());
  // R[m] = ratio^(m - delay) for m >= delay; the geometric tail makes
  // dt * sum(R) == mtt hold exactly, so cbv == cbf * mtt in the discrete
  // model too.
  const double ratio = 1.0 - dt / mtt;
  std::vector<double> residue(static_cast<std::size_t>(nt), 0.0);
  double r = 1.0;
  for (int m = delay_samples; m < nt; ++m) {
    residue[static_cast<std::size_t>(m)] = r;
    r *= ratio;
  }
  std::vector<double> out(static_cast<std::size_t>(nt), 0.0);
  for (int i = 0; i < nt; ++i) {
    double acc = 0;
    for (int j = 0; j <= i; ++j) {
      acc += aif[static_cast<std::size_t>(j)] *
             residue[static_cast<std::size_t>(i - j)];
    }
    out[static_cast<std::size_t>(i)] = cbf_rate * dt * acc;
  }
  return out;
}

PhantomResult generate_phantom(const PhantomSpec& spec,
                               const LabelVolume* labels, int threads) {
  spec.validate();
  PhantomResult res;
  res.labels = labels ? *labels
                      : make_synthetic_labels(spec.grid[0], spec.grid[1],
                                              spec.grid[2], spec.spacing);
  const LabelVolume& lab = res.labels;
  const int nt = spec.timepoints;
  const double dt = spec.tr;

  // One concentration curve per distinct label.
  std::set<std::int32_t> ids_present;
  for (auto v : lab.data) {
    if (v > 0) ids_present.insert(v);
  }
  const std::vector<double> aif = synth_aif(spec.aif, nt, dt);
  std::map<std::int32_t, std::vector<double>> curve;
  std::map<std::int32_t, RegionPerfusion> perf;
  for (auto id : ids_present) {
    auto it = spec.region_overrides.find(id);
    const RegionPerfusion p =
        it != spec.region_overrides.end() ? it->second : spec.default_region;
    perf[id] = p;
    const int delay_samples = static_cast<int>(std::lround(p.delay / dt));
    curve[id] = synth_tissue_curve(aif, dt, p.cbf * kCbfUnitScale, p.mtt,
                                   delay_samples);
  }

  Volume4D dsc = Volume4D::zeros(lab.nx, lab.ny, lab.nz, nt);
  dsc.tr = dt;
  dsc.te = spec.te;
  dsc.spacing = lab.spacing;
  dsc.affine = lab.affine;

  // Precompute the noiseless signal per label.
  std::map<std::int32_t, std::vector<float>> signal;
  for (auto id : ids_present) {
    auto& s = signal[id];
    s.resize(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
      s[static_cast<std::size_t>(t)] = static_cast<float>(
          spec.s0 * std::exp(-spec.te * curve[id][static_cast<std::size_t>(t)]));
    }
  }

  const std::size_t nvox = lab.data.size();
  const bool noisy = spec.noise_sigma > 0;
  // Noise streams are keyed by voxel and timepoint, so the output is
  // identical for any thread count.
  parallel_for(nvox, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      const std::int32_t id = lab.data[v];
      if (id <= 0) continue;  // background stays exactly zero
      const auto& s = signal.at(id);
      for (int t = 0; t < nt; ++t) {
        double value = s[static_cast<std::size_t>(t)];
        if (noisy) {
          value += spec.noise_sigma *
                   counter_gaussian(spec.seed, static_cast<std::uint64_t>(v),
                                    static_cast<std::uint64_t>(t));
        }
        dsc.data[dsc.frame_size() * static_cast<std::size_t>(t) + v] =
            static_cast<float>(value);
      }
    }
  });
  res.dsc = std::move(dsc);

  res.truth.tr = dt;
  res.truth.aif = aif;
  for (auto id : ids_present) {
    const RegionPerfusion& p = perf[id];
    RegionTruth t;
    t.id = id;
    t.cbf_input = p.cbf;
    t.cbf = p.cbf * kCbfUnitScale;
    t.mtt = p.mtt;
    t.cbv = t.cbf * p.mtt;
    t.tmax = std::lround(p.delay / dt) * dt;
    res.truth.regions.push_back(t);
  }
  return res;
}

PhantomSpec default_phantom_spec() {
  PhantomSpec spec;
  // Per-pair CBF heterogeneity (symmetric across hemispheres); recovery
  // accuracy is unaffected because the forward model and the deconvolution
  // are both linear in CBF.
  for (int b = 1; b <= 56; ++b) {
    RegionPerfusion p;
    p.cbf = 40.0 + ((b - 1) % 5) * 10.0;
    p.mtt = 4.0;
    p.delay = 0.0;
    spec.region_overrides[2 * b - 1] = p;
    spec.region_overrides[2 * b] = p;
  }
  spec.region_overrides[113] = RegionPerfusion{50.0, 4.0, 0.0};
  // Pure arterial carriers in the cingulate pair ids: mtt == tr collapses
  // the residue to one sample, and cbf == 6000/tr makes the voxel curve
  // reproduce the arterial concentration exactly.
  for (int id : {57, 58, 59, 60}) {
    spec.region_overrides[id] = RegionPerfusion{6000.0 / spec.tr, spec.tr, 0.0};
  }
  // One delayed pair for Tmax recovery.
  spec.region_overrides[3].delay = 3.0;
  spec.region_overrides[4].delay = 3.0;
  return spec;
}

PhantomSpec load_phantom_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open phantom spec '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("phantom spec '" + path +
                       "' is not valid JSON: " + e.what());
  }
  // Absent keys keep the shipped default phantom's values, so a partial spec
  // acts as an override file ("region_overrides": {} gives a uniform
  // phantom). This keeps minimally specified phantoms processable by the
  // default pipeline configuration, which expects the arterial carriers.
  PhantomSpec spec = default_phantom_spec();
  try {
    if (j.contains("grid")) {
      auto g = j.at("grid");
      if (!g.is_array() || g.size() != 3) {
        throw format_error("phantom spec field 'grid' must be 3 integers");
      }
      for (int i = 0; i < 3; ++i) {
        spec.grid[static_cast<size_t>(i)] = g.at(static_cast<size_t>(i)).get<int>();
      }
    }
    if (j.contains("timepoints")) spec.timepoints = j.at("timepoints").get<int>();
    if (j.contains("tr")) spec.tr = j.at("tr").get<double>();
    if (j.contains("te")) spec.te = j.at("te").get<double>();
    if (j.contains("s0")) spec.s0 = j.at("s0").get<double>();
    if (j.contains("noise_sigma")) spec.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("spacing")) {
      auto s = j.at("spacing");
      if (!s.is_array() || s.size() != 3) {
        throw format_error("phantom spec field 'spacing' must be 3 numbers");
      }
      for (int i = 0; i < 3; ++i) {
        spec.spacing[static_cast<size_t>(i)] =
            s.at(static_cast<size_t>(i)).get<double>();
      }
    }
    if (j.contains("aif")) {
      auto a = j.at("aif");
      if (a.contains("amplitude")) spec.aif.amplitude = a.at("amplitude").get<double>();
      if (a.contains("t0")) spec.aif.t0 = a.at("t0").get<double>();
      if (a.contains("alpha")) spec.aif.alpha = a.at("alpha").get<double>();
      if (a.contains("beta")) spec.aif.beta = a.at("beta").get<double>();
    }
    if (j.contains("default_region")) {
      spec.default_region = perfusion_from_json(j.at("default_region"));
    }
    if (j.contains("region_overrides")) {
      spec.region_overrides.clear();
      for (const auto& [key, val] : j.at("region_overrides").items()) {
        int id = 0;
        try {
          id = std::stoi(key);
        } catch (const std::exception&) {
          throw format_error("phantom spec region_overrides key '" + key +
                             "' is not an integer id");
        }
        spec.region_overrides[id] = perfusion_from_json(val);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error("phantom spec '" + path + "': " + e.what());
  }
  spec.validate();
  return spec;
}

void save_phantom_spec(const std::string& path, const PhantomSpec& spec) {
  nlohmann::json j;
  j["grid"] = spec.grid;
  j["timepoints"] = spec.timepoints;
  j["tr"] = spec.tr;
  j["te"] = spec.te;
  j["s0"] = spec.s0;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  j["spacing"] = spec.spacing;
  j["aif"] = {{"amplitude", spec.aif.amplitude},
              {"t0", spec.aif.t0},
              {"alpha", spec.aif.alpha},
              {"beta", spec.aif.beta}};
  j["default_region"] = perfusion_to_json(spec.default_region);
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [id, p] : spec.region_overrides) {
    overrides[std::to_string(id)] = perfusion_to_json(p);
  }
  j["region_overrides"] = overrides;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write phantom spec '" + path + "'");
  out << j.dump(2) << "\n";
}

void save_ground_truth(const std::string& path, const GroundTruth& truth) {
  nlohmann::json j;
  j["tr"] = truth.tr;
  j["aif"] = truth.aif;
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : truth.regions) {
    regions.push_back({{"id", r.id},
                       {"cbf", r.cbf},
                       {"cbv", r.cbv},
                       {"mtt", r.mtt},
                       {"tmax", r.tmax},
                       {"cbf_input", r.cbf_input}});
  }
  j["regions"] = regions;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write ground truth '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace dscpmd
