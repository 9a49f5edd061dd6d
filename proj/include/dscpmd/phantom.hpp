#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dscpmd/atlas.hpp"
#include "dscpmd/volume.hpp"

namespace dscpmd {

// Input CBF values are "mL/100g/min-equivalent" numbers; the forward model
// works in 1/s rates (divide by 6000). Maps and ground truth compare in
// rate units.
inline constexpr double kCbfUnitScale = 1.0 / 6000.0;

struct AifParams {
  double amplitude = 1.0;
  double t0 = 10.0;    // bolus arrival, seconds
  double alpha = 3.0;  // shape
  double beta = 1.5;   // scale, seconds
};

struct RegionPerfusion {
  double cbf = 60.0;   // input units (mL/100g/min-equivalent)
  double mtt = 4.0;    // seconds; must be >= tr (mtt == tr is a pure-AIF carrier)
  double delay = 0.0;  // seconds; quantized to round(delay/tr) samples
};

struct PhantomSpec {
  std::array<int, 3> grid{64, 64, 10};
  int timepoints = 80;
  double tr = 1.5;
  double te = 0.030;
  double s0 = 100.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1u;
  std::array<double, 3> spacing{1.8, 1.8, 5.0};
  AifParams aif;
  RegionPerfusion default_region;
  std::map<int, RegionPerfusion> region_overrides;

  // Throws validation_error on inconsistent values.
  void validate() const;
};

// Keys absent from the file keep the shipped default phantom's values
// (a present "region_overrides" object replaces the default set wholesale).
PhantomSpec load_phantom_spec(const std::string& path);
void save_phantom_spec(const std::string& path, const PhantomSpec& spec);
// The shipped default: heterogeneous symmetric per-pair perfusion, cingulate
// AIF carriers, and one delayed pair (region ids 3/4, 3.0 s).
PhantomSpec default_phantom_spec();

struct RegionTruth {
  int id = 0;
  double cbf = 0;   // rate units (1/s)
  double cbv = 0;   // = cbf * mtt, exact
  double mtt = 0;   // seconds
  double tmax = 0;  // seconds (quantized delay)
  double cbf_input = 0;  // echo of the spec value
};

struct GroundTruth {
  std::vector<RegionTruth> regions;
  std::vector<double> aif;  // sampled arterial curve (rate units)
  double tr = 1.5;
};

void save_ground_truth(const std::string& path, const GroundTruth& truth);

struct PhantomResult {
  Volume4D dsc;
  LabelVolume labels;
  GroundTruth truth;
};

// Gamma-variate AIF sampled at t = i*tr: A*(t-t0)^alpha*exp(-(t-t0)/beta)
// for t > t0, else 0.
std::vector<double> synth_aif(const AifParams& p, int nt, double tr);

// Discrete tissue curve: C[i] = cbf_rate * dt * sum_{j<=i} aif[j]*R[i-j],
// R[m] = (1 - dt/mtt)^(m - delay_samples) for m >= delay_samples else 0.
// The geometric ratio makes the discrete central-volume identity exact:
// dt * sum(R) == mtt.
std::vector<double> synth_tissue_curve(const std::vector<double>& aif,
                                       double dt, double cbf_rate, double mtt,
                                       int delay_samples);

// Generates signal S = s0 * exp(-te*C) (+ Gaussian noise, counter-based
// per-voxel streams) over the label volume; label 0 voxels are constant 0.
// Supplying labels overrides the synthetic default geometry.
PhantomResult generate_phantom(const PhantomSpec& spec,
                               const LabelVolume* labels = nullptr,
                               int threads = 1);

}  // namespace dscpmd
