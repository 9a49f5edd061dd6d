#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dscpmd/volume.hpp"

namespace dscpmd {

// --- signal -> concentration ------------------------------------------------

struct ConcentrationResult {
  Volume4D conc;        // C(t) = -ln(max(S, eps)/S0)/te; 0 outside mask/invalid
  Mask3D valid;         // mask voxels with usable S0
  Volume3D s0;          // per-voxel baseline mean
  int baseline_end = 0; // last pre-bolus sample index
  int bolus_index = 0;  // first sample below the baseline threshold
};

// Baseline detection: start from the first 5 samples of the masked global
// mean; the bolus is the first later sample dropping below mean - 3*sd of
// the samples accepted so far; baseline_end = that index - 1 (must be >= 4).
// Throws processing_error when no bolus passage is found.
ConcentrationResult signal_to_concentration(const Volume4D& signal,
                                            const Mask3D& mask, double te);

// --- AIF selection ----------------------------------------------------------

struct AifConfig {
  int top_voxels = 5;          // curves averaged per slice
  double arrival_frac = 0.10;  // arrival = first time C exceeds this * peak
};

struct AifSliceScore {
  int slice = -1;
  double score = 0;
  int candidates = 0;
};

struct AifResult {
  std::vector<double> curve;  // per-timepoint arterial concentration
  int slice = -1;             // winning slice
  double score = 0;           // score of the averaged winning curve
  std::vector<AifSliceScore> slices;
};

// Curve quality score: peak / (fwhm * max(arrival, dt)); fwhm and arrival
// use linear interpolation between samples. Returns 0 for flat/non-positive
// curves. Scores scale linearly with amplitude, so the selection order is
// unchanged by a global rescaling of all curves.
double aif_curve_score(const std::vector<double>& curve, double dt,
                       double arrival_frac);

// Scores candidate voxels (mask & valid & label in search_ids) per slice,
// averages each slice's top-5 curves, and returns the best slice's average.
// Ties pick the lowest slice index. Throws processing_error when no slice
// has candidates.
AifResult select_aif(const Volume4D& conc, const Mask3D& valid,
                     const LabelVolume& labels, const std::set<int>& search_ids,
                     const AifConfig& cfg = {});

// --- TSVD deconvolution -----------------------------------------------------

struct TsvdConfig {
  double fraction = 0.2;  // zero singular values < fraction * sigma_max
  int min_keep = 1;       // always retain at least this many
};

// Builds A[i][j] = dt*aif[i-j] (lower-triangular Toeplitz), factors it once,
// and applies the truncated pseudo-inverse to tissue curves.
class TsvdDeconvolver {
 public:
  TsvdDeconvolver(const std::vector<double>& aif, double dt,
                  const TsvdConfig& cfg);
  ~TsvdDeconvolver();
  TsvdDeconvolver(TsvdDeconvolver&&) noexcept;
  TsvdDeconvolver& operator=(TsvdDeconvolver&&) noexcept;

  std::vector<double> solve(const std::vector<double>& tissue) const;
  int rank_retained() const { return rank_; }
  int size() const { return nt_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int nt_ = 0;
  int rank_ = 0;
};

// Convenience single-curve API.
std::vector<double> deconvolve_tsvd(const std::vector<double>& tissue,
                                    const std::vector<double>& aif, double dt,
                                    const TsvdConfig& cfg);

// --- maps -------------------------------------------------------------------

struct PerfusionMaps {
  Volume3D cbf;   // max(k), clamped >= 0
  Volume3D cbv;   // sum(C)*dt / sum(aif)*dt
  Volume3D mtt;   // cbv/cbf where cbf > 1e-9, else 0
  Volume3D tmax;  // dt * argmax(k), first index on ties
};

PerfusionMaps compute_maps(const Volume4D& conc, const Mask3D& mask,
                           const std::vector<double>& aif,
                           const TsvdConfig& cfg, int threads = 1);

double masked_mean(const Volume3D& v, const Mask3D& mask);

// Divides by the masked mean (idempotent). Throws processing_error when the
// masked mean is zero or the mask is empty.
void normalize_map(Volume3D& v, const Mask3D& mask);

// Pearson correlation over masked voxels; throws processing_error when
// either input is constant over the mask or fewer than 2 voxels are masked.
double ncc(const Volume3D& a, const Volume3D& b, const Mask3D& mask);

}  // namespace dscpmd
