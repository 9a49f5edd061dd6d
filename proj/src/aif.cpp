#include <algorithm>
#include <cmath>
#include <vector>

#include "dscpmd/error.hpp"
#include "dscpmd/perfusion.hpp"

namespace dscpmd {

double aif_curve_score(const std::vector<double>& curve, double dt,
                       double arrival_frac) {
  const int nt = static_cast<int>(curve.size());
  if (nt < 2) return 0;
  int peak_i = 0;
  for (int i = 1; i < nt; ++i) {
    if (curve[static_cast<std::size_t>(i)] >
        curve[static_cast<std::size_t>(peak_i)]) {
      peak_i = i;
    }
  }
  const double peak = curve[static_cast<std::size_t>(peak_i)];
  if (!(peak > 0)) return 0;

  // Arrival: first crossing of arrival_frac * peak, linearly interpolated.
  const double athr = arrival_frac * peak;
  double arrival = 0;
  for (int i = 0; i < nt; ++i) {
    if (curve[static_cast<std::size_t>(i)] > athr) {
      if (i == 0) {
        arrival = 0;
      } else {
        const double lo = curve[static_cast<std::size_t>(i - 1)];
        const double hi = curve[static_cast<std::size_t>(i)];
        arrival = dt * (i - 1 + (athr - lo) / (hi - lo));
      }
      break;
    }
  }

  // FWHM from interpolated half-max crossings; a curve that never falls
  // back below half-max keeps its width through the end of the window.
  const double half = 0.5 * peak;
  double t_rise = 0;
  for (int i = peak_i - 1; i >= 0; --i) {
    if (curve[static_cast<std::size_t>(i)] < half) {
      const double lo = curve[static_cast<std::size_t>(i)];
      const double hi = curve[static_cast<std::size_t>(i + 1)];
      t_rise = dt * (i + (half - lo) / (hi - lo));
      break;
    }
  }
  double t_fall = dt * (nt - 1);
  for (int i = peak_i + 1; i < nt; ++i) {
    if (curve[static_cast<std::size_t>(i)] < half) {
      const double before = curve[static_cast<std::size_t>(i - 1)];
      const double after = curve[static_cast<std::size_t>(i)];
      t_fall = dt * (i - 1 + (before - half) / (before - after));
      break;
    }
  }
  const double fwhm = t_fall - t_rise;
  if (!(fwhm > 0)) return 0;
  return peak / (fwhm * std::max(arrival, dt));
}

AifResult select_aif(const Volume4D& conc, const Mask3D& valid,
                     const LabelVolume& labels, const std::set<int>& search_ids,
                     const AifConfig& cfg) {
  if (conc.nx != valid.nx || conc.ny != valid.ny || conc.nz != valid.nz) {
    throw validation_error("concentration and mask dimensions differ");
  }
  if (conc.nx != labels.nx || conc.ny != labels.ny || conc.nz != labels.nz) {
    throw validation_error("concentration and label dimensions differ");
  }
  const double dt = conc.tr;
  const std::size_t fs = conc.frame_size();
  const int nt = conc.nt;

  AifResult result;
  struct Candidate {
    double score;
    std::size_t sidx;
  };
  std::vector<Candidate> cands;
  std::vector<double> curve(static_cast<std::size_t>(nt));
  std::vector<double> mean_curve(static_cast<std::size_t>(nt));

  for (int z = 0; z < conc.nz; ++z) {
    cands.clear();
    for (int y = 0; y < conc.ny; ++y) {
      for (int x = 0; x < conc.nx; ++x) {
        const std::size_t v = valid.idx(x, y, z);
        if (!valid.data[v]) continue;
        const std::int32_t lab = labels.data[v];
        if (lab <= 0) continue;
        if (!search_ids.empty() && !search_ids.count(lab)) continue;
        for (int t = 0; t < nt; ++t) {
          curve[static_cast<std::size_t>(t)] =
              conc.data[fs * static_cast<std::size_t>(t) + v];
        }
        cands.push_back({aif_curve_score(curve, dt, cfg.arrival_frac), v});
      }
    }
    AifSliceScore ss;
    ss.slice = z;
    ss.candidates = static_cast<int>(cands.size());
    if (!cands.empty()) {
      const std::size_t keep =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.top_voxels),
                                cands.size());
      std::partial_sort(cands.begin(),
                        cands.begin() + static_cast<std::ptrdiff_t>(keep),
                        cands.end(), [](const Candidate& a, const Candidate& b) {
                          if (a.score != b.score) return a.score > b.score;
                          return a.sidx < b.sidx;
                        });
      std::fill(mean_curve.begin(), mean_curve.end(), 0.0);
      for (std::size_t c = 0; c < keep; ++c) {
        for (int t = 0; t < nt; ++t) {
          mean_curve[static_cast<std::size_t>(t)] +=
              conc.data[fs * static_cast<std::size_t>(t) + cands[c].sidx];
        }
      }
      for (auto& m : mean_curve) m /= static_cast<double>(keep);
      ss.score = aif_curve_score(mean_curve, dt, cfg.arrival_frac);
      if (ss.candidates > 0 &&
          (result.slice < 0 || ss.score > result.score)) {
        result.slice = z;
        result.score = ss.score;
        result.curve = mean_curve;
      }
    }
    result.slices.push_back(ss);
  }
  if (result.slice < 0) {
    throw processing_error(
        "no arterial candidates found in any slice; check the label volume "
        "and the AIF search region ids");
  }
  return result;
}

}  // namespace dscpmd
