#include <cmath>
#include <vector>

#include "dscpmd/error.hpp"
#include "dscpmd/perfusion.hpp"

namespace dscpmd {

ConcentrationResult signal_to_concentration(const Volume4D& signal,
                                            const Mask3D& mask, double te) {
  if (signal.nx != mask.nx || signal.ny != mask.ny || signal.nz != mask.nz) {
    throw validation_error("signal and mask dimensions differ");
  }
  if (!(te > 0)) throw validation_error("te must be positive");
  if (signal.nt < 6) {
    throw processing_error("time series too short for baseline detection (" +
                           std::to_string(signal.nt) + " timepoints, need 6)");
  }
  const std::size_t n_masked = mask.count();
  if (n_masked == 0) throw processing_error("brain mask is empty");

  // Global masked mean signal per timepoint.
  const std::size_t fs = signal.frame_size();
  std::vector<double> g(static_cast<std::size_t>(signal.nt), 0.0);
  for (int t = 0; t < signal.nt; ++t) {
    double acc = 0;
    const float* frame = signal.data.data() + fs * static_cast<std::size_t>(t);
    for (std::size_t v = 0; v < fs; ++v) {
      if (mask.data[v]) acc += frame[v];
    }
    g[static_cast<std::size_t>(t)] = acc / static_cast<double>(n_masked);
  }

  // Grow the baseline window from the first 5 samples until one drops
  // strictly below mean - 3*sd of the window so far; that sample is the
  // bolus arrival.
  int bolus = -1;
  double sum = 0, sumsq = 0;
  int n = 0;
  auto push = [&](double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  };
  for (int t = 0; t < 5; ++t) push(g[static_cast<std::size_t>(t)]);
  for (int t = 5; t < signal.nt; ++t) {
    const double mean = sum / n;
    const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1));
    const double sd = std::sqrt(var);
    if (g[static_cast<std::size_t>(t)] < mean - 3.0 * sd) {
      bolus = t;
      break;
    }
    push(g[static_cast<std::size_t>(t)]);
  }
  if (bolus < 0) {
    throw processing_error(
        "no bolus passage found: the signal never drops below the baseline "
        "band");
  }
  const int baseline_end = bolus - 1;
  if (baseline_end < 4) {
    throw processing_error("bolus arrives before a 5-sample baseline forms");
  }

  ConcentrationResult res;
  res.baseline_end = baseline_end;
  res.bolus_index = bolus;
  res.conc = Volume4D::zeros(signal.nx, signal.ny, signal.nz, signal.nt);
  res.conc.tr = signal.tr;
  res.conc.te = signal.te;
  res.conc.spacing = signal.spacing;
  res.conc.affine = signal.affine;
  res.valid = Mask3D::full(signal.nx, signal.ny, signal.nz, false);
  res.s0 = Volume3D::zeros(signal.nx, signal.ny, signal.nz);
  res.s0.spacing = signal.spacing;
  res.s0.affine = signal.affine;

  for (std::size_t v = 0; v < fs; ++v) {
    if (!mask.data[v]) continue;
    double s0 = 0;
    for (int t = 0; t <= baseline_end; ++t) {
      s0 += signal.data[fs * static_cast<std::size_t>(t) + v];
    }
    s0 /= baseline_end + 1;
    res.s0.data[v] = static_cast<float>(s0);
    if (!(s0 > 0)) continue;  // invalid voxel: concentration stays zero
    res.valid.data[v] = 1;
    const double floor_value = 1e-6 * s0;
    for (int t = 0; t < signal.nt; ++t) {
      const double s = std::max(
          static_cast<double>(signal.data[fs * static_cast<std::size_t>(t) + v]),
          floor_value);
      res.conc.data[fs * static_cast<std::size_t>(t) + v] =
          static_cast<float>(-std::log(s / s0) / te);
    }
  }
  return res;
}

}  // namespace dscpmd
