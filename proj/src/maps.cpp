#include <cmath>
#include <numeric>
#include <vector>

#include "dscpmd/error.hpp"
#include "dscpmd/parallel.hpp"
#include "dscpmd/perfusion.hpp"

namespace dscpmd {

PerfusionMaps compute_maps(const Volume4D& conc, const Mask3D& mask,
                           const std::vector<double>& aif,
                           const TsvdConfig& cfg, int threads) {
  if (conc.nx != mask.nx || conc.ny != mask.ny || conc.nz != mask.nz) {
    throw validation_error("concentration and mask dimensions differ");
  }
  if (static_cast<int>(aif.size()) != conc.nt) {
    throw validation_error("AIF length differs from the series length");
  }
  const double aif_sum = std::accumulate(aif.begin(), aif.end(), 0.0);
  if (!(aif_sum > 0)) {
    throw processing_error("AIF integral is not positive");
  }
  const TsvdDeconvolver deconv(aif, conc.tr, cfg);

  PerfusionMaps maps;
  auto init = [&](Volume3D& v) {
    v = Volume3D::zeros(conc.nx, conc.ny, conc.nz);
    v.spacing = conc.spacing;
    v.affine = conc.affine;
  };
  init(maps.cbf);
  init(maps.cbv);
  init(maps.mtt);
  init(maps.tmax);

  const std::size_t fs = conc.frame_size();
  const int nt = conc.nt;
  const double dt = conc.tr;

  parallel_for(fs, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> tissue(static_cast<std::size_t>(nt));
    for (std::size_t v = begin; v < end; ++v) {
      if (!mask.data[v]) continue;
      double csum = 0;
      for (int t = 0; t < nt; ++t) {
        tissue[static_cast<std::size_t>(t)] =
            conc.data[fs * static_cast<std::size_t>(t) + v];
        csum += tissue[static_cast<std::size_t>(t)];
      }
      const std::vector<double> k = deconv.solve(tissue);
      int argmax = 0;
      for (int t = 1; t < nt; ++t) {
        if (k[static_cast<std::size_t>(t)] > k[static_cast<std::size_t>(argmax)]) {
          argmax = t;
        }
      }
      const double cbf = std::max(k[static_cast<std::size_t>(argmax)], 0.0);
      const double cbv = csum / aif_sum;
      maps.cbf.data[v] = static_cast<float>(cbf);
      maps.cbv.data[v] = static_cast<float>(cbv);
      maps.mtt.data[v] = cbf > 1e-9 ? static_cast<float>(cbv / cbf) : 0.0f;
      maps.tmax.data[v] = static_cast<float>(dt * argmax);
    }
  });
  return maps;
}

double masked_mean(const Volume3D& v, const Mask3D& mask) {
  if (v.nx != mask.nx || v.ny != mask.ny || v.nz != mask.nz) {
    throw validation_error("volume and mask dimensions differ");
  }
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    if (mask.data[i]) {
      acc += v.data[i];
      ++n;
    }
  }
  if (n == 0) throw processing_error("mask is empty");
  return acc / static_cast<double>(n);
}

void normalize_map(Volume3D& v, const Mask3D& mask) {
  const double mean = masked_mean(v, mask);
  if (mean == 0) {
    throw processing_error("masked mean is zero; cannot normalize");
  }
  for (auto& x : v.data) x = static_cast<float>(x / mean);
}

double ncc(const Volume3D& a, const Volume3D& b, const Mask3D& mask) {
  if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz) {
    throw validation_error("volumes have different dimensions");
  }
  if (a.nx != mask.nx || a.ny != mask.ny || a.nz != mask.nz) {
    throw validation_error("volume and mask dimensions differ");
  }
  double sa = 0, sb = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (mask.data[i]) {
      sa += a.data[i];
      sb += b.data[i];
      ++n;
    }
  }
  if (n < 2) {
    throw processing_error("correlation needs at least 2 masked voxels");
  }
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (!mask.data[i]) continue;
    const double da = a.data[i] - ma;
    const double db = b.data[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (!(saa > 0) || !(sbb > 0)) {
    throw processing_error("correlation is undefined for constant input");
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace dscpmd
