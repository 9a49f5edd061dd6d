#include "dscpmd/mask.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "dscpmd/error.hpp"

namespace dscpmd {

double otsu_threshold(const Volume3D& v) {
  if (v.data.empty()) throw processing_error("cannot threshold an empty volume");
  float lo = v.data[0], hi = v.data[0];
  for (float x : v.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) {
    throw processing_error("cannot threshold a constant volume");
  }
  constexpr int kBins = 256;
  const double width = (static_cast<double>(hi) - lo) / kBins;
  std::vector<std::size_t> hist(kBins, 0);
  for (float x : v.data) {
    int b = static_cast<int>((x - lo) / width);
    if (b < 0) b = 0;
    if (b >= kBins) b = kBins - 1;
    hist[static_cast<std::size_t>(b)]++;
  }
  const double total = static_cast<double>(v.data.size());
  double sum_all = 0;
  for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[static_cast<std::size_t>(b)]);

  // Maximize between-class variance over the split "bin <= b is background".
  // A tied maximum resolves to the middle of the tied run, which keeps the
  // result stable under affine intensity rescaling.
  double best = -1;
  std::vector<int> best_bins;
  double w0 = 0, sum0 = 0;
  for (int b = 0; b < kBins - 1; ++b) {
    w0 += static_cast<double>(hist[static_cast<std::size_t>(b)]);
    sum0 += b * static_cast<double>(hist[static_cast<std::size_t>(b)]);
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best + 1e-12 * std::max(1.0, best)) {
      best = between;
      best_bins.assign(1, b);
    } else if (std::abs(between - best) <= 1e-12 * std::max(1.0, best)) {
      best_bins.push_back(b);
    }
  }
  if (best_bins.empty()) {
    throw processing_error("cannot threshold a constant volume");
  }
  const int mid = best_bins[best_bins.size() / 2];
  // Threshold at the upper edge of the chosen bin; foreground is strictly
  // above it.
  return lo + (mid + 1) * width;
}

namespace {

constexpr int kNbr[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                            {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};

}  // namespace

Mask3D largest_component_6(const Mask3D& m) {
  Mask3D out = Mask3D::full(m.nx, m.ny, m.nz, false);
  std::vector<std::int32_t> comp(m.data.size(), -1);
  std::int32_t ncomp = 0;
  std::size_t best_size = 0;
  std::int32_t best_comp = -1;
  std::vector<std::size_t> stack;
  for (int z = 0; z < m.nz; ++z) {
    for (int y = 0; y < m.ny; ++y) {
      for (int x = 0; x < m.nx; ++x) {
        const std::size_t i = m.idx(x, y, z);
        if (!m.data[i] || comp[i] >= 0) continue;
        const std::int32_t c = ncomp++;
        std::size_t size = 0;
        stack.assign(1, i);
        comp[i] = c;
        while (!stack.empty()) {
          const std::size_t cur = stack.back();
          stack.pop_back();
          ++size;
          const int cz = static_cast<int>(cur / (static_cast<std::size_t>(m.nx) * m.ny));
          const std::size_t rem = cur % (static_cast<std::size_t>(m.nx) * m.ny);
          const int cy = static_cast<int>(rem / static_cast<std::size_t>(m.nx));
          const int cx = static_cast<int>(rem % static_cast<std::size_t>(m.nx));
          for (const auto& d : kNbr) {
            const int nx2 = cx + d[0], ny2 = cy + d[1], nz2 = cz + d[2];
            if (nx2 < 0 || nx2 >= m.nx || ny2 < 0 || ny2 >= m.ny || nz2 < 0 ||
                nz2 >= m.nz) {
              continue;
            }
            const std::size_t ni = m.idx(nx2, ny2, nz2);
            if (m.data[ni] && comp[ni] < 0) {
              comp[ni] = c;
              stack.push_back(ni);
            }
          }
        }
        if (size > best_size) {
          best_size = size;
          best_comp = c;
        }
      }
    }
  }
  if (best_comp >= 0) {
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      out.data[i] = (m.data[i] && comp[i] == best_comp) ? 1 : 0;
    }
  }
  return out;
}

Mask3D morphological_close_ball1(const Mask3D& m) {
  auto dilate_or_erode = [&](const Mask3D& in, bool dilate) {
    Mask3D out = Mask3D::full(in.nx, in.ny, in.nz, false);
    for (int z = 0; z < in.nz; ++z) {
      for (int y = 0; y < in.ny; ++y) {
        for (int x = 0; x < in.nx; ++x) {
          bool hit = in.get(x, y, z);
          if (dilate ? hit : !hit) {
            out.set(x, y, z, dilate);
            continue;
          }
          bool found = false;
          for (const auto& d : kNbr) {
            const int nx2 = x + d[0], ny2 = y + d[1], nz2 = z + d[2];
            // Outside the grid counts as background.
            const bool nb = nx2 >= 0 && nx2 < in.nx && ny2 >= 0 &&
                                    ny2 < in.ny && nz2 >= 0 && nz2 < in.nz
                                ? in.get(nx2, ny2, nz2)
                                : false;
            if (dilate ? nb : !nb) {
              found = true;
              break;
            }
          }
          out.set(x, y, z, dilate ? found : !found);
        }
      }
    }
    return out;
  };
  return dilate_or_erode(dilate_or_erode(m, true), false);
}

Mask3D fill_holes_per_slice(const Mask3D& m) {
  Mask3D out = m;
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(m.nx) * m.ny);
  std::vector<int> stack;
  for (int z = 0; z < m.nz; ++z) {
    std::fill(outside.begin(), outside.end(), 0);
    stack.clear();
    auto sidx = [&](int x, int y) { return y * m.nx + x; };
    auto push_if_bg = [&](int x, int y) {
      const int i = sidx(x, y);
      if (!outside[static_cast<std::size_t>(i)] && !m.get(x, y, z)) {
        outside[static_cast<std::size_t>(i)] = 1;
        stack.push_back(i);
      }
    };
    for (int x = 0; x < m.nx; ++x) {
      push_if_bg(x, 0);
      push_if_bg(x, m.ny - 1);
    }
    for (int y = 0; y < m.ny; ++y) {
      push_if_bg(0, y);
      push_if_bg(m.nx - 1, y);
    }
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const int cx = cur % m.nx, cy = cur / m.nx;
      if (cx > 0) push_if_bg(cx - 1, cy);
      if (cx + 1 < m.nx) push_if_bg(cx + 1, cy);
      if (cy > 0) push_if_bg(cx, cy - 1);
      if (cy + 1 < m.ny) push_if_bg(cx, cy + 1);
    }
    // Background not reachable from the slice border is a hole.
    for (int y = 0; y < m.ny; ++y) {
      for (int x = 0; x < m.nx; ++x) {
        if (!m.get(x, y, z) && !outside[static_cast<std::size_t>(sidx(x, y))]) {
          out.set(x, y, z, true);
        }
      }
    }
  }
  return out;
}

Mask3D brain_mask(const Volume3D& first_timepoint) {
  const double thr = otsu_threshold(first_timepoint);
  Mask3D m = Mask3D::full(first_timepoint.nx, first_timepoint.ny,
                          first_timepoint.nz, false);
  for (std::size_t i = 0; i < first_timepoint.data.size(); ++i) {
    m.data[i] = first_timepoint.data[i] > thr ? 1 : 0;
  }
  m = largest_component_6(m);
  m = morphological_close_ball1(m);
  m = fill_holes_per_slice(m);
  if (m.count() == 0) {
    throw processing_error(
        "automatic brain masking produced an empty mask; supply a manual "
        "mask volume instead");
  }
  return m;
}

}  // namespace dscpmd
