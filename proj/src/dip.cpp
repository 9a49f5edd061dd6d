#include <algorithm>
#include <cmath>
#include <vector>

#include "dscpmd/descriptors.hpp"

namespace dscpmd {

namespace {

// The dip is the smallest band half-width t such that some unimodal CDF G
// stays within t of the empirical CDF everywhere. Writing p_i / q_i for the
// ECDF just below / at the i-th distinct value v_i, a unimodal G with its
// mode (and optional atom) at v_m must satisfy, with caps c_i = p_i + t and
// floors f_i = q_i - t:
//
//   * left of the mode: a convex nondecreasing sequence through the bands
//     [f_i, c_i] (i < m) ending at the pre-jump level u in [p_m - t, p_m + t];
//   * right of the mode: a concave nondecreasing sequence from g_m in
//     [q_m - t, q_m + t] through the bands (i > m), reaching 1 - t at the top;
//   * u <= g_m.
//
// Modes strictly between samples or outside the data range reduce to these
// cases (the mode segment can always absorb the kink). Three facts make the
// check at a fixed t cheap:
//
//   1. Convex-side feasibility: the greatest convex minorant of the caps is
//      the maximal convex function under them, so a feasible sequence exists
//      iff that minorant clears every floor. Adding points only lowers the
//      minorant, so feasible prefixes form an initial run of modes.
//   2. The minimal reachable end value is the upper envelope of pairwise
//      slope bounds: for i < j, every feasible sequence has
//      g(v) >= f_j + max(0, (f_j - c_i)/(v_j - v_i)) * (v - v_j); the
//      envelope itself is convex, nondecreasing, and in-band, so the bound
//      set is tight. The best i for a given j is a tangent from (v_j, f_j)
//      to the cap minorant, because slopes to a convex chain from a point on
//      its right are unimodal along the chain.
//   3. The achievable end values form an interval (raising the final point
//      of a convex sequence keeps it convex), so the two sides join iff
//      u_min(m) <= g_max(m).
//
// The concave side reuses the same primitives on the reflected data
// (v, p, q) -> (-v, 1 - q, 1 - p). Feasibility is monotone in t, so the dip
// is found by bisection over the band half-width.

constexpr double kTol = 1e-14;

struct Side {
  std::vector<double> v;    // distinct values, ascending
  std::vector<double> plo;  // ECDF just below v[i]
  std::vector<double> qhi;  // ECDF at v[i]
};

// Convex-side fit at band t: bands, the largest feasible mode prefix, and
// the mandatory slope out of each point (sigma[j], fact 2).
struct Fit {
  int maxm = -1;
  std::vector<double> cap, flo, sigma;
};

void left_fit(const Side& s, double t, Fit& f) {
  const std::size_t k = s.v.size();
  f.cap.resize(k);
  f.flo.resize(k);
  f.sigma.assign(k, 0.0);
  f.maxm = -1;
  for (std::size_t i = 0; i < k; ++i) {
    f.cap[i] = std::min(s.plo[i] + t, 1.0);
    f.flo[i] = std::max(s.qhi[i] - t, 0.0);
  }

  std::vector<std::size_t> hull;  // vertex indices of the cap minorant
  hull.reserve(k);
  double viol = 0.0;  // worst floor violation of the minorant so far
  for (std::size_t m = 0; m < k; ++m) {
    // sigma[m]: steepest mandatory slope into v_m over caps 0..m-1, via the
    // tangent from (v_m, flo_m); the slope along the hull rises then falls.
    if (!hull.empty()) {
      std::size_t lo = 0, hi = hull.size() - 1;
      while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        const std::size_t a = hull[mid], b = hull[mid + 1];
        // slope(P, b) > slope(P, a)?  (cross-multiplied; v[m] - v[*] > 0)
        if ((f.flo[m] - f.cap[b]) * (s.v[m] - s.v[a]) >
            (f.flo[m] - f.cap[a]) * (s.v[m] - s.v[b])) {
          lo = mid + 1;
        } else {
          hi = mid;
        }
      }
      const std::size_t a = hull[lo];
      const double rise = f.flo[m] - f.cap[a];
      if (rise > 0) f.sigma[m] = rise / (s.v[m] - s.v[a]);
    }

    // Append cap point m to the minorant; re-check floors under the new
    // last segment (pops only ever lower the minorant).
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2], b = hull.back();
      if ((s.v[b] - s.v[a]) * (f.cap[m] - f.cap[a]) -
              (s.v[m] - s.v[a]) * (f.cap[b] - f.cap[a]) <=
          0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    if (!hull.empty()) {
      const std::size_t a = hull.back();
      if (a + 1 < m) {
        const double slope = (f.cap[m] - f.cap[a]) / (s.v[m] - s.v[a]);
        for (std::size_t i = a + 1; i < m; ++i) {
          const double gv = f.cap[a] + slope * (s.v[i] - s.v[a]);
          viol = std::max(viol, f.flo[i] - gv);
        }
      }
    }
    hull.push_back(m);

    // Mode at m: its own pre-jump floor p_m - t never exceeds its cap, so
    // the prefix is feasible iff the interior floors are respected.
    if (viol > kTol) return;
    f.maxm = static_cast<int>(m);
    viol = std::max(viol, f.flo[m] - f.cap[m]);
  }
}

}  // namespace

double dip_statistic(std::vector<double> values) {
  const std::size_t n = values.size();
  if (n <= 1) return 0.0;
  std::sort(values.begin(), values.end());

  Side left;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[j] == values[i]) ++j;
    left.v.push_back(values[i]);
    left.plo.push_back(static_cast<double>(i) / static_cast<double>(n));
    left.qhi.push_back(static_cast<double>(j) / static_cast<double>(n));
    i = j;
  }
  const std::size_t k = left.v.size();
  if (k == 1) return 0.0;  // a point mass is already unimodal

  // Reflected data for the concave side: G(v) <-> 1 - G(-v) swaps the roles
  // of the two ECDF levels and of the pre-jump / at-value mode bands.
  Side right;
  right.v.resize(k);
  right.plo.resize(k);
  right.qhi.resize(k);
  for (std::size_t a = 0; a < k; ++a) {
    const std::size_t b = k - 1 - a;
    right.v[a] = -left.v[b];
    right.plo[a] = 1.0 - left.qhi[b];
    right.qhi[a] = 1.0 - left.plo[b];
  }

  Fit lf, rf;
  auto feasible = [&](double t) {
    left_fit(left, t, lf);
    if (lf.maxm < 0) return false;
    left_fit(right, t, rf);
    if (rf.maxm < 0) return false;
    const std::size_t mlo =
        k - 1 - static_cast<std::size_t>(rf.maxm);  // rf covers modes >= mlo
    for (std::size_t m = mlo; m <= static_cast<std::size_t>(lf.maxm); ++m) {
      const std::size_t r = k - 1 - m;
      double umin = std::max(left.plo[m] - t, 0.0);
      for (std::size_t j = 0; j < m; ++j) {
        umin = std::max(umin,
                        lf.flo[j] + lf.sigma[j] * (left.v[m] - left.v[j]));
      }
      double rmin = std::max(right.plo[r] - t, 0.0);
      for (std::size_t j = 0; j < r; ++j) {
        rmin = std::max(rmin,
                        rf.flo[j] + rf.sigma[j] * (right.v[r] - right.v[j]));
      }
      if (umin <= 1.0 - rmin + kTol) return true;
    }
    return false;
  };

  double lo = 0.0, hi = 0.5;
  for (int it = 0; it < 44; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace dscpmd
