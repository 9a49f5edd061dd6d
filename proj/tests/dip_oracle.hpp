// Independent oracle for the dip statistic, used only by tests.
//
// dip(sample) = inf over unimodal CDFs G of sup_x |F_n(x) - G(x)|, where F_n
// is the empirical CDF. A unimodal CDF is convex left of its mode and concave
// right of it, and may carry a single atom at the mode.
//
// Because F_n is a step function and G is monotone, the sup is attained at
// (limits toward) the distinct sample values v_1 < ... < v_k. Writing
// g_j = G(v_j) and, for a mode at v_m, u = G(v_m-)  (the atom is g_m - u):
//
//   |F_j     - g_j| <= t                     (value at v_j; F_j = ECDF at v_j)
//   |F_{j-1} - g_j| <= t   for j != m        (limit from the left of v_j)
//   |F_{m-1} - u  | <= t                     (limit from the left of the mode)
//   g monotone, g_{m-1} <= u <= g_m, g_1 >= 0, g_k <= 1
//   segment slopes nondecreasing left of the mode, nonincreasing right of it
//     (the segment ending at the mode runs to u, not g_m)
//
// and dip = min over candidate modes m of the LP value  min t.  Modes strictly
// between samples or beyond the data range reduce to these cases.
//
// The LP is solved exactly with a small dense two-phase simplex using Bland's
// rule, so the oracle shares no code or algorithm with the implementation
// under test (which uses the greatest-convex-minorant fixed point).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace diporacle {

namespace detail {

constexpr double kTol = 1e-9;

struct Lp {
  // minimize c.x  subject to  a x <= b,  x >= 0
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  std::vector<double> c;

  void add(std::vector<double> row, double rhs) {
    a.push_back(std::move(row));
    b.push_back(rhs);
  }
};

// Two-phase primal simplex, Bland's rule (first improving column, smallest
// basis index on ratio ties), dense tableau with an incremental cost row.
inline bool solve_lp(const Lp& lp, double* value) {
  const int m = static_cast<int>(lp.a.size());
  const int n = static_cast<int>(lp.c.size());
  int n_art = 0;
  for (double bi : lp.b) {
    if (bi < 0) ++n_art;
  }
  const int ncol = n + m + n_art;
  std::vector<std::vector<double>> t(
      static_cast<std::size_t>(m),
      std::vector<double>(static_cast<std::size_t>(ncol), 0.0));
  std::vector<double> rhs(static_cast<std::size_t>(m));
  std::vector<int> basis(static_cast<std::size_t>(m));
  int next_art = n + m;
  for (int i = 0; i < m; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const double s = lp.b[si] < 0 ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j) {
      t[si][static_cast<std::size_t>(j)] = s * lp.a[si][static_cast<std::size_t>(j)];
    }
    t[si][static_cast<std::size_t>(n + i)] = s;
    rhs[si] = s * lp.b[si];
    if (s < 0) {
      t[si][static_cast<std::size_t>(next_art)] = 1.0;
      basis[si] = next_art++;
    } else {
      basis[si] = n + i;
    }
  }

  std::vector<double> z(static_cast<std::size_t>(ncol), 0.0);

  auto pivot = [&](int pr, int pc) {
    const std::size_t r = static_cast<std::size_t>(pr);
    const std::size_t c = static_cast<std::size_t>(pc);
    const double pv = t[r][c];
    for (auto& x : t[r]) x /= pv;
    rhs[r] /= pv;
    for (int i = 0; i < m; ++i) {
      if (i == pr) continue;
      const std::size_t si = static_cast<std::size_t>(i);
      const double f = t[si][c];
      if (f == 0.0) continue;
      for (int j = 0; j < ncol; ++j) {
        t[si][static_cast<std::size_t>(j)] -= f * t[r][static_cast<std::size_t>(j)];
      }
      rhs[si] -= f * rhs[r];
    }
    const double zf = z[c];
    if (zf != 0.0) {
      for (int j = 0; j < ncol; ++j) {
        z[static_cast<std::size_t>(j)] -= zf * t[r][static_cast<std::size_t>(j)];
      }
    }
    basis[r] = pc;
  };

  auto price_out = [&](const std::vector<double>& cost) {
    z = cost;
    for (int i = 0; i < m; ++i) {
      const double cb = cost[static_cast<std::size_t>(basis[static_cast<std::size_t>(i)])];
      if (cb == 0.0) continue;
      for (int j = 0; j < ncol; ++j) {
        z[static_cast<std::size_t>(j)] -=
            cb * t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
  };

  auto optimize = [&](int limit) {
    for (int iter = 0; iter < 20000; ++iter) {
      int enter = -1;
      for (int j = 0; j < limit; ++j) {
        if (z[static_cast<std::size_t>(j)] < -kTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = 0;
      for (int i = 0; i < m; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const double a = t[si][static_cast<std::size_t>(enter)];
        if (a > kTol) {
          const double ratio = rhs[si] / a;
          if (leave < 0 || ratio < best - 1e-12 ||
              (std::abs(ratio - best) <= 1e-12 &&
               basis[si] < basis[static_cast<std::size_t>(leave)])) {
            leave = i;
            best = ratio;
          }
        }
      }
      if (leave < 0) return false;  // unbounded
      pivot(leave, enter);
    }
    return false;  // cycling guard; unreachable with Bland's rule
  };

  if (n_art > 0) {
    std::vector<double> c1(static_cast<std::size_t>(ncol), 0.0);
    for (int j = n + m; j < ncol; ++j) c1[static_cast<std::size_t>(j)] = 1.0;
    price_out(c1);
    if (!optimize(ncol)) return false;
    double v1 = 0;
    for (int i = 0; i < m; ++i) {
      v1 += c1[static_cast<std::size_t>(basis[static_cast<std::size_t>(i)])] *
            rhs[static_cast<std::size_t>(i)];
    }
    if (v1 > 1e-7) return false;  // infeasible
    // Drive leftover zero-level artificials out of the basis when possible.
    for (int i = 0; i < m; ++i) {
      if (basis[static_cast<std::size_t>(i)] >= n + m) {
        for (int j = 0; j < n + m; ++j) {
          if (std::abs(t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) >
              kTol) {
            pivot(i, j);
            break;
          }
        }
      }
    }
  }
  std::vector<double> c2(static_cast<std::size_t>(ncol), 0.0);
  for (int j = 0; j < n; ++j) c2[static_cast<std::size_t>(j)] = lp.c[static_cast<std::size_t>(j)];
  price_out(c2);
  if (!optimize(n + m)) return false;  // artificial columns may not re-enter
  double v = 0;
  for (int i = 0; i < m; ++i) {
    v += c2[static_cast<std::size_t>(basis[static_cast<std::size_t>(i)])] *
         rhs[static_cast<std::size_t>(i)];
  }
  *value = v;
  return true;
}

}  // namespace detail

// LP reference value of the dip statistic. Intended for small samples
// (n up to a few dozen); throws on solver failure.
inline double dip_lp(std::vector<double> xs) {
  if (xs.size() <= 1) return 0.0;
  std::sort(xs.begin(), xs.end());
  std::vector<double> v;
  std::vector<double> frac;  // ECDF at v[j]
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size();) {
    std::size_t j = i;
    while (j < xs.size() && xs[j] == xs[i]) ++j;
    v.push_back(xs[i]);
    frac.push_back(static_cast<double>(j) / n);
    i = j;
  }
  const int k = static_cast<int>(v.size());
  if (k == 1) return 0.0;  // constant sample

  // Variables: t | g_0..g_{k-1} | u
  const int vt = 0;
  auto vg = [](int j) { return 1 + j; };
  const int vu = k + 1;
  const int nvar = k + 2;

  double best = std::numeric_limits<double>::infinity();
  for (int mode = 0; mode < k; ++mode) {
    detail::Lp lp;
    lp.c.assign(static_cast<std::size_t>(nvar), 0.0);
    lp.c[static_cast<std::size_t>(vt)] = 1.0;
    auto row = [&] { return std::vector<double>(static_cast<std::size_t>(nvar), 0.0); };

    for (int j = 0; j < k; ++j) {
      const std::size_t sj = static_cast<std::size_t>(j);
      {  // |F_j - g_j| <= t
        auto r = row();
        r[static_cast<std::size_t>(vg(j))] = 1;
        r[static_cast<std::size_t>(vt)] = -1;
        lp.add(r, frac[sj]);
      }
      {
        auto r = row();
        r[static_cast<std::size_t>(vg(j))] = -1;
        r[static_cast<std::size_t>(vt)] = -1;
        lp.add(r, -frac[sj]);
      }
      // left-limit band: |F_{j-1} - G(v_j-)| <= t
      const double fprev = j == 0 ? 0.0 : frac[sj - 1];
      const int var = j == mode ? vu : vg(j);
      {
        auto r = row();
        r[static_cast<std::size_t>(var)] = 1;
        r[static_cast<std::size_t>(vt)] = -1;
        lp.add(r, fprev);
      }
      {
        auto r = row();
        r[static_cast<std::size_t>(var)] = -1;
        r[static_cast<std::size_t>(vt)] = -1;
        lp.add(r, -fprev);
      }
    }

    // Monotone chain with the atom spliced in at the mode.
    for (int j = 0; j + 1 < k; ++j) {
      if (j + 1 == mode) {
        auto r1 = row();
        r1[static_cast<std::size_t>(vg(j))] = 1;
        r1[static_cast<std::size_t>(vu)] = -1;
        lp.add(r1, 0.0);  // g_j <= u
        auto r2 = row();
        r2[static_cast<std::size_t>(vu)] = 1;
        r2[static_cast<std::size_t>(vg(j + 1))] = -1;
        lp.add(r2, 0.0);  // u <= g_{j+1}
      } else {
        auto r = row();
        r[static_cast<std::size_t>(vg(j))] = 1;
        r[static_cast<std::size_t>(vg(j + 1))] = -1;
        lp.add(r, 0.0);
      }
    }
    if (mode == 0) {
      auto r = row();
      r[static_cast<std::size_t>(vu)] = 1;
      r[static_cast<std::size_t>(vg(0))] = -1;
      lp.add(r, 0.0);  // u <= g_0
    }
    {
      auto r = row();
      r[static_cast<std::size_t>(vg(k - 1))] = 1;
      lp.add(r, 1.0);  // g_{k-1} <= 1
    }

    // Segment j runs v_j -> v_{j+1}; its right endpoint is u when the
    // segment ends at the mode. add_slope accumulates mult * (right - g_j).
    auto add_slope = [&](std::vector<double>& r, int j, double mult) {
      const int right = (j + 1 == mode) ? vu : vg(j + 1);
      r[static_cast<std::size_t>(right)] += mult;
      r[static_cast<std::size_t>(vg(j))] -= mult;
    };
    auto d = [&](int j) {
      return v[static_cast<std::size_t>(j + 1)] - v[static_cast<std::size_t>(j)];
    };
    // Convex left of the mode: slope_j <= slope_{j+1} for j+1 <= mode-1.
    for (int j = 0; j + 1 <= mode - 1; ++j) {
      auto r = row();
      add_slope(r, j, d(j + 1));
      add_slope(r, j + 1, -d(j));
      lp.add(r, 0.0);
    }
    // Concave right of the mode: slope_j >= slope_{j+1} for j >= mode.
    for (int j = mode; j + 1 <= k - 2; ++j) {
      auto r = row();
      add_slope(r, j + 1, d(j));
      add_slope(r, j, -d(j + 1));
      lp.add(r, 0.0);
    }

    double value = 0;
    if (!detail::solve_lp(lp, &value)) {
      throw std::runtime_error("dip LP oracle: solver failed");
    }
    best = std::min(best, value);
  }
  return best;
}

}  // namespace diporacle
