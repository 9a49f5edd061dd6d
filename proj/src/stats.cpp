#include "dscpmd/stats.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "dscpmd/error.hpp"
#include "internal_util.hpp"

namespace dscpmd {

namespace {

// Exact two-sided p for a tie-free rank sum: count the size-n1 subsets of
// {1..N} at or beyond the observed sum by dynamic programming. The counts
// fit comfortably in 64 bits for N <= 24.
double exact_rank_sum_p(int n1, int big_n, double w) {
  const int smax = big_n * (big_n + 1) / 2;
  std::vector<std::vector<std::uint64_t>> dp(
      static_cast<std::size_t>(n1) + 1,
      std::vector<std::uint64_t>(static_cast<std::size_t>(smax) + 1, 0));
  dp[0][0] = 1;
  for (int r = 1; r <= big_n; ++r) {
    for (int k = std::min(n1, r); k >= 1; --k) {
      for (int s = smax; s >= r; --s) {
        dp[static_cast<std::size_t>(k)][static_cast<std::size_t>(s)] +=
            dp[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(s - r)];
      }
    }
  }
  std::uint64_t total = 0, at_or_below = 0, at_or_above = 0;
  const auto wi = static_cast<long long>(std::llround(w));
  for (int s = 0; s <= smax; ++s) {
    const std::uint64_t c =
        dp[static_cast<std::size_t>(n1)][static_cast<std::size_t>(s)];
    total += c;
    if (s <= wi) at_or_below += c;
    if (s >= wi) at_or_above += c;
  }
  const double tail = static_cast<double>(std::min(at_or_below, at_or_above)) /
                      static_cast<double>(total);
  return std::min(1.0, 2.0 * tail);
}

}  // namespace

RankSumResult wilcoxon_rank_sum(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.empty() || b.empty()) {
    throw validation_error("rank-sum test needs non-empty samples");
  }
  const int n1 = static_cast<int>(a.size());
  const int n2 = static_cast<int>(b.size());
  const int big_n = n1 + n2;

  struct Tagged {
    double value;
    bool from_a;
  };
  std::vector<Tagged> all;
  all.reserve(static_cast<std::size_t>(big_n));
  for (double v : a) all.push_back({v, true});
  for (double v : b) all.push_back({v, false});
  std::sort(all.begin(), all.end(),
            [](const Tagged& x, const Tagged& y) { return x.value < y.value; });

  // Midranks, plus the tie-term sum for the variance correction.
  double w = 0;
  bool has_ties = false;
  double tie_term = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double t = static_cast<double>(j - i);
    if (t > 1) {
      has_ties = true;
      tie_term += t * t * t - t;
    }
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].from_a) w += rank;
    }
    i = j;
  }

  RankSumResult res;
  res.w = w;
  if (n1 <= 12 && n2 <= 12 && !has_ties) {
    res.exact = true;
    res.p = exact_rank_sum_p(n1, big_n, w);
    return res;
  }

  const double mean = n1 * (big_n + 1) / 2.0;
  if (w == mean) {
    res.p = 1.0;
    return res;
  }
  const double var =
      (static_cast<double>(n1) * n2 / 12.0) *
      ((big_n + 1) - tie_term / (static_cast<double>(big_n) * (big_n - 1)));
  if (!(var > 0)) {
    res.p = 1.0;
    return res;
  }
  // Continuity correction of 0.5 toward the mean.
  const double shifted = w > mean ? w - 0.5 : w + 0.5;
  const double z = (shifted - mean) / std::sqrt(var);
  res.p = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return res;
}

double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) {
    throw validation_error("effect size needs non-empty samples");
  }
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n1;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n2;
  double ss = 0;
  for (double v : a) ss += (v - ma) * (v - ma);
  for (double v : b) ss += (v - mb) * (v - mb);
  const double dof = n1 + n2 - 2;
  const double pooled = dof > 0 ? std::sqrt(ss / dof) : 0.0;
  if (pooled == 0) {
    if (ma == mb) return 0.0;
    return ma > mb ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
  }
  return (ma - mb) / pooled;
}

double bonferroni(double p, int m) {
  return std::min(1.0, static_cast<double>(m) * p);
}

ScreenResult screen_features(
    const std::vector<std::string>& names,
    const std::vector<std::vector<std::optional<double>>>& group_a,
    const std::vector<std::vector<std::optional<double>>>& group_b,
    int multiplicity, double alpha, double min_effect) {
  const std::size_t n_features = names.size();
  for (const auto& row : group_a) {
    if (row.size() != n_features) {
      throw validation_error("group A row width differs from the name list");
    }
  }
  for (const auto& row : group_b) {
    if (row.size() != n_features) {
      throw validation_error("group B row width differs from the name list");
    }
  }

  ScreenResult result;
  std::vector<ScreenRow> rows;
  std::vector<double> va, vb;
  for (std::size_t f = 0; f < n_features; ++f) {
    va.clear();
    vb.clear();
    for (const auto& row : group_a) {
      if (row[f]) va.push_back(*row[f]);
    }
    for (const auto& row : group_b) {
      if (row[f]) vb.push_back(*row[f]);
    }
    if (va.size() < 2 || vb.size() < 2) {
      result.skipped.push_back(names[f]);
      continue;
    }
    ScreenRow r;
    r.feature = names[f];
    r.n_a = static_cast<int>(va.size());
    r.n_b = static_cast<int>(vb.size());
    r.mean_a = std::accumulate(va.begin(), va.end(), 0.0) / va.size();
    r.mean_b = std::accumulate(vb.begin(), vb.end(), 0.0) / vb.size();
    const RankSumResult rs = wilcoxon_rank_sum(va, vb);
    r.p = rs.p;
    r.exact = rs.exact;
    r.d = cohens_d(va, vb);
    rows.push_back(std::move(r));
  }
  result.n_tests = multiplicity > 0 ? multiplicity
                                    : static_cast<int>(rows.size());
  for (auto& r : rows) {
    r.p_adjusted = bonferroni(r.p, result.n_tests);
    r.significant = r.p_adjusted < alpha && std::abs(r.d) > min_effect;
  }
  std::sort(rows.begin(), rows.end(), [](const ScreenRow& x, const ScreenRow& y) {
    const double ax = std::abs(x.d), ay = std::abs(y.d);
    if (ax != ay) return ax > ay;
    return x.feature < y.feature;
  });
  result.rows = std::move(rows);
  return result;
}

void save_screen_csv(const ScreenResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "feature,n_a,n_b,mean_a,mean_b,p,p_adjusted,d,exact,significant\n";
  for (const auto& row : r.rows) {
    out << row.feature << ',' << row.n_a << ',' << row.n_b << ','
        << detail::fmt_double(row.mean_a) << ','
        << detail::fmt_double(row.mean_b) << ',' << detail::fmt_double(row.p)
        << ',' << detail::fmt_double(row.p_adjusted) << ','
        << detail::fmt_double(row.d) << ',' << (row.exact ? 1 : 0) << ','
        << (row.significant ? 1 : 0) << '\n';
  }
  if (!out) throw io_error("failed writing '" + path + "'");
}

void save_screen_json(const ScreenResult& r, const std::string& path) {
  nlohmann::json j;
  j["n_tests"] = r.n_tests;
  j["skipped"] = r.skipped;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    // JSON has no infinity; an infinite effect size (zero pooled SD) is
    // clamped to the largest finite double.
    double d = row.d;
    if (std::isinf(d)) d = d > 0 ? DBL_MAX : -DBL_MAX;
    rows.push_back({{"feature", row.feature},
                    {"n_a", row.n_a},
                    {"n_b", row.n_b},
                    {"mean_a", row.mean_a},
                    {"mean_b", row.mean_b},
                    {"p", row.p},
                    {"p_adjusted", row.p_adjusted},
                    {"d", d},
                    {"exact", row.exact},
                    {"significant", row.significant}});
  }
  j["rows"] = rows;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

void save_boxplot_data(
    const ScreenResult& r, const std::vector<std::string>& names,
    const std::vector<std::vector<std::optional<double>>>& group_a,
    const std::vector<std::vector<std::optional<double>>>& group_b,
    std::size_t top_n, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "# gnuplot boxplot data: feature_index group value feature_name\n";
  out << "# plot: plot 'boxplot.dat' using (column(1)+($2==2?0.3:0)):3\n";
  const std::size_t limit = std::min(top_n, r.rows.size());
  for (std::size_t i = 0; i < limit; ++i) {
    const std::string& feature = r.rows[i].feature;
    std::size_t col = names.size();
    for (std::size_t f = 0; f < names.size(); ++f) {
      if (names[f] == feature) {
        col = f;
        break;
      }
    }
    if (col == names.size()) continue;
    for (const auto& row : group_a) {
      if (row[col]) {
        out << i + 1 << " 1 " << detail::fmt_double(*row[col]) << ' '
            << feature << '\n';
      }
    }
    for (const auto& row : group_b) {
      if (row[col]) {
        out << i + 1 << " 2 " << detail::fmt_double(*row[col]) << ' '
            << feature << '\n';
      }
    }
  }
  if (!out) throw io_error("failed writing '" + path + "'");
}

}  // namespace dscpmd
