#include <algorithm>
#include <cmath>
#include <numeric>

#include "dscpmd/error.hpp"
#include "dscpmd/model.hpp"

namespace dscpmd {

ShapResult linear_shap(const Matrix& z, const std::vector<double>& weights,
                       double intercept) {
  const std::size_t n = z.size();
  if (n == 0) throw validation_error("no samples for attribution");
  const std::size_t p = weights.size();
  for (const auto& row : z) {
    if (row.size() != p) {
      throw validation_error("row width differs from the weight vector");
    }
  }

  std::vector<double> mu(p, 0.0);
  for (const auto& row : z) {
    for (std::size_t j = 0; j < p; ++j) mu[j] += row[j];
  }
  for (auto& m : mu) m /= static_cast<double>(n);

  ShapResult res;
  double base = intercept;
  for (std::size_t j = 0; j < p; ++j) base += weights[j] * mu[j];
  res.base.assign(n, base);
  res.phi.assign(n, std::vector<double>(p, 0.0));
  res.mean_abs.assign(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double phi = weights[j] * (z[i][j] - mu[j]);
      res.phi[i][j] = phi;
      res.mean_abs[j] += std::abs(phi);
    }
  }
  for (auto& m : res.mean_abs) m /= static_cast<double>(n);

  // Ascending influence ranks: 1 = least influential; ties keep the
  // original column order.
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return res.mean_abs[a] < res.mean_abs[b];
                   });
  res.rank.assign(p, 0);
  for (std::size_t k = 0; k < p; ++k) {
    res.rank[order[k]] = static_cast<int>(k) + 1;
  }
  return res;
}

std::vector<GroupImportance> group_importance(
    const std::vector<double>& mean_abs,
    const std::vector<std::vector<std::pair<int, double>>>& feature_groups,
    const std::vector<std::string>& group_names) {
  if (mean_abs.size() != feature_groups.size()) {
    throw validation_error("per-feature group lists differ from the features");
  }
  std::vector<GroupImportance> out(group_names.size());
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    out[g].name = group_names[g];
  }
  for (std::size_t f = 0; f < feature_groups.size(); ++f) {
    for (const auto& [g, share] : feature_groups[f]) {
      if (g < 0 || static_cast<std::size_t>(g) >= out.size()) {
        throw validation_error("feature group index out of range");
      }
      out[static_cast<std::size_t>(g)].total += share * mean_abs[f];
    }
  }
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return out[a].total < out[b].total;
                   });
  for (std::size_t k = 0; k < order.size(); ++k) {
    out[order[k]].rank = static_cast<int>(k) + 1;
  }
  return out;
}

}  // namespace dscpmd
