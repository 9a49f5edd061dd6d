#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dscpmd/error.hpp"
#include "dscpmd/model.hpp"
#include "dscpmd/rng.hpp"

namespace dscpmd {

namespace {

struct ScoreGroup {
  double score;
  int pos;
  int neg;
};

// Collapses samples into descending tied-score groups.
std::vector<ScoreGroup> grouped(const std::vector<int>& truth,
                                const std::vector<double>& score) {
  if (truth.size() != score.size()) {
    throw validation_error("truth and score sizes differ");
  }
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score[a] > score[b];
  });
  std::vector<ScoreGroup> groups;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    ScoreGroup g{score[order[i]], 0, 0};
    while (j < order.size() && score[order[j]] == score[order[i]]) {
      if (truth[order[j]] == 1) {
        ++g.pos;
      } else {
        ++g.neg;
      }
      ++j;
    }
    groups.push_back(g);
    i = j;
  }
  return groups;
}

}  // namespace

double roc_auc(const std::vector<int>& truth, const std::vector<double>& score,
               std::vector<RocPoint>* curve) {
  const auto groups = grouped(truth, score);
  int total_pos = 0, total_neg = 0;
  for (const auto& g : groups) {
    total_pos += g.pos;
    total_neg += g.neg;
  }
  if (total_pos == 0 || total_neg == 0) {
    throw processing_error("ROC needs both classes present");
  }
  if (curve) {
    curve->clear();
    curve->push_back({0, 0});
  }
  // Trapezoid over each tied block; equivalent to the midrank statistic.
  // The area is accumulated in integer count units and divided exactly once,
  // so perfectly separated scores give exactly 1.0.
  double area2 = 0;
  double tp = 0, fp = 0;
  for (const auto& g : groups) {
    const double tp2 = tp + g.pos;
    const double fp2 = fp + g.neg;
    area2 += (fp2 - fp) * (tp + tp2);
    tp = tp2;
    fp = fp2;
    if (curve) curve->push_back({fp / total_neg, tp / total_pos});
  }
  return area2 / (2.0 * total_pos * total_neg);
}

double average_precision(const std::vector<int>& truth,
                         const std::vector<double>& score,
                         std::vector<PrPoint>* curve) {
  const auto groups = grouped(truth, score);
  int total_pos = 0;
  for (const auto& g : groups) total_pos += g.pos;
  if (total_pos == 0) {
    throw processing_error("average precision needs positive samples");
  }
  if (curve) {
    curve->clear();
    curve->push_back({0, 1});
  }
  double ap = 0;
  double tp = 0, seen = 0, prev_recall = 0;
  for (const auto& g : groups) {
    tp += g.pos;
    seen += g.pos + g.neg;
    const double recall = tp / total_pos;
    const double precision = tp / seen;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    if (curve) curve->push_back({recall, precision});
  }
  return ap;
}

BootstrapResult bootstrap_auc_ci(const std::vector<int>& truth,
                                 const std::vector<double>& prob,
                                 int n_boot, std::uint64_t seed) {
  const std::size_t n = truth.size();
  if (n != prob.size()) {
    throw validation_error("truth and probability sizes differ");
  }
  int total_pos = 0;
  for (int t : truth) total_pos += t == 1 ? 1 : 0;
  if (total_pos == 0 || total_pos == static_cast<int>(n)) {
    throw processing_error("bootstrap needs both classes present");
  }
  if (n_boot < 2) throw validation_error("need at least 2 bootstrap samples");

  Xoshiro256StarStar rng(seed);
  std::vector<double> aucs;
  aucs.reserve(static_cast<std::size_t>(n_boot));
  std::vector<int> bt(n);
  std::vector<double> bp(n);
  BootstrapResult result;
  for (int rep = 0; rep < n_boot; ++rep) {
    // Resamples collapsing to one class carry no ranking information; they
    // are redrawn (and counted) rather than silently dropped.
    int guard = 0;
    while (true) {
      int pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pick = static_cast<std::size_t>(
            rng.bounded(static_cast<std::uint64_t>(n)));
        bt[i] = truth[pick];
        bp[i] = prob[pick];
        pos += bt[i] == 1 ? 1 : 0;
      }
      if (pos > 0 && pos < static_cast<int>(n)) break;
      ++result.redraws;
      if (++guard > 100000) {
        throw processing_error("bootstrap kept drawing single-class samples");
      }
    }
    aucs.push_back(roc_auc(bt, bp, nullptr));
  }
  std::sort(aucs.begin(), aucs.end());
  // Percentile interval with the same interpolated quantile convention used
  // for the descriptors.
  auto quant = [&](double p) {
    const double h = 1.0 + (static_cast<double>(aucs.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    if (lo >= aucs.size()) return aucs.back();
    if (frac == 0.0) return aucs[lo - 1];
    return aucs[lo - 1] + frac * (aucs[lo] - aucs[lo - 1]);
  };
  result.low = quant(0.025);
  result.high = quant(0.975);
  return result;
}

}  // namespace dscpmd
