#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dscpmd {

struct RankSumResult {
  double w = 0;        // rank-sum of the first sample (midranks)
  double p = 1;        // two-sided
  bool exact = false;  // exact enumeration vs normal approximation
};

// Wilcoxon rank-sum test. Exact path when n1 <= 12, n2 <= 12, and there are
// no ties; otherwise tie-corrected normal approximation with 0.5 continuity
// correction toward the mean. Throws validation_error if either sample is
// empty.
RankSumResult wilcoxon_rank_sum(const std::vector<double>& a,
                                const std::vector<double>& b);

// Pooled-SD Cohen's d (n-1 denominators). Zero pooled SD yields 0 when the
// means agree, +/-infinity otherwise.
double cohens_d(const std::vector<double>& a, const std::vector<double>& b);

// min(1, m * p).
double bonferroni(double p, int m);

struct ScreenRow {
  std::string feature;
  int n_a = 0;
  int n_b = 0;
  double mean_a = 0;
  double mean_b = 0;
  double p = 1;
  double p_adjusted = 1;
  double d = 0;
  bool exact = false;
  bool significant = false;  // p_adjusted < 0.05 && |d| > 0.3
};

struct ScreenResult {
  std::vector<ScreenRow> rows;  // sorted by |d| descending, ties by name
  std::vector<std::string> skipped;  // features with <2 values in a group
  int n_tests = 0;                   // Bonferroni multiplicity actually used
};

// Screens each feature column: group A vs group B, Wilcoxon p, Bonferroni
// adjustment over `multiplicity` tests (or the number of screened features
// when multiplicity <= 0), Cohen's d with positive sign meaning A > B.
// Missing values are dropped per group; a feature needs >= 2 values in each
// group or it is skipped with a warning entry. A feature is significant
// when p_adjusted < alpha and |d| > min_effect.
ScreenResult screen_features(
    const std::vector<std::string>& names,
    const std::vector<std::vector<std::optional<double>>>& group_a,
    const std::vector<std::vector<std::optional<double>>>& group_b,
    int multiplicity = 0, double alpha = 0.05, double min_effect = 0.3);

void save_screen_csv(const ScreenResult& r, const std::string& path);
void save_screen_json(const ScreenResult& r, const std::string& path);

// Gnuplot-friendly per-feature group samples for the top rows.
void save_boxplot_data(
    const ScreenResult& r, const std::vector<std::string>& names,
    const std::vector<std::vector<std::optional<double>>>& group_a,
    const std::vector<std::vector<std::optional<double>>>& group_b,
    std::size_t top_n, const std::string& path);

}  // namespace dscpmd
