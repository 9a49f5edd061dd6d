#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dscpmd {

using Matrix = std::vector<std::vector<double>>;  // row-major [sample][feature]

// Median imputation + z-scoring learned on training rows only. Features with
// zero training SD are inert: they standardize to 0 everywhere.
class Preprocessor {
 public:
  void fit(const Matrix& x_train,
           const std::vector<std::vector<bool>>& present);
  Matrix transform(const Matrix& x,
                   const std::vector<std::vector<bool>>& present) const;

  const std::vector<double>& medians() const { return median_; }
  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& sds() const { return sd_; }

 private:
  std::vector<double> median_, mean_, sd_;
};

struct LogisticConfig {
  double lambda = 1.0;       // L2 on weights (intercept unpenalized)
  double grad_tol = 1e-8;    // convergence: max-norm of the full gradient
  int max_iter = 1000;
};

struct LogisticModel {
  std::vector<double> weights;
  double intercept = 0;
  int iterations = 0;
  bool converged = true;
  double final_grad_norm = 0;

  double decision(const std::vector<double>& x) const;
  double probability(const std::vector<double>& x) const;  // P(y = +1)
};

// Class weights n/(2*n_c) for labels in {-1, +1}.
std::vector<double> balanced_weights(const std::vector<int>& y);

// Weighted L2-regularized logistic regression, Newton's method with
// backtracking line search. Uses a kernelized solve when features outnumber
// samples. y entries must be -1 or +1.
LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& y,
                           const std::vector<double>& sample_weights,
                           const LogisticConfig& cfg = {});

// Value and gradient of the penalized objective at (w, b); exposed for
// verification against finite differences.
double logistic_objective(const Matrix& x, const std::vector<int>& y,
                          const std::vector<double>& sample_weights,
                          const std::vector<double>& w, double b,
                          double lambda, std::vector<double>* grad_w = nullptr,
                          double* grad_b = nullptr);

struct RocPoint {
  double fpr = 0, tpr = 0;
};

struct PrPoint {
  double recall = 0, precision = 1;
};

struct CVReport {
  std::vector<std::string> subjects;
  std::vector<int> truth;              // +1 = positive class
  std::vector<double> probabilities;   // LOO out-of-fold P(positive)
  std::string positive_class;
  std::string negative_class;
  double auc = 0;
  double average_precision = 0;
  double accuracy = 0, sensitivity = 0, specificity = 0;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<RocPoint> roc;
  std::vector<PrPoint> pr;
  bool all_converged = true;
  double auc_ci_low = 0, auc_ci_high = 0;
  int bootstrap_samples = 0;
  std::uint64_t seed = 0;
};

// Tie-grouped ROC sweep; trapezoid AUC (equals the midrank statistic).
double roc_auc(const std::vector<int>& truth, const std::vector<double>& score,
               std::vector<RocPoint>* curve = nullptr);

double average_precision(const std::vector<int>& truth,
                         const std::vector<double>& score,
                         std::vector<PrPoint>* curve = nullptr);

// Leave-one-out CV: per fold, refit the preprocessor and model on the
// remaining rows, score the held-out row. Folds may run in parallel; the
// out-of-fold vector is assembled in subject order so results do not depend
// on the thread count.
CVReport loo_cv(const Matrix& x, const std::vector<std::vector<bool>>& present,
                const std::vector<int>& y,
                const std::vector<std::string>& subjects,
                const std::string& positive_class,
                const std::string& negative_class,
                const LogisticConfig& cfg = {}, int threads = 1);

// Percentile bootstrap CI for the AUC over (truth, probability) pairs.
// Resamples with a single-class redraw policy: degenerate resamples are
// redrawn and counted. Deterministic for a fixed seed.
struct BootstrapResult {
  double low = 0, high = 0;
  int redraws = 0;
};
BootstrapResult bootstrap_auc_ci(const std::vector<int>& truth,
                                 const std::vector<double>& prob,
                                 int n_boot, std::uint64_t seed);

// --- linear SHAP -------------------------------------------------------------

struct ShapResult {
  std::vector<std::vector<double>> phi;  // [sample][feature]
  std::vector<double> base;              // per-sample w.mu + b (constant)
  std::vector<double> mean_abs;          // per-feature mean |phi|
  std::vector<int> rank;                 // ascending by mean_abs; 1 = least
};

// phi[i][j] = w[j] * (z[i][j] - mu[j]) on standardized features; ranks are
// ascending by mean |phi| with ties broken by feature order.
ShapResult linear_shap(const Matrix& z, const std::vector<double>& weights,
                       double intercept);

struct GroupImportance {
  std::string name;
  double total = 0;  // summed mean |phi|
  int rank = 0;      // ascending by total; 1 = least influential
};

// Aggregates per-feature mean |phi| into named groups; `share` gives each
// feature's weight in each group (rows = features, one entry per group the
// feature contributes to).
std::vector<GroupImportance> group_importance(
    const std::vector<double>& mean_abs,
    const std::vector<std::vector<std::pair<int, double>>>& feature_groups,
    const std::vector<std::string>& group_names);

}  // namespace dscpmd
