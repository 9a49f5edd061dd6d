#include "dscpmd/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dscpmd/error.hpp"
#include "dscpmd/parallel.hpp"

namespace dscpmd {

namespace {

// log(1 + exp(t)) without overflow; the two branches mirror each other, so
// flipping every label negates the fitted parameters exactly.
double softplus(double t) {
  if (t > 0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Eigen::MatrixXd to_eigen(const Matrix& x) {
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  const Eigen::Index p = n > 0 ? static_cast<Eigen::Index>(x[0].size()) : 0;
  Eigen::MatrixXd m(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(x[static_cast<std::size_t>(i)].size()) != p) {
      throw validation_error("design matrix rows have differing widths");
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      m(i, j) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

// Applies (lambda*I + X^T D X)^{-1} to vectors. Dense Cholesky in feature
// space when features are few; otherwise the Woodbury identity against the
// n x n Gram matrix, which only needs a factorization of size n.
class NewtonSolver {
 public:
  NewtonSolver(const Eigen::MatrixXd& x, double lambda)
      : x_(x), lambda_(lambda), kernel_mode_(x.cols() > x.rows()) {
    if (kernel_mode_) gram_ = x * x.transpose();
  }

  // d: per-sample Hessian weights (omega * sigma * (1 - sigma)).
  void factor(const Eigen::VectorXd& d) {
    if (kernel_mode_) {
      sqrt_d_ = d.cwiseSqrt();
      Eigen::MatrixXd b = gram_;
      for (Eigen::Index i = 0; i < b.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
          b(i, j) *= sqrt_d_(i) * sqrt_d_(j) / lambda_;
        }
      }
      b.diagonal().array() += 1.0;
      llt_.compute(b);
    } else {
      Eigen::MatrixXd a = x_.transpose() * d.asDiagonal() * x_;
      a.diagonal().array() += lambda_;
      ldlt_.compute(a);
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
    if (!kernel_mode_) return ldlt_.solve(v);
    const Eigen::VectorXd xv = sqrt_d_.cwiseProduct(x_ * v);
    const Eigen::VectorXd s = llt_.solve(xv);
    return v / lambda_ -
           (x_.transpose() * sqrt_d_.cwiseProduct(s)) / (lambda_ * lambda_);
  }

 private:
  const Eigen::MatrixXd& x_;
  double lambda_;
  bool kernel_mode_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd sqrt_d_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

}  // namespace

void Preprocessor::fit(const Matrix& x_train,
                       const std::vector<std::vector<bool>>& present) {
  if (x_train.empty()) throw validation_error("no training rows");
  if (x_train.size() != present.size()) {
    throw validation_error("presence mask size differs from the data");
  }
  const std::size_t p = x_train[0].size();
  median_.assign(p, 0.0);
  mean_.assign(p, 0.0);
  sd_.assign(p, 0.0);

  std::vector<double> col;
  for (std::size_t j = 0; j < p; ++j) {
    col.clear();
    for (std::size_t i = 0; i < x_train.size(); ++i) {
      if (present[i][j]) col.push_back(x_train[i][j]);
    }
    if (!col.empty()) {
      std::sort(col.begin(), col.end());
      const std::size_t half = col.size() / 2;
      median_[j] = col.size() % 2 == 1
                       ? col[half]
                       : 0.5 * (col[half - 1] + col[half]);
    }
    // Moments over the imputed column. The population SD keeps the
    // standardization invariant under row duplication.
    double sum = 0;
    for (std::size_t i = 0; i < x_train.size(); ++i) {
      sum += present[i][j] ? x_train[i][j] : median_[j];
    }
    mean_[j] = sum / static_cast<double>(x_train.size());
    double ss = 0;
    for (std::size_t i = 0; i < x_train.size(); ++i) {
      const double v = present[i][j] ? x_train[i][j] : median_[j];
      ss += (v - mean_[j]) * (v - mean_[j]);
    }
    sd_[j] = std::sqrt(ss / static_cast<double>(x_train.size()));
  }
}

Matrix Preprocessor::transform(
    const Matrix& x, const std::vector<std::vector<bool>>& present) const {
  const std::size_t p = mean_.size();
  Matrix out(x.size(), std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != p || present[i].size() != p) {
      throw validation_error("row width differs from the fitted preprocessor");
    }
    for (std::size_t j = 0; j < p; ++j) {
      if (sd_[j] == 0) continue;  // inert feature
      const double v = present[i][j] ? x[i][j] : median_[j];
      out[i][j] = (v - mean_[j]) / sd_[j];
    }
  }
  return out;
}

double LogisticModel::decision(const std::vector<double>& x) const {
  if (x.size() != weights.size()) {
    throw validation_error("feature count differs from the model");
  }
  double z = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
  return z;
}

double LogisticModel::probability(const std::vector<double>& x) const {
  return sigmoid(decision(x));
}

std::vector<double> balanced_weights(const std::vector<int>& y) {
  std::size_t n_pos = 0, n_neg = 0;
  for (int v : y) {
    if (v == 1) {
      ++n_pos;
    } else if (v == -1) {
      ++n_neg;
    } else {
      throw validation_error("labels must be -1 or +1");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw validation_error("both classes must be present");
  }
  const double n = static_cast<double>(y.size());
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    w[i] = y[i] == 1 ? n / (2.0 * static_cast<double>(n_pos))
                     : n / (2.0 * static_cast<double>(n_neg));
  }
  return w;
}

double logistic_objective(const Matrix& x, const std::vector<int>& y,
                          const std::vector<double>& sample_weights,
                          const std::vector<double>& w, double b,
                          double lambda, std::vector<double>* grad_w,
                          double* grad_b) {
  const std::size_t n = x.size();
  const std::size_t p = w.size();
  if (y.size() != n || sample_weights.size() != n) {
    throw validation_error("label or weight count differs from the data");
  }
  double obj = 0;
  if (grad_w) grad_w->assign(p, 0.0);
  double gb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < p; ++j) z += w[j] * x[i][j];
    const double m = y[i] * z;
    obj += sample_weights[i] * softplus(-m);
    if (grad_w || grad_b) {
      const double g = -sample_weights[i] * y[i] * sigmoid(-m);
      if (grad_w) {
        for (std::size_t j = 0; j < p; ++j) (*grad_w)[j] += g * x[i][j];
      }
      gb += g;
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    obj += 0.5 * lambda * w[j] * w[j];
    if (grad_w) (*grad_w)[j] += lambda * w[j];
  }
  if (grad_b) *grad_b = gb;
  return obj;
}

LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& y,
                           const std::vector<double>& sample_weights,
                           const LogisticConfig& cfg) {
  const Eigen::MatrixXd xm = to_eigen(x);
  const Eigen::Index n = xm.rows();
  const Eigen::Index p = xm.cols();
  if (static_cast<Eigen::Index>(y.size()) != n ||
      static_cast<Eigen::Index>(sample_weights.size()) != n) {
    throw validation_error("label or weight count differs from the data");
  }
  if (!(cfg.lambda > 0)) {
    throw validation_error("the ridge penalty must be positive");
  }
  Eigen::VectorXd yv(n), omega(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = y[static_cast<std::size_t>(i)];
    if (label != 1 && label != -1) {
      throw validation_error("labels must be -1 or +1");
    }
    yv(i) = label;
    omega(i) = sample_weights[static_cast<std::size_t>(i)];
  }

  NewtonSolver solver(xm, cfg.lambda);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
  double b = 0;

  auto objective = [&](const Eigen::VectorXd& wv, double bv) {
    const Eigen::VectorXd z = xm * wv;
    double obj = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      obj += omega(i) * softplus(-yv(i) * (z(i) + bv));
    }
    return obj + 0.5 * cfg.lambda * wv.squaredNorm();
  };

  LogisticModel model;
  model.converged = false;
  double current_obj = objective(w, b);
  constexpr double kArmijo = 1e-4;

  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    const Eigen::VectorXd z = xm * w;
    Eigen::VectorXd resid(n), d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = yv(i) * (z(i) + b);
      const double s = sigmoid(-m);
      resid(i) = -omega(i) * yv(i) * s;          // d loss / d z_i
      d(i) = omega(i) * s * (1.0 - s);           // d^2 loss / d z_i^2
    }
    const Eigen::VectorXd grad_w = xm.transpose() * resid + cfg.lambda * w;
    const double grad_b = resid.sum();
    const double grad_norm =
        std::max(grad_w.lpNorm<Eigen::Infinity>(), std::abs(grad_b));
    model.final_grad_norm = grad_norm;
    if (grad_norm < cfg.grad_tol) {
      model.converged = true;
      break;
    }

    solver.factor(d);
    const Eigen::VectorXd u = xm.transpose() * d;  // X^T D 1
    const double c = d.sum();
    const Eigen::VectorXd t1 = solver.solve(grad_w);
    const Eigen::VectorXd t2 = solver.solve(u);
    const double schur = c - u.dot(t2);
    if (!(schur > 0) || !std::isfinite(schur)) break;
    const double db = (u.dot(t1) - grad_b) / schur;
    const Eigen::VectorXd dw = -t1 - t2 * db;

    const double descent = grad_w.dot(dw) + grad_b * db;
    if (!(descent < 0)) break;  // numerically stalled
    double step = 1.0;
    double next_obj = 0;
    bool accepted = false;
    for (int back = 0; back < 60; ++back) {
      next_obj = objective(w + step * dw, b + step * db);
      if (next_obj <= current_obj + kArmijo * step * descent) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    w += step * dw;
    b += step * db;
    current_obj = next_obj;
  }
  model.iterations = iter;
  model.intercept = b;
  model.weights.assign(w.data(), w.data() + p);
  return model;
}

CVReport loo_cv(const Matrix& x, const std::vector<std::vector<bool>>& present,
                const std::vector<int>& y,
                const std::vector<std::string>& subjects,
                const std::string& positive_class,
                const std::string& negative_class,
                const LogisticConfig& cfg, int threads) {
  const std::size_t n = x.size();
  if (n < 3) throw validation_error("leave-one-out needs at least 3 subjects");
  if (present.size() != n || y.size() != n || subjects.size() != n) {
    throw validation_error("row metadata sizes differ from the data");
  }

  std::vector<double> probs(n, 0.0);
  std::vector<char> fold_converged(n, 1);

  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t hold = begin; hold < end; ++hold) {
      Matrix xt;
      std::vector<std::vector<bool>> pt;
      std::vector<int> yt;
      xt.reserve(n - 1);
      pt.reserve(n - 1);
      yt.reserve(n - 1);
      for (std::size_t i = 0; i < n; ++i) {
        if (i == hold) continue;
        xt.push_back(x[i]);
        pt.push_back(present[i]);
        yt.push_back(y[i]);
      }
      Preprocessor prep;
      prep.fit(xt, pt);
      const Matrix zt = prep.transform(xt, pt);
      const std::vector<double> weights = balanced_weights(yt);
      const LogisticModel model = fit_logistic(zt, yt, weights, cfg);
      fold_converged[hold] = model.converged ? 1 : 0;
      const Matrix zh = prep.transform({x[hold]}, {present[hold]});
      probs[hold] = model.probability(zh[0]);
    }
  });

  CVReport report;
  report.subjects = subjects;
  report.truth = y;
  report.probabilities = probs;
  report.positive_class = positive_class;
  report.negative_class = negative_class;
  report.all_converged =
      std::all_of(fold_converged.begin(), fold_converged.end(),
                  [](char c) { return c != 0; });
  report.auc = roc_auc(y, probs, &report.roc);
  report.average_precision = average_precision(y, probs, &report.pr);
  for (std::size_t i = 0; i < n; ++i) {
    const bool predicted_positive = probs[i] >= 0.5;
    if (y[i] == 1) {
      predicted_positive ? ++report.tp : ++report.fn;
    } else {
      predicted_positive ? ++report.fp : ++report.tn;
    }
  }
  report.accuracy =
      static_cast<double>(report.tp + report.tn) / static_cast<double>(n);
  const int pos = report.tp + report.fn;
  const int neg = report.tn + report.fp;
  report.sensitivity = pos > 0 ? static_cast<double>(report.tp) / pos : 0.0;
  report.specificity = neg > 0 ? static_cast<double>(report.tn) / neg : 0.0;
  return report;
}

}  // namespace dscpmd
