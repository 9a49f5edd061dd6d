#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dscpmd/error.hpp"
#include "dscpmd/perfusion.hpp"

namespace dscpmd {

struct TsvdDeconvolver::Impl {
  Eigen::MatrixXd pinv;
};

TsvdDeconvolver::TsvdDeconvolver(const std::vector<double>& aif, double dt,
                                 const TsvdConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
  if (aif.empty()) throw validation_error("AIF curve is empty");
  if (!(dt > 0)) throw validation_error("sampling interval must be positive");
  if (cfg.fraction < 0 || cfg.fraction >= 1) {
    throw validation_error("singular-value fraction must be in [0, 1)");
  }
  if (cfg.min_keep < 1) {
    throw validation_error("min_keep must be >= 1");
  }
  nt_ = static_cast<int>(aif.size());

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nt_, nt_);
  for (int i = 0; i < nt_; ++i) {
    for (int j = 0; j <= i; ++j) {
      a(i, j) = dt * aif[static_cast<std::size_t>(i - j)];
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double cutoff = cfg.fraction * sigma(0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(nt_);
  rank_ = 0;
  for (int i = 0; i < nt_; ++i) {
    // Singular values come back sorted descending, so min_keep keeps the
    // largest ones.
    if ((i < cfg.min_keep || sigma(i) >= cutoff) && sigma(i) > 0) {
      inv(i) = 1.0 / sigma(i);
      ++rank_;
    }
  }
  impl_->pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

TsvdDeconvolver::~TsvdDeconvolver() = default;
TsvdDeconvolver::TsvdDeconvolver(TsvdDeconvolver&&) noexcept = default;
TsvdDeconvolver& TsvdDeconvolver::operator=(TsvdDeconvolver&&) noexcept =
    default;

std::vector<double> TsvdDeconvolver::solve(
    const std::vector<double>& tissue) const {
  if (static_cast<int>(tissue.size()) != nt_) {
    throw validation_error("tissue curve length differs from the AIF length");
  }
  Eigen::Map<const Eigen::VectorXd> c(tissue.data(), nt_);
  Eigen::VectorXd k = impl_->pinv * c;
  return std::vector<double>(k.data(), k.data() + nt_);
}

std::vector<double> deconvolve_tsvd(const std::vector<double>& tissue,
                                    const std::vector<double>& aif, double dt,
                                    const TsvdConfig& cfg) {
  return TsvdDeconvolver(aif, dt, cfg).solve(tissue);
}

}  // namespace dscpmd
