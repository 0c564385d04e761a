#include "qcpd/detector.hpp"

#include "qcpd/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <utility>

namespace qcpd {

GammaParam::GammaParam(double gamma) : gamma_(gamma) {
  if (!(gamma >= 0.0 && gamma < 0.5)) {
    fail(ErrorCode::kInvalidArgument,
         "gamma must lie in [0, 1/2), got " + std::to_string(gamma));
  }
}

Matrix compute_jm(const RegressionModel& model, const Vector& beta,
                  std::span<const Vector> covariates, QuantileLevel tau) {
  model.check_params(beta);
  if (covariates.empty()) fail(ErrorCode::kInsufficientData, "J_m needs at least one covariate vector");
  const int p = model.p();
  Matrix outer = Matrix::Zero(p, p);
  for (const Vector& x : covariates) {
    if (x.size() != model.q()) fail(ErrorCode::kDimensionMismatch, "covariate length differs from q");
    const Vector g = model.grad(x, beta);
    outer.selfadjointView<Eigen::Lower>().rankUpdate(g);
  }
  outer.triangularView<Eigen::StrictlyUpper>() = outer.transpose();
  const double t = tau.value();
  return (t * (1.0 - t) / static_cast<double>(covariates.size())) * outer;
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> decompose(const Matrix& j) {
  if (j.rows() != j.cols() || j.rows() == 0) {
    fail(ErrorCode::kDimensionMismatch, "expected a non-empty square matrix");
  }
  if (!j.allFinite()) fail(ErrorCode::kInvalidArgument, "matrix has non-finite entries");
  const double scale = j.norm();
  if ((j - j.transpose()).norm() > 1e-10 * scale) {
    fail(ErrorCode::kInvalidArgument, "matrix is not symmetric");
  }
  return Eigen::SelfAdjointEigenSolver<Matrix>(j);
}

}  // namespace

Matrix inv_sqrt_psd(const Matrix& j, double rel_tol) {
  const auto eig = decompose(j);
  const Vector& lambda = eig.eigenvalues();
  const double lambda_max = lambda.maxCoeff();
  if (!(lambda_max > 0.0)) fail(ErrorCode::kAllZeroMatrix, "matrix has no positive eigenvalue");
  const double cutoff = rel_tol * lambda_max;
  Vector scaled(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    scaled[i] = lambda[i] > cutoff ? 1.0 / std::sqrt(lambda[i]) : 0.0;
  }
  const Matrix& q = eig.eigenvectors();
  Matrix result = q * scaled.asDiagonal() * q.transpose();
  // Exact symmetry, not just up to rounding.
  return 0.5 * (result + result.transpose());
}

Eigen::Index retained_rank(const Matrix& j, double rel_tol) {
  const auto eig = decompose(j);
  const Vector& lambda = eig.eigenvalues();
  const double lambda_max = lambda.maxCoeff();
  if (!(lambda_max > 0.0)) return 0;
  return (lambda.array() > rel_tol * lambda_max).count();
}

double boundary_z(std::int64_t m, std::int64_t k, GammaParam gamma) {
  if (m < 1 || k < 1) fail(ErrorCode::kInvalidArgument, "boundary_z needs m >= 1 and k >= 1");
  const double md = static_cast<double>(m);
  const double kd = static_cast<double>(k);
  return std::sqrt(md) * (1.0 + kd / md) * std::pow(kd / (kd + md), gamma.value());
}

HistoricalArtifacts build_artifacts(const RegressionModel& model, const Vector& beta_hat,
                                    std::span<const Observation> historical, QuantileLevel tau,
                                    double rel_tol) {
  std::vector<Vector> xs;
  xs.reserve(historical.size());
  for (const Observation& obs : historical) {
    model.check_observation(obs);
    xs.push_back(obs.x);
  }
  Matrix jm = compute_jm(model, beta_hat, xs, tau);
  Matrix inv = inv_sqrt_psd(jm, rel_tol);
  const Eigen::Index rank = retained_rank(jm, rel_tol);
  return HistoricalArtifacts{model,           beta_hat, std::move(jm), std::move(inv), rank,
                             static_cast<std::int64_t>(historical.size()), tau};
}

Detector::Detector(std::shared_ptr<const HistoricalArtifacts> artifacts, GammaParam gamma,
                   double critical_value, std::optional<std::int64_t> horizon)
    : artifacts_(std::move(artifacts)),
      gamma_(gamma),
      critical_value_(critical_value),
      horizon_(horizon) {
  if (!artifacts_) fail(ErrorCode::kInvalidArgument, "detector needs historical artifacts");
  if (!(critical_value > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "critical value must be > 0");
  }
  if (horizon_ && *horizon_ < 1) fail(ErrorCode::kInvalidArgument, "horizon must be >= 1");
  const int p = artifacts_->model.p();
  if (artifacts_->j_inv_sqrt.rows() != p || artifacts_->j_inv_sqrt.cols() != p) {
    fail(ErrorCode::kDimensionMismatch, "J_m^{-1/2} is not p x p");
  }
  if (artifacts_->m < 1) fail(ErrorCode::kInvalidArgument, "historical size must be >= 1");
  cum_ = Vector::Zero(p);
}

Verdict Detector::push(const Observation& obs) {
  const HistoricalArtifacts& a = *artifacts_;
  a.model.check_observation(obs);
  const double residual = obs.y - a.model.eval(obs.x, a.beta_hat);
  cum_ += a.model.grad(obs.x, a.beta_hat) * psi(residual, a.tau);
  ++k_;
  const double gamma_stat =
      (a.j_inv_sqrt * cum_).lpNorm<Eigen::Infinity>() / boundary_z(a.m, k_, gamma_);
  running_max_ = std::max(running_max_, gamma_stat);
  if (!alarm_at_ && gamma_stat >= critical_value_) alarm_at_ = k_;
  return Verdict{k_, gamma_stat, critical_value_, alarm_at_.has_value()};
}

double Detector::z_sup() const {
  if (k_ < 1) fail(ErrorCode::kNoObservations, "no monitoring observations processed yet");
  return running_max_;
}

}  // namespace qcpd
