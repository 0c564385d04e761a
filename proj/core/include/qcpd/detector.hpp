#pragma once

#include "qcpd/models.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace qcpd {

/// Boundary exponent gamma in [0, 1/2).
class GammaParam {
 public:
  explicit GammaParam(double gamma);
  double value() const noexcept { return gamma_; }

 private:
  double gamma_;
};

inline constexpr double kDefaultPinvRelTol = 1e-12;

/// tau (1 - tau) / m * sum_i grad g(x_i; beta) grad g(x_i; beta)^T.
Matrix compute_jm(const RegressionModel& model, const Vector& beta,
                  std::span<const Vector> covariates, QuantileLevel tau);

/// Generalized inverse square root of a symmetric PSD matrix. Eigenvalues at
/// or below rel_tol * lambda_max are treated as zero and map to zero.
/// Throws AllZeroMatrix when lambda_max <= 0.
Matrix inv_sqrt_psd(const Matrix& j, double rel_tol = kDefaultPinvRelTol);

/// Number of eigenvalues of j strictly above rel_tol * lambda_max.
Eigen::Index retained_rank(const Matrix& j, double rel_tol = kDefaultPinvRelTol);

/// sqrt(m) (1 + k/m) (k / (k + m))^gamma.
double boundary_z(std::int64_t m, std::int64_t k, GammaParam gamma);

/// Everything frozen from the historical period.
struct HistoricalArtifacts {
  RegressionModel model;
  Vector beta_hat;
  Matrix jm;
  Matrix j_inv_sqrt;
  Eigen::Index rank = 0;
  std::int64_t m = 0;
  QuantileLevel tau{0.5};

  bool rank_deficient() const noexcept { return rank < model.p(); }
};

/// Computes J_m at beta_hat on the historical design and its generalized
/// inverse square root.
HistoricalArtifacts build_artifacts(const RegressionModel& model, const Vector& beta_hat,
                                    std::span<const Observation> historical, QuantileLevel tau,
                                    double rel_tol = kDefaultPinvRelTol);

struct Verdict {
  std::int64_t k = 0;
  double gamma_stat = 0.0;
  double threshold = 0.0;
  bool alarmed = false;
};

/// Streaming monitor. Each push adds grad g(x; beta_hat) psi(y - g(x;
/// beta_hat)) to the running sum, normalizes by J_m^{-1/2} and the boundary
/// z(m, k, gamma), and compares the sup-norm ratio against the critical
/// value. The first crossing is latched in alarm_at(); later pushes keep
/// updating the statistics.
///
/// Single writer: pushes must arrive in stream order.
class Detector {
 public:
  /// horizon: T_m for the closed-end procedure, nullopt for open-end.
  Detector(std::shared_ptr<const HistoricalArtifacts> artifacts, GammaParam gamma,
           double critical_value, std::optional<std::int64_t> horizon = std::nullopt);

  Verdict push(const Observation& obs);

  /// Z_m(gamma) over the observations processed so far.
  double z_sup() const;

  std::int64_t k() const noexcept { return k_; }
  const Vector& cum() const noexcept { return cum_; }
  /// J_m^{-1/2} cum.
  Vector statistic() const { return artifacts_->j_inv_sqrt * cum_; }
  double running_max() const noexcept { return running_max_; }
  std::optional<std::int64_t> alarm_at() const noexcept { return alarm_at_; }
  double critical_value() const noexcept { return critical_value_; }
  GammaParam gamma() const noexcept { return gamma_; }
  std::optional<std::int64_t> horizon() const noexcept { return horizon_; }
  /// Closed-end only: the horizon was reached without an alarm.
  bool horizon_exhausted() const noexcept {
    return horizon_ && k_ >= *horizon_ && !alarm_at_;
  }
  const HistoricalArtifacts& artifacts() const noexcept { return *artifacts_; }

 private:
  std::shared_ptr<const HistoricalArtifacts> artifacts_;
  GammaParam gamma_;
  double critical_value_;
  std::optional<std::int64_t> horizon_;
  std::int64_t k_ = 0;
  Vector cum_;
  double running_max_ = 0.0;
  std::optional<std::int64_t> alarm_at_;
};

}  // namespace qcpd
