#pragma once

#include "qcpd/models.hpp"

#include <cstdint>
#include <optional>
#include <span>

namespace qcpd {

struct FitConfig {
  /// Multi-start count: start 0 is the box center, the rest are uniform in
  /// the box from substreams of `seed`.
  int restarts = 8;
  /// Per Nelder-Mead run; defaults to 2000 * p.
  std::optional<int> max_iter;
  /// Simplex-diameter stop; defaults to 1e-8 * box diagonal.
  std::optional<double> xtol;
  /// Objective-spread stop across simplex vertices.
  double ftol = 1e-10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitResult {
  Vector beta_hat;
  double objective = 0.0;
  bool converged = false;
  int starts_used = 0;
  /// Index of the start that produced beta_hat.
  int best_start = 0;
};

/// Sum of check losses of the residuals y_i - g(x_i; beta). Throws
/// NonFiniteObjective (naming beta) when the model overflows.
double objective_at(const RegressionModel& model, std::span<const Observation> data,
                    QuantileLevel tau, const Vector& beta);

/// Historical quantile estimator: argmin over the model's box of the check
/// loss sum. Derivative-free, so kinks in the objective are harmless; the
/// returned point is a local minimizer no worse than any start point.
FitResult fit_quantile(const RegressionModel& model, std::span<const Observation> data,
                       QuantileLevel tau, const FitConfig& cfg = {});

/// Starting points used by fit_quantile, in start-index order.
std::vector<Vector> fit_start_points(const Box& box, const FitConfig& cfg);

}  // namespace qcpd
