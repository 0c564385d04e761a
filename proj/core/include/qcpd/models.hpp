#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qcpd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Quantile index tau, strictly inside (0, 1).
class QuantileLevel {
 public:
  explicit QuantileLevel(double tau);
  double value() const noexcept { return tau_; }

 private:
  double tau_;
};

/// u * (tau - 1{u <= 0}).
double check_loss(double u, QuantileLevel tau) noexcept;

/// Subgradient of the check function: tau - 1{u <= 0}. The tie u == 0 takes
/// the "<=" branch and yields tau - 1.
double psi(double u, QuantileLevel tau) noexcept;

struct Observation {
  Vector x;
  double y = 0.0;
};

/// Compact per-coordinate search region [lo_j, hi_j].
struct Box {
  Vector lo;
  Vector hi;

  static Box uniform(Eigen::Index p, double lo, double hi);

  Eigen::Index dim() const noexcept { return lo.size(); }
  bool contains(const Vector& beta) const;
  Vector clamp(const Vector& beta) const;
  Vector center() const { return 0.5 * (lo + hi); }
  double diagonal() const { return (hi - lo).norm(); }
};

inline constexpr double kDefaultBoxHalfWidth = 10.0;

/// g(x; beta) together with its parameter gradient. Immutable once built and
/// safe to share between threads.
class RegressionModel {
 public:
  using EvalFn = std::function<double(const Vector& x, const Vector& beta)>;
  using GradFn = std::function<Vector(const Vector& x, const Vector& beta)>;

  /// Without a grad, a central finite-difference gradient is used.
  RegressionModel(std::string name, int p, int q, Box box, EvalFn eval,
                  GradFn grad = {});

  const std::string& name() const noexcept { return name_; }
  int p() const noexcept { return p_; }
  int q() const noexcept { return q_; }
  const Box& box() const noexcept { return box_; }
  bool has_analytic_gradient() const noexcept { return analytic_grad_; }

  double eval(const Vector& x, const Vector& beta) const { return eval_(x, beta); }
  Vector grad(const Vector& x, const Vector& beta) const { return grad_(x, beta); }

  /// Same model, different search box.
  RegressionModel with_box(Box box) const;

  void check_observation(const Observation& obs) const;
  void check_params(const Vector& beta) const;

 private:
  std::string name_;
  int p_;
  int q_;
  Box box_;
  EvalFn eval_;
  GradFn grad_;
  bool analytic_grad_;
};

/// Central differences with step h_j = 1e-6 * (1 + |beta_j|).
Vector finite_difference_gradient(const RegressionModel::EvalFn& eval,
                                  const Vector& x, const Vector& beta);

/// beta_1 + beta_2 x_1 + ... + beta_{q+1} x_q.
RegressionModel builtin_linear(int q, std::optional<Box> box = std::nullopt);

/// b1 - exp(-b2 x), p = 2, q = 1.
RegressionModel builtin_growth(std::optional<Box> box = std::nullopt);

/// "linear" (covariate count q) or "growth" (q must be 1).
RegressionModel model_by_name(const std::string& name, int q,
                              std::optional<Box> box = std::nullopt);

}  // namespace qcpd
