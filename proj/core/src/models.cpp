#include "qcpd/models.hpp"

#include "qcpd/error.hpp"

#include <cmath>
#include <utility>

namespace qcpd {

QuantileLevel::QuantileLevel(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    fail(ErrorCode::kInvalidArgument,
         "quantile level must lie strictly inside (0,1), got " + std::to_string(tau));
  }
}

double psi(double u, QuantileLevel tau) noexcept {
  return u <= 0.0 ? tau.value() - 1.0 : tau.value();
}

double check_loss(double u, QuantileLevel tau) noexcept { return u * psi(u, tau); }

Box Box::uniform(Eigen::Index p, double lo, double hi) {
  return Box{Vector::Constant(p, lo), Vector::Constant(p, hi)};
}

bool Box::contains(const Vector& beta) const {
  return beta.size() == dim() && (beta.array() >= lo.array()).all() &&
         (beta.array() <= hi.array()).all();
}

Vector Box::clamp(const Vector& beta) const {
  return beta.cwiseMax(lo).cwiseMin(hi);
}

Vector finite_difference_gradient(const RegressionModel::EvalFn& eval,
                                  const Vector& x, const Vector& beta) {
  Vector g(beta.size());
  Vector probe = beta;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(beta[j]));
    probe[j] = beta[j] + h;
    const double up = eval(x, probe);
    probe[j] = beta[j] - h;
    const double down = eval(x, probe);
    probe[j] = beta[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

RegressionModel::RegressionModel(std::string name, int p, int q, Box box,
                                 EvalFn eval, GradFn grad)
    : name_(std::move(name)),
      p_(p),
      q_(q),
      box_(std::move(box)),
      eval_(std::move(eval)),
      grad_(std::move(grad)),
      analytic_grad_(static_cast<bool>(grad_)) {
  if (p_ < 1 || q_ < 1) fail(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  if (!eval_) fail(ErrorCode::kInvalidArgument, "model '" + name_ + "' has no evaluator");
  if (box_.lo.size() != p_ || box_.hi.size() != p_) {
    fail(ErrorCode::kDimensionMismatch, "search box dimension differs from p");
  }
  if (!(box_.lo.array() <= box_.hi.array()).all() || !box_.lo.allFinite() ||
      !box_.hi.allFinite()) {
    fail(ErrorCode::kInvalidArgument, "search box must be finite with lo <= hi");
  }
  if (!grad_) {
    grad_ = [eval = eval_](const Vector& x, const Vector& beta) {
      return finite_difference_gradient(eval, x, beta);
    };
  }
}

RegressionModel RegressionModel::with_box(Box box) const {
  RegressionModel copy = *this;
  if (box.lo.size() != p_ || box.hi.size() != p_) {
    fail(ErrorCode::kDimensionMismatch, "search box dimension differs from p");
  }
  copy.box_ = std::move(box);
  return copy;
}

void RegressionModel::check_observation(const Observation& obs) const {
  if (obs.x.size() != q_) {
    fail(ErrorCode::kDimensionMismatch,
         "observation has " + std::to_string(obs.x.size()) + " covariates, model '" + name_ +
             "' expects " + std::to_string(q_));
  }
  if (!obs.x.allFinite() || !std::isfinite(obs.y)) {
    fail(ErrorCode::kInvalidArgument, "observation contains a non-finite value");
  }
}

void RegressionModel::check_params(const Vector& beta) const {
  if (beta.size() != p_) {
    fail(ErrorCode::kDimensionMismatch,
         "parameter vector has length " + std::to_string(beta.size()) + ", expected " +
             std::to_string(p_));
  }
  if (!beta.allFinite()) fail(ErrorCode::kInvalidArgument, "parameter vector is not finite");
}

RegressionModel builtin_linear(int q, std::optional<Box> box) {
  if (q < 1) fail(ErrorCode::kInvalidArgument, "linear model needs q >= 1");
  const int p = q + 1;
  auto eval = [](const Vector& x, const Vector& beta) {
    return beta[0] + x.dot(beta.tail(x.size()));
  };
  auto grad = [](const Vector& x, const Vector& /*beta*/) {
    Vector g(x.size() + 1);
    g[0] = 1.0;
    g.tail(x.size()) = x;
    return g;
  };
  return RegressionModel("linear", p, q, box.value_or(Box::uniform(p, -kDefaultBoxHalfWidth, kDefaultBoxHalfWidth)),
                         eval, grad);
}

RegressionModel builtin_growth(std::optional<Box> box) {
  auto eval = [](const Vector& x, const Vector& beta) {
    return beta[0] - std::exp(-beta[1] * x[0]);
  };
  auto grad = [](const Vector& x, const Vector& beta) {
    Vector g(2);
    g[0] = 1.0;
    g[1] = x[0] * std::exp(-beta[1] * x[0]);
    return g;
  };
  return RegressionModel("growth", 2, 1, box.value_or(Box::uniform(2, -kDefaultBoxHalfWidth, kDefaultBoxHalfWidth)),
                         eval, grad);
}

RegressionModel model_by_name(const std::string& name, int q, std::optional<Box> box) {
  if (name == "linear") return builtin_linear(q, std::move(box));
  if (name == "growth") {
    if (q != 1) fail(ErrorCode::kDimensionMismatch, "growth model takes exactly one covariate");
    return builtin_growth(std::move(box));
  }
  fail(ErrorCode::kInvalidArgument, "unknown model '" + name + "' (expected linear|growth)");
}

}  // namespace qcpd
