#include "qcpd/qfit.hpp"

#include "qcpd/error.hpp"
#include "qcpd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qcpd {
namespace {

constexpr double kReflect = 1.0;
constexpr double kExpand = 2.0;
constexpr double kContract = 0.5;
constexpr double kShrink = 0.5;
constexpr double kInitialStepFraction = 0.05;
constexpr int kMaxPolishRounds = 20;

std::string format_beta(const Vector& beta) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index j = 0; j < beta.size(); ++j) os << (j ? ", " : "") << beta[j];
  os << ')';
  return os.str();
}

class Objective {
 public:
  Objective(const RegressionModel& model, std::span<const Observation> data, QuantileLevel tau)
      : model_(model), data_(data), tau_(tau) {}

  double operator()(const Vector& beta) const {
    double sum = 0.0;
    for (const Observation& obs : data_) {
      sum += check_loss(obs.y - model_.eval(obs.x, beta), tau_);
    }
    if (!std::isfinite(sum)) {
      fail(ErrorCode::kNonFiniteObjective,
           "check-loss objective is not finite at beta = " + format_beta(beta));
    }
    return sum;
  }

 private:
  const RegressionModel& model_;
  std::span<const Observation> data_;
  QuantileLevel tau_;
};

struct SimplexResult {
  Vector x;
  double f = 0.0;
  bool converged = false;
};

// Nelder-Mead with every trial point projected onto the box.
SimplexResult nelder_mead(const Objective& f, const Vector& x0, const Box& box, double xtol,
                          double ftol, int max_iter) {
  const Eigen::Index n = x0.size();
  std::vector<Vector> v(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double step = kInitialStepFraction * (box.hi[j] - box.lo[j]);
    v[j + 1][j] = x0[j] + step <= box.hi[j] ? x0[j] + step : x0[j] - step;
  }
  for (Eigen::Index i = 0; i <= n; ++i) fv[i] = f(v[i]);

  std::vector<Eigen::Index> order(n + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    // Stable: equal objective values keep their previous relative order.
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return fv[a] < fv[b]; });
    std::vector<Vector> sv(n + 1);
    std::vector<double> sf(n + 1);
    for (Eigen::Index i = 0; i <= n; ++i) {
      sv[i] = std::move(v[order[i]]);
      sf[i] = fv[order[i]];
    }
    v = std::move(sv);
    fv = std::move(sf);
  };

  for (int iter = 0;; ++iter) {
    sort_simplex();
    double diameter = 0.0;
    for (Eigen::Index i = 1; i <= n; ++i) diameter = std::max(diameter, (v[i] - v[0]).norm());
    if (diameter < xtol || fv[n] - fv[0] < ftol) return {v[0], fv[0], true};
    if (iter >= max_iter) return {v[0], fv[0], false};

    Vector centroid = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) centroid += v[i];
    centroid /= static_cast<double>(n);

    const Vector& worst = v[n];
    Vector xr = box.clamp(centroid + kReflect * (centroid - worst));
    const double fr = f(xr);

    if (fr < fv[0]) {
      Vector xe = box.clamp(centroid + kExpand * (centroid - worst));
      const double fe = f(xe);
      if (fe < fr) {
        v[n] = std::move(xe);
        fv[n] = fe;
      } else {
        v[n] = std::move(xr);
        fv[n] = fr;
      }
      continue;
    }
    if (fr < fv[n - 1]) {
      v[n] = std::move(xr);
      fv[n] = fr;
      continue;
    }

    bool accepted = false;
    if (fr < fv[n]) {
      Vector xc = box.clamp(centroid + kContract * (xr - centroid));
      const double fc = f(xc);
      if (fc <= fr) {
        v[n] = std::move(xc);
        fv[n] = fc;
        accepted = true;
      }
    } else {
      Vector xc = box.clamp(centroid + kContract * (worst - centroid));
      const double fc = f(xc);
      if (fc < fv[n]) {
        v[n] = std::move(xc);
        fv[n] = fc;
        accepted = true;
      }
    }
    if (!accepted) {
      for (Eigen::Index i = 1; i <= n; ++i) {
        v[i] = v[0] + kShrink * (v[i] - v[0]);
        fv[i] = f(v[i]);
      }
    }
  }
}

}  // namespace

void FitConfig::validate() const {
  if (restarts < 1) fail(ErrorCode::kInvalidArgument, "restarts must be >= 1");
  if (max_iter && *max_iter < 1) fail(ErrorCode::kInvalidArgument, "max_iter must be >= 1");
  if (xtol && !(*xtol > 0.0)) fail(ErrorCode::kInvalidArgument, "xtol must be > 0");
  if (!(ftol > 0.0)) fail(ErrorCode::kInvalidArgument, "ftol must be > 0");
}

double objective_at(const RegressionModel& model, std::span<const Observation> data,
                    QuantileLevel tau, const Vector& beta) {
  model.check_params(beta);
  if (!model.box().contains(beta)) {
    fail(ErrorCode::kInvalidArgument, "beta " + format_beta(beta) + " lies outside the search box");
  }
  for (const Observation& obs : data) model.check_observation(obs);
  return Objective(model, data, tau)(beta);
}

std::vector<Vector> fit_start_points(const Box& box, const FitConfig& cfg) {
  std::vector<Vector> starts;
  starts.reserve(cfg.restarts);
  starts.push_back(box.center());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 1; s < cfg.restarts; ++s) {
    Rng rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(s)});
    Vector x(box.dim());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      x[j] = box.lo[j] + unit(rng) * (box.hi[j] - box.lo[j]);
    }
    starts.push_back(box.clamp(x));
  }
  return starts;
}

FitResult fit_quantile(const RegressionModel& model, std::span<const Observation> data,
                       QuantileLevel tau, const FitConfig& cfg) {
  cfg.validate();
  const int p = model.p();
  if (static_cast<int>(data.size()) <= p) {
    fail(ErrorCode::kInsufficientData,
         "need at least p + 1 = " + std::to_string(p + 1) + " historical observations, got " +
             std::to_string(data.size()));
  }
  for (const Observation& obs : data) model.check_observation(obs);

  const Box& box = model.box();
  const double xtol = cfg.xtol.value_or(std::max(1e-8 * box.diagonal(), 1e-300));
  const int max_iter = cfg.max_iter.value_or(2000 * p);
  const Objective objective(model, data, tau);

  FitResult best;
  best.objective = std::numeric_limits<double>::infinity();
  const std::vector<Vector> starts = fit_start_points(box, cfg);
  for (int s = 0; s < static_cast<int>(starts.size()); ++s) {
    SimplexResult run = nelder_mead(objective, starts[s], box, xtol, cfg.ftol, max_iter);
    // Restarting from the converged vertex with a fresh simplex escapes the
    // false convergence Nelder-Mead is prone to on kinked objectives.
    for (int round = 0; round < kMaxPolishRounds; ++round) {
      SimplexResult again = nelder_mead(objective, run.x, box, xtol, cfg.ftol, max_iter);
      const bool improved = again.f < run.f - cfg.ftol;
      if (again.f <= run.f) run = std::move(again);
      if (!improved) break;
    }
    if (run.f < best.objective) {
      best.beta_hat = std::move(run.x);
      best.objective = run.f;
      best.converged = run.converged;
      best.best_start = s;
    }
  }
  best.starts_used = static_cast<int>(starts.size());
  return best;
}

}  // namespace qcpd
