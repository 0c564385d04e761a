#include "oracles.hpp"
#include "qcpd/error.hpp"
#include "qcpd/qfit.hpp"
#include "qcpd/simlab.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace qcpd {
namespace {

// The default simplex-diameter stop (1e-8 of the box diagonal) leaves
// objective errors around 1e-7; exact-value comparisons tighten it.
FitConfig tight_config(int seed) {
  FitConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.xtol = 1e-13;
  cfg.ftol = 1e-14;
  return cfg;
}

RegressionModel constant_model() {
  return RegressionModel(
      "constant", 1, 1, Box::uniform(1, -10, 10),
      [](const Vector&, const Vector& b) { return b[0]; },
      [](const Vector&, const Vector&) { return Vector::Ones(1); });
}

Observation obs1(double x, double y) {
  Observation o{Vector(1), y};
  o.x << x;
  return o;
}

TEST(ObjectiveAt, Examples) {
  const RegressionModel lin = builtin_linear(1);
  const std::vector<Observation> data{obs1(0, 1), obs1(1, 3)};
  Vector beta(2);
  beta << 1.0, 1.0;
  // residuals 0 and 1
  EXPECT_DOUBLE_EQ(objective_at(lin, data, QuantileLevel(0.5), beta), 0.5);
  beta << 0.0, 0.0;
  EXPECT_DOUBLE_EQ(objective_at(lin, data, QuantileLevel(0.25), beta), 0.25 * 4.0);
}

TEST(ObjectiveAt, RejectsBadInputs) {
  const RegressionModel lin = builtin_linear(1);
  const std::vector<Observation> data{obs1(0, 1), obs1(1, 3)};
  EXPECT_THROW(objective_at(lin, data, QuantileLevel(0.5), Vector::Zero(3)), Error);
  const RegressionModel blowup(
      "blowup", 1, 1, Box::uniform(1, -10, 10),
      [](const Vector&, const Vector& b) { return std::exp(1000.0 * b[0]); });
  try {
    objective_at(blowup, data, QuantileLevel(0.5), Vector::Ones(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteObjective);
  }
}

TEST(FitQuantile, ConstantModelMedian) {
  const std::vector<Observation> data{obs1(0, 1), obs1(0, 2), obs1(0, 3)};
  const FitResult fit = fit_quantile(constant_model(), data, QuantileLevel(0.5));
  EXPECT_NEAR(fit.beta_hat[0], 2.0, 1e-6);
  EXPECT_NEAR(fit.objective, 1.0, 1e-6);
}

TEST(FitQuantile, NoiselessLinear) {
  std::vector<Observation> data;
  for (int i = 1; i <= 5; ++i) data.push_back(obs1(i, 2.0 + 3.0 * i));
  const FitResult fit = fit_quantile(builtin_linear(1), data, QuantileLevel(0.5));
  EXPECT_NEAR(fit.beta_hat[0], 2.0, 1e-6);
  EXPECT_NEAR(fit.beta_hat[1], 3.0, 1e-6);
  EXPECT_NEAR(fit.objective, 0.0, 1e-6);
  const FitResult tight = fit_quantile(builtin_linear(1), data, QuantileLevel(0.5), tight_config(0));
  EXPECT_NEAR(tight.objective, 0.0, 1e-10);
}

TEST(FitQuantile, InsufficientData) {
  const std::vector<Observation> data{obs1(0, 1), obs1(1, 2)};
  try {
    fit_quantile(builtin_linear(1), data, QuantileLevel(0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
}

TEST(FitQuantile, ResultStaysInBox) {
  std::vector<Observation> data;
  for (int i = 0; i < 20; ++i) data.push_back(obs1(i, 50.0 * i));
  const RegressionModel lin = builtin_linear(1, Box::uniform(2, -1, 1));
  const FitResult fit = fit_quantile(lin, data, QuantileLevel(0.5));
  EXPECT_TRUE(lin.box().contains(fit.beta_hat));
  EXPECT_NEAR(fit.beta_hat[1], 1.0, 1e-9);
}

TEST(FitQuantile, StartPointsAreDeterministic) {
  FitConfig cfg;
  cfg.seed = 42;
  const Box box = Box::uniform(2, -3, 5);
  const auto a = fit_start_points(box, cfg);
  const auto b = fit_start_points(box, cfg);
  ASSERT_EQ(a.size(), 8u);
  EXPECT_TRUE(a[0].isApprox(box.center()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_TRUE(box.contains(a[i]));
  }
}

TEST(FitQuantile, GrowthMatchesGridSearch) {
  const RegressionModel growth = builtin_growth();
  const ErrorLaw law = ErrorLaw::normal(0, 1);
  std::vector<Observation> data;
  Vector truth(2);
  truth << 1.0, 1.0;
  for (int i = 0; i < 200; ++i) {
    const double x = law.quantile((i + 0.5) / 200.0);
    data.push_back(obs1(x, growth.eval(Vector::Constant(1, x), truth)));
  }
  const QuantileLevel tau(0.5);
  const Vector grid = oracle::grid_search_2d(growth, data, tau, 1e-5);
  const FitResult fit = fit_quantile(growth, data, tau);
  EXPECT_NEAR(grid[0], 1.0, 2e-5);
  EXPECT_NEAR(grid[1], 1.0, 2e-5);
  EXPECT_NEAR(fit.beta_hat[0], grid[0], 1e-4);
  EXPECT_NEAR(fit.beta_hat[1], grid[1], 1e-4);
  EXPECT_LE(fit.objective, objective_at(growth, data, tau, grid) + 1e-9);
}

TEST(FitQuantile, MatchesPairwiseOracleOnSmallLinearInstances) {
  const RegressionModel lin = builtin_linear(1);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> msize(5, 12);
  std::normal_distribution<double> xd(0.0, 1.0);
  std::cauchy_distribution<double> ed(0.0, 1.0);
  std::uniform_real_distribution<double> tau_dist(0.2, 0.8);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = msize(rng);
    const QuantileLevel tau(tau_dist(rng));
    std::vector<Observation> data;
    for (int i = 0; i < m; ++i) {
      const double x = xd(rng);
      data.push_back(obs1(x, 1.0 + 0.5 * x + 0.3 * ed(rng)));
    }
    const oracle::PairwiseFit best = oracle::pairwise_linear_fit(data, tau, lin.box());
    const FitResult fit = fit_quantile(lin, data, tau, tight_config(trial));
    EXPECT_NEAR(fit.objective, best.objective, 1e-8) << "trial " << trial << " m " << m;
  }
}

TEST(FitQuantile, LocationEquivariance) {
  // Odd m with tau = 1/2 keeps tau * m off the integers, so the minimizer is
  // unique almost surely.
  const RegressionModel lin = builtin_linear(1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Observation> data;
  for (int i = 0; i < 51; ++i) {
    const double x = nd(rng);
    data.push_back(obs1(x, 0.5 - x + nd(rng)));
  }
  const QuantileLevel tau(0.5);
  const FitResult base = fit_quantile(lin, data, tau);
  for (double c : {-2.0, 0.75, 3.0}) {
    std::vector<Observation> shifted = data;
    for (auto& o : shifted) o.y += c;
    const FitResult moved = fit_quantile(lin, shifted, tau);
    EXPECT_NEAR(moved.beta_hat[0], base.beta_hat[0] + c, 1e-6);
    EXPECT_NEAR(moved.beta_hat[1], base.beta_hat[1], 1e-6);
  }
}

TEST(FitQuantile, ConfigValidation) {
  FitConfig cfg;
  cfg.restarts = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.xtol = -1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace qcpd
