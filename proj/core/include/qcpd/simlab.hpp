#pragma once

#include "qcpd/critvals.hpp"
#include "qcpd/detector.hpp"
#include "qcpd/qfit.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qcpd {

class ErrorLaw {
 public:
  enum class Kind { kNormal, kCauchy };

  static ErrorLaw normal(double mean, double sd);
  static ErrorLaw cauchy(double location, double scale);
  /// "N(mean,sd)" or "C(location,scale)".
  static ErrorLaw parse(const std::string& label);

  Kind kind() const noexcept { return kind_; }
  double location() const noexcept { return location_; }
  double scale() const noexcept { return scale_; }
  std::string label() const;
  /// Whether F(0) = tau holds for this law.
  bool zero_is_quantile(QuantileLevel tau) const noexcept;

  double sample(Rng& rng) const;
  /// Quantile function, used by tests and for inverse-CDF checks.
  double quantile(double u) const;

 private:
  ErrorLaw(Kind kind, double location, double scale)
      : kind_(kind), location_(location), scale_(scale) {}
  Kind kind_;
  double location_;
  double scale_;
};

/// Full generative description of one monitoring experiment cell.
struct Scenario {
  std::string name = "custom";
  RegressionModel model = builtin_linear(1);
  Vector beta0;
  Vector beta1;
  /// Observations m+1..m+k0 follow beta0, later ones beta1. k0 = horizon
  /// means no change.
  std::int64_t k0 = 0;
  std::int64_t m = 200;
  /// T_m: number of monitored observations.
  std::int64_t horizon = 500;
  QuantileLevel tau{0.5};
  GammaParam gamma{0.25};
  double alpha = 0.05;
  Procedure procedure = Procedure::open_end();
  ErrorLaw error = ErrorLaw::normal(0.0, 1.0);
  std::uint64_t design_seed = 0;
  std::uint64_t noise_seed = 0;
  FitConfig fit;

  void validate() const;
};

struct StreamData {
  std::vector<Observation> historical;
  std::vector<Observation> monitoring;
};

/// Covariates N(0,1) from the design substream of rep_index, errors from the
/// noise substream. Deterministic in (scenario seeds, rep_index).
StreamData generate_stream(const Scenario& s, std::uint64_t rep_index);

struct ReplicationSummary {
  bool rejected = false;
  std::optional<std::int64_t> k_hat;
  double z_sup = 0.0;
};

/// Fit seed used for replication rep_index.
std::uint64_t replication_fit_seed(const Scenario& s, std::uint64_t rep_index);

ReplicationSummary run_replication(const Scenario& s, const CriticalValueTable& table,
                                   std::uint64_t rep_index);
ReplicationSummary run_replication(const Scenario& s, double critical_value,
                                   std::uint64_t rep_index);

struct DetectorCell {
  double gamma = 0.0;
  double critical_value = 0.0;
};

/// One stream and one fit, monitored by several detectors. Entry i equals
/// run_replication with s.gamma = cells[i].gamma and that critical value.
std::vector<ReplicationSummary> run_replication_cells(const Scenario& s,
                                                      std::span<const DetectorCell> cells,
                                                      std::uint64_t rep_index);

inline constexpr std::int64_t kInfStoppingTime = std::numeric_limits<std::int64_t>::max();

struct AggregateReport {
  int n_reps = 0;
  int rejections = 0;
  /// Empirical size under H0, power under H1.
  double rate = 0.0;
  /// Median and min over alarmed replications; unset when none alarmed.
  std::optional<std::int64_t> khat_median;
  std::optional<std::int64_t> khat_min;
  /// kInfStoppingTime as soon as one replication never alarmed.
  std::int64_t khat_max = kInfStoppingTime;
};

/// Median is the lower middle order statistic of the alarmed stopping times.
AggregateReport aggregate(std::span<const ReplicationSummary> reps);

AggregateReport run_experiment(const Scenario& s, int n_reps, const CriticalValueTable& table,
                               unsigned threads = 0);

/// A grid of scenario cells sharing one design: every combination of error
/// law, post-change parameter, change point, gamma and alpha.
struct ExperimentPlan {
  std::string name;
  std::string model = "linear";
  int q = 1;
  std::optional<Box> box;
  Vector beta0;
  std::vector<Vector> beta1s;
  std::vector<std::int64_t> k0s;
  std::int64_t m = 200;
  std::int64_t horizon = 500;
  double tau = 0.5;
  std::vector<double> gammas;
  std::vector<double> alphas;
  std::string procedure = "open";
  std::vector<ErrorLaw> errors;

  RegressionModel make_model() const;
  Procedure make_procedure() const;
  void validate() const;
};

ExperimentPlan plan_from_json(const std::string& text);
std::string plan_to_json(const ExperimentPlan& plan);
ExperimentPlan load_plan(const std::filesystem::path& path);
std::map<std::string, ExperimentPlan> load_presets(const std::filesystem::path& path);

/// Scenario for one cell; seeds derive from the root seed only, so cells of
/// a plan (and plans with the same seed) see identical covariates and noise.
Scenario make_scenario(const ExperimentPlan& plan, const ErrorLaw& error, const Vector& beta1,
                       std::int64_t k0, double gamma, double alpha, std::uint64_t seed);

struct ReportRow {
  std::string scenario;
  std::string procedure;
  double gamma = 0.0;
  double alpha = 0.0;
  std::string error_law;
  std::string beta1;
  std::int64_t k0 = 0;
  AggregateReport report;
};

std::vector<ReportRow> run_plan(const ExperimentPlan& plan, int n_reps,
                                const CriticalValueTable& table, std::uint64_t seed,
                                unsigned threads = 0);

inline constexpr const char* kReportHeader =
    "scenario,procedure,gamma,alpha,error_law,beta1,k0,n_reps,rate,khat_median,khat_min,khat_max";

std::string report_to_csv(std::span<const ReportRow> rows);
std::vector<ReportRow> report_from_csv(const std::string& text);
void report_csv(std::span<const ReportRow> rows, const std::filesystem::path& path);

/// "1;2" style rendering of a parameter vector.
std::string format_params(const Vector& beta);

}  // namespace qcpd
