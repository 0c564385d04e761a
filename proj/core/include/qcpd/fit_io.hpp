#pragma once

#include "qcpd/detector.hpp"
#include "qcpd/qfit.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace qcpd {

inline constexpr const char* kFitSchema = "qcpd-fit-1";

/// Everything the historical period produces: the estimator with its
/// diagnostics and the frozen detector artifacts.
struct FitReport {
  HistoricalArtifacts artifacts;
  double objective = 0.0;
  bool converged = false;
  int starts_used = 0;
};

/// Runs fit_quantile and build_artifacts on the historical block.
FitReport fit_historical(const RegressionModel& model, std::span<const Observation> data,
                         QuantileLevel tau, const FitConfig& cfg = {});

std::string fit_report_to_json(const FitReport& report);
/// Rebuilds the model from its name, covariate count and box. Matrices are
/// restored verbatim, not recomputed.
FitReport fit_report_from_json(const std::string& text);

void save_fit_report(const FitReport& report, const std::filesystem::path& path);
FitReport load_fit_report(const std::filesystem::path& path);

/// CSV with header x1,...,xq,y. Throws FormatError with the line number.
std::vector<Observation> read_observations_csv(const std::string& text);

/// One "x1,...,xq,y" line; throws FormatError.
Observation parse_observation_line(const std::string& line, int q);

}  // namespace qcpd
