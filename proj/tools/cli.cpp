#include "cli.hpp"

#include "qcpd/critvals.hpp"
#include "qcpd/error.hpp"
#include "qcpd/fit_io.hpp"
#include "qcpd/simlab.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#ifndef QCPD_DEFAULT_PRESETS
#define QCPD_DEFAULT_PRESETS "presets.json"
#endif

namespace qcpd::cli {
namespace {

constexpr int kNoisyRepsWarning = 10'000;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoError:
      return kIoError;
    case ErrorCode::kFormatError:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kMissingCriticalValue:
      return kDataError;
    case ErrorCode::kInsufficientData:
    case ErrorCode::kNonFiniteObjective:
    case ErrorCode::kAllZeroMatrix:
    case ErrorCode::kNoObservations:
      return kFitFailure;
    case ErrorCode::kInvalidArgument:
      return kUsage;
  }
  return kFitFailure;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) fail(ErrorCode::kIoError, "failed writing '" + path + "'");
}

Procedure parse_procedure(const std::string& name, std::optional<double> ratio) {
  if (name == "open") return Procedure::open_end();
  if (!ratio) throw UsageError("--proc closed requires --horizon-ratio");
  return Procedure::closed_end(*ratio);
}

// ------------------------------------------------------------------ crit

struct CritArgs {
  int p = 2;
  std::vector<double> gammas{0.0, 0.15, 0.25, 0.35, 0.45, 0.49};
  std::vector<double> alphas{0.01, 0.025, 0.05, 0.10, 0.25};
  std::string proc = "open";
  std::optional<double> horizon_ratio;
  int reps = kDefaultCritReps;
  int grid_n = kDefaultGridN;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
};

int cmd_crit(const CritArgs& a, std::ostream& out, std::ostream& err) {
  if (a.p < 1) throw UsageError("--p must be >= 1");
  if (a.reps < 100) throw UsageError("--reps must be >= 100");
  if (a.grid_n < 2) throw UsageError("--grid-n must be >= 2");
  for (double g : a.gammas) GammaParam{g};
  for (double al : a.alphas) {
    if (!(al > 0.0 && al < 1.0)) throw UsageError("alpha values must lie in (0,1)");
  }
  TabulateOptions opts;
  opts.p = a.p;
  opts.gammas = a.gammas;
  opts.alphas = a.alphas;
  opts.reps = a.reps;
  opts.grid_n = a.grid_n;
  opts.seed = a.seed;
  opts.threads = a.threads;
  if (a.proc == "both") {
    if (!a.horizon_ratio) throw UsageError("--proc both requires --horizon-ratio");
    opts.procedures = {Procedure::open_end(), Procedure::closed_end(*a.horizon_ratio)};
  } else {
    opts.procedures = {parse_procedure(a.proc, a.horizon_ratio)};
  }
  if (a.reps < kNoisyRepsWarning) {
    err << "warning: reps=" << a.reps
        << " leaves substantial Monte-Carlo noise in the tail quantiles\n";
  }
  const CriticalValueTable table = tabulate(opts);
  if (!a.out.empty()) save_table(table, a.out);
  out << format_table(table);
  return kOk;
}

// ------------------------------------------------------------------ fit

struct FitArgs {
  std::string model = "linear";
  double tau = 0.5;
  std::vector<double> box;
  std::string data;
  std::string out;
  int restarts = 8;
  std::uint64_t seed = 0;
};

std::optional<Box> parse_box(const std::vector<double>& values, int p) {
  if (values.empty()) return std::nullopt;
  if (values.size() == 2) return Box::uniform(p, values[0], values[1]);
  if (values.size() == static_cast<std::size_t>(2 * p)) {
    Box box{Vector(p), Vector(p)};
    for (int j = 0; j < p; ++j) {
      box.lo[j] = values[static_cast<std::size_t>(2 * j)];
      box.hi[j] = values[static_cast<std::size_t>(2 * j + 1)];
    }
    return box;
  }
  throw UsageError("--box takes lo,hi or lo1,hi1,...,lop,hip");
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const QuantileLevel tau(a.tau);
  if (a.model != "linear" && a.model != "growth") throw UsageError("--model must be linear or growth");
  const std::vector<Observation> data = read_observations_csv(read_text_file(a.data));
  const int q = data.empty() ? 1 : static_cast<int>(data.front().x.size());
  const int p = a.model == "linear" ? q + 1 : 2;
  const RegressionModel model = model_by_name(a.model, q, parse_box(a.box, p));
  FitConfig cfg;
  cfg.restarts = a.restarts;
  cfg.seed = a.seed;
  const FitReport report = fit_historical(model, data, tau, cfg);
  if (report.artifacts.rank_deficient()) {
    err << "warning: J_m is rank deficient (rank " << report.artifacts.rank << " of "
        << model.p() << "); a generalized inverse is used\n";
  }
  const std::string json = fit_report_to_json(report);
  if (a.out.empty()) {
    out << json;
  } else {
    write_text_file(a.out, json);
    out << "beta_hat=" << format_params(report.artifacts.beta_hat)
        << " objective=" << shortest(report.objective) << " m=" << report.artifacts.m
        << " rank=" << report.artifacts.rank << "\n";
  }
  return kOk;
}

// ------------------------------------------------------------------ detect

struct DetectArgs {
  std::string fit;
  std::string crit;
  double gamma = 0.25;
  double alpha = 0.05;
  std::string proc = "open";
  std::optional<std::int64_t> horizon;
};

int cmd_detect(const DetectArgs& a, std::istream& in, std::ostream& out, std::ostream& err) {
  const GammaParam gamma(a.gamma);
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("--alpha must lie in (0,1)");
  if (a.proc != "open" && a.proc != "closed") throw UsageError("--proc must be open or closed");
  if (a.proc == "closed" && !a.horizon) throw UsageError("--proc closed requires --horizon");
  if (a.horizon && *a.horizon < 1) throw UsageError("--horizon must be >= 1");

  FitReport fit = load_fit_report(a.fit);
  const CriticalValueTable table = load_table(a.crit);
  const int p = fit.artifacts.model.p();
  if (table.p != p) {
    fail(ErrorCode::kDimensionMismatch, "critical-value table is for p=" + std::to_string(table.p) +
                                            " but the fitted model has p=" + std::to_string(p));
  }
  const Procedure proc =
      a.proc == "open" ? Procedure::open_end()
                       : Procedure::closed_end(static_cast<double>(*a.horizon) /
                                               static_cast<double>(fit.artifacts.m));
  const double threshold = table.lookup(gamma.value(), a.alpha, proc);
  const int q = fit.artifacts.model.q();
  Detector detector(std::make_shared<const HistoricalArtifacts>(std::move(fit.artifacts)), gamma,
                    threshold, a.proc == "closed" ? a.horizon : std::nullopt);

  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Observation obs;
    try {
      obs = parse_observation_line(line, q);
    } catch (const Error& e) {
      err << "qcpd detect: line " << line_no << ": " << e.what() << "\n";
      return kDataError;
    }
    const Verdict v = detector.push(obs);
    out << v.k << ',' << shortest(v.gamma_stat) << ',' << shortest(v.threshold) << ','
        << (v.alarmed ? 1 : 0) << '\n'
        << std::flush;
    if (v.alarmed) {
      out << "ALARM k_hat=" << *detector.alarm_at() << '\n' << std::flush;
      return kAlarm;
    }
    if (a.horizon && v.k >= *a.horizon) {
      if (detector.horizon_exhausted()) out << "HORIZON_EXHAUSTED k=" << v.k << '\n';
      return kOk;
    }
  }
  return kOk;
}

// ------------------------------------------------------------------ sim

struct SimArgs {
  std::string preset;
  std::string scenario;
  std::string presets = QCPD_DEFAULT_PRESETS;
  int reps = 500;
  std::string crit;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

int cmd_sim(const SimArgs& a, std::ostream& out, std::ostream& /*err*/) {
  if (a.preset.empty() == a.scenario.empty()) {
    throw UsageError("give exactly one of --preset or --scenario");
  }
  if (a.reps < 1) throw UsageError("--reps must be >= 1");
  ExperimentPlan plan;
  if (!a.preset.empty()) {
    const auto presets = load_presets(a.presets);
    const auto it = presets.find(a.preset);
    if (it == presets.end()) {
      std::string known;
      for (const auto& [name, _] : presets) known += (known.empty() ? "" : ", ") + name;
      throw UsageError("unknown preset '" + a.preset + "' (known: " + known + ")");
    }
    plan = it->second;
  } else {
    plan = load_plan(a.scenario);
  }
  const CriticalValueTable table = load_table(a.crit);
  const std::vector<ReportRow> rows = run_plan(plan, a.reps, table, a.seed, a.threads);
  if (a.out.empty()) {
    out << report_to_csv(rows);
  } else {
    report_csv(rows, a.out);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Sequential change-point detection in nonlinear quantile regression"};
  app.name("qcpd");
  app.require_subcommand(1);

  CritArgs crit;
  auto* crit_cmd = app.add_subcommand("crit", "Tabulate Monte-Carlo critical values c_alpha(gamma)");
  crit_cmd->add_option("--p", crit.p, "Parameter dimension")->capture_default_str();
  crit_cmd->add_option("--gamma-list", crit.gammas, "Boundary exponents")->delimiter(',');
  crit_cmd->add_option("--alpha-list", crit.alphas, "Nominal sizes")->delimiter(',');
  crit_cmd->add_option("--proc", crit.proc, "open | closed | both")
      ->check(CLI::IsMember({"open", "closed", "both"}))
      ->capture_default_str();
  crit_cmd->add_option("--horizon-ratio", crit.horizon_ratio, "Closed-end T = lim T_m / m");
  crit_cmd->add_option("--reps", crit.reps, "Monte-Carlo replications")->capture_default_str();
  crit_cmd->add_option("--grid-n", crit.grid_n, "Grid steps per path")->capture_default_str();
  crit_cmd->add_option("--seed", crit.seed)->capture_default_str();
  crit_cmd->add_option("--threads", crit.threads, "0 = all hardware threads");
  crit_cmd->add_option("--out", crit.out, "Table JSON output path");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the historical quantile estimator");
  fit_cmd->add_option("--model", fit.model, "linear | growth")->capture_default_str();
  fit_cmd->add_option("--tau", fit.tau)->capture_default_str();
  fit_cmd->add_option("--box", fit.box, "lo,hi or lo1,hi1,...")->delimiter(',');
  fit_cmd->add_option("--data", fit.data, "CSV with header x1,...,xq,y")->required();
  fit_cmd->add_option("--out", fit.out, "Fit JSON output path");
  fit_cmd->add_option("--restarts", fit.restarts)->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed)->capture_default_str();

  DetectArgs det;
  auto* det_cmd = app.add_subcommand("detect", "Monitor observations read from standard input");
  det_cmd->add_option("--fit", det.fit, "Fit JSON from `qcpd fit`")->required();
  det_cmd->add_option("--crit", det.crit, "Critical-value table JSON")->required();
  det_cmd->add_option("--gamma", det.gamma)->capture_default_str();
  det_cmd->add_option("--alpha", det.alpha)->capture_default_str();
  det_cmd->add_option("--proc", det.proc, "open | closed")->capture_default_str();
  det_cmd->add_option("--horizon", det.horizon, "Monitoring horizon T_m");

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim", "Run a Monte-Carlo size/power experiment");
  sim_cmd->add_option("--preset", sim.preset, "Preset name");
  sim_cmd->add_option("--scenario", sim.scenario, "Scenario plan JSON");
  sim_cmd->add_option("--presets", sim.presets, "Preset definitions file")->capture_default_str();
  sim_cmd->add_option("--reps", sim.reps)->capture_default_str();
  sim_cmd->add_option("--crit", sim.crit, "Critical-value table JSON")->required();
  sim_cmd->add_option("--out", sim.out, "Report CSV output path");
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "0 = all hardware threads");

  std::vector<const char*> argv;
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*crit_cmd) return cmd_crit(crit, out, err);
    if (*fit_cmd) return cmd_fit(fit, out, err);
    if (*det_cmd) return cmd_detect(det, in, out, err);
    if (*sim_cmd) return cmd_sim(sim, out, err);
  } catch (const UsageError& e) {
    err << "qcpd: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const Error& e) {
    err << "qcpd: " << to_string(e.code()) << ": " << e.what() << "\n";
    return status_for(e.code());
  } catch (const std::exception& e) {
    err << "qcpd: internal error: " << e.what() << "\n";
    return kFitFailure;
  }
  return kUsage;
}

}  // namespace qcpd::cli
