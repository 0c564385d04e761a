#include "qcpd/simlab.hpp"

#include "qcpd/error.hpp"
#include "qcpd/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

namespace qcpd {
namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::kFormatError, std::string("cannot parse ") + what + " from '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& s, const char* what) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::kFormatError, std::string("cannot parse ") + what + " from '" + s + "'");
  }
  return v;
}

Vector to_vector(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<double> from_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) fail(ErrorCode::kFormatError, "unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

// ---------------------------------------------------------------- ErrorLaw

ErrorLaw ErrorLaw::normal(double mean, double sd) {
  if (!(sd > 0.0) || !std::isfinite(mean) || !std::isfinite(sd)) {
    fail(ErrorCode::kInvalidArgument, "normal error law needs finite mean and sd > 0");
  }
  return ErrorLaw(Kind::kNormal, mean, sd);
}

ErrorLaw ErrorLaw::cauchy(double location, double scale) {
  if (!(scale > 0.0) || !std::isfinite(location) || !std::isfinite(scale)) {
    fail(ErrorCode::kInvalidArgument, "Cauchy error law needs finite location and scale > 0");
  }
  return ErrorLaw(Kind::kCauchy, location, scale);
}

ErrorLaw ErrorLaw::parse(const std::string& label) {
  static const std::regex pattern(R"(^\s*([NC])\s*\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)\s*$)");
  std::smatch match;
  if (!std::regex_match(label, match, pattern)) {
    fail(ErrorCode::kFormatError, "error law must look like N(mean,sd) or C(loc,scale), got '" +
                                      label + "'");
  }
  const double a = parse_double(match[2].str(), "error-law location");
  const double b = parse_double(match[3].str(), "error-law scale");
  return match[1].str() == "N" ? normal(a, b) : cauchy(a, b);
}

std::string ErrorLaw::label() const {
  return std::string(kind_ == Kind::kNormal ? "N(" : "C(") + shortest(location_) + "," +
         shortest(scale_) + ")";
}

bool ErrorLaw::zero_is_quantile(QuantileLevel tau) const noexcept {
  // Both families are symmetric about their location.
  if (location_ == 0.0) return tau.value() == 0.5;
  return false;
}

double ErrorLaw::sample(Rng& rng) const {
  if (kind_ == Kind::kNormal) return std::normal_distribution<double>(location_, scale_)(rng);
  return std::cauchy_distribution<double>(location_, scale_)(rng);
}

double ErrorLaw::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) fail(ErrorCode::kInvalidArgument, "quantile level must lie in (0,1)");
  if (kind_ == Kind::kCauchy) return location_ + scale_ * std::tan(std::numbers::pi * (u - 0.5));
  // Normal quantile by bisection on erfc; only used off the hot path.
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * std::erfc(-mid / std::numbers::sqrt2);
    (cdf < u ? lo : hi) = mid;
  }
  return location_ + scale_ * 0.5 * (lo + hi);
}

// ---------------------------------------------------------------- Scenario

void Scenario::validate() const {
  model.check_params(beta0);
  model.check_params(beta1);
  if (m < model.p() + 1) {
    fail(ErrorCode::kInsufficientData, "scenario needs m >= p + 1 historical observations");
  }
  if (horizon < 1) fail(ErrorCode::kInvalidArgument, "monitoring horizon T_m must be >= 1");
  if (k0 < 0 || k0 > horizon) fail(ErrorCode::kInvalidArgument, "change point k0 must lie in [0, T_m]");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::kInvalidArgument, "alpha must lie in (0,1)");
  if (!procedure.is_open()) {
    const double ratio = static_cast<double>(horizon) / static_cast<double>(m);
    if (std::abs(procedure.horizon_ratio() - ratio) > 1e-9 * ratio) {
      fail(ErrorCode::kInvalidArgument, "closed-end horizon ratio must equal T_m / m");
    }
  }
  fit.validate();
}

StreamData generate_stream(const Scenario& s, std::uint64_t rep_index) {
  s.validate();
  Rng design = make_rng(s.design_seed, {rep_index});
  Rng noise = make_rng(s.noise_seed, {rep_index});
  std::normal_distribution<double> covariate(0.0, 1.0);
  const int q = s.model.q();

  auto draw = [&](const Vector& beta) {
    Observation obs;
    obs.x.resize(q);
    for (int j = 0; j < q; ++j) obs.x[j] = covariate(design);
    obs.y = s.model.eval(obs.x, beta) + s.error.sample(noise);
    return obs;
  };

  StreamData out;
  out.historical.reserve(static_cast<std::size_t>(s.m));
  out.monitoring.reserve(static_cast<std::size_t>(s.horizon));
  for (std::int64_t i = 0; i < s.m; ++i) out.historical.push_back(draw(s.beta0));
  for (std::int64_t k = 1; k <= s.horizon; ++k) {
    out.monitoring.push_back(draw(k <= s.k0 ? s.beta0 : s.beta1));
  }
  return out;
}

std::uint64_t replication_fit_seed(const Scenario& s, std::uint64_t rep_index) {
  return substream_key(s.noise_seed, {rep_index, hash_name("fit")});
}

std::vector<ReplicationSummary> run_replication_cells(const Scenario& s,
                                                      std::span<const DetectorCell> cells,
                                                      std::uint64_t rep_index) {
  const StreamData stream = generate_stream(s, rep_index);
  FitConfig cfg = s.fit;
  cfg.seed = replication_fit_seed(s, rep_index);
  const FitResult fit = fit_quantile(s.model, stream.historical, s.tau, cfg);
  auto artifacts = std::make_shared<const HistoricalArtifacts>(
      build_artifacts(s.model, fit.beta_hat, stream.historical, s.tau));

  const std::optional<std::int64_t> horizon =
      s.procedure.is_open() ? std::nullopt : std::optional<std::int64_t>(s.horizon);
  std::vector<ReplicationSummary> out;
  out.reserve(cells.size());
  for (const DetectorCell& cell : cells) {
    Detector detector(artifacts, GammaParam(cell.gamma), cell.critical_value, horizon);
    for (const Observation& obs : stream.monitoring) detector.push(obs);
    ReplicationSummary summary;
    summary.k_hat = detector.alarm_at();
    summary.rejected = summary.k_hat.has_value();
    summary.z_sup = detector.z_sup();
    out.push_back(summary);
  }
  return out;
}

ReplicationSummary run_replication(const Scenario& s, double critical_value,
                                   std::uint64_t rep_index) {
  const DetectorCell cell{s.gamma.value(), critical_value};
  return run_replication_cells(s, std::span<const DetectorCell>(&cell, 1), rep_index).front();
}

namespace {

double threshold_for(const Scenario& s, const CriticalValueTable& table, double gamma,
                     double alpha) {
  if (table.p != s.model.p()) {
    fail(ErrorCode::kMissingCriticalValue,
         "critical-value table is for p=" + std::to_string(table.p) + ", model '" +
             s.model.name() + "' has p=" + std::to_string(s.model.p()));
  }
  return table.lookup(gamma, alpha, s.procedure);
}

}  // namespace

ReplicationSummary run_replication(const Scenario& s, const CriticalValueTable& table,
                                   std::uint64_t rep_index) {
  return run_replication(s, threshold_for(s, table, s.gamma.value(), s.alpha), rep_index);
}

AggregateReport aggregate(std::span<const ReplicationSummary> reps) {
  AggregateReport report;
  report.n_reps = static_cast<int>(reps.size());
  std::vector<std::int64_t> stops;
  for (const ReplicationSummary& r : reps) {
    if (r.k_hat) stops.push_back(*r.k_hat);
  }
  report.rejections = static_cast<int>(stops.size());
  report.rate = reps.empty() ? 0.0 : static_cast<double>(stops.size()) / static_cast<double>(reps.size());
  if (!stops.empty()) {
    std::sort(stops.begin(), stops.end());
    report.khat_median = stops[(stops.size() - 1) / 2];
    report.khat_min = stops.front();
    report.khat_max = stops.size() == reps.size() ? stops.back() : kInfStoppingTime;
  }
  return report;
}

AggregateReport run_experiment(const Scenario& s, int n_reps, const CriticalValueTable& table,
                               unsigned threads) {
  if (n_reps < 1) fail(ErrorCode::kInvalidArgument, "n_reps must be >= 1");
  s.validate();
  const double threshold = threshold_for(s, table, s.gamma.value(), s.alpha);
  std::vector<ReplicationSummary> reps(static_cast<std::size_t>(n_reps));
  parallel_for(reps.size(), threads,
               [&](std::size_t r) { reps[r] = run_replication(s, threshold, r); });
  return aggregate(reps);
}

// ---------------------------------------------------------------- plans

RegressionModel ExperimentPlan::make_model() const { return model_by_name(model, q, box); }

Procedure ExperimentPlan::make_procedure() const {
  if (procedure == "open") return Procedure::open_end();
  if (procedure == "closed") {
    return Procedure::closed_end(static_cast<double>(horizon) / static_cast<double>(m));
  }
  fail(ErrorCode::kFormatError, "procedure must be 'open' or 'closed', got '" + procedure + "'");
}

void ExperimentPlan::validate() const {
  if (name.empty()) fail(ErrorCode::kFormatError, "plan needs a name");
  if (beta1s.empty() || k0s.empty() || gammas.empty() || alphas.empty() || errors.empty()) {
    fail(ErrorCode::kFormatError, "plan '" + name +
                                      "' needs non-empty beta1, k0, gammas, alphas and errors");
  }
  const RegressionModel mdl = make_model();
  const Procedure proc = make_procedure();
  for (const Vector& b1 : beta1s) {
    for (std::int64_t k0 : k0s) {
      for (double g : gammas) {
        for (double a : alphas) {
          Scenario s = make_scenario(*this, errors.front(), b1, k0, g, a, 0);
          s.validate();
        }
      }
    }
  }
  (void)mdl;
  (void)proc;
}

namespace {

ExperimentPlan plan_from_doc(const nlohmann::json& doc) {
  try {
    ExperimentPlan plan;
    plan.name = doc.at("name").get<std::string>();
    plan.model = doc.value("model", std::string("linear"));
    plan.q = doc.value("q", 1);
    if (doc.contains("box")) {
      const auto b = doc.at("box").get<std::vector<double>>();
      const int p = plan.model == "linear" ? plan.q + 1 : 2;
      if (b.size() == 2) {
        plan.box = Box::uniform(p, b[0], b[1]);
      } else if (b.size() == static_cast<std::size_t>(2 * p)) {
        Box box{Vector(p), Vector(p)};
        for (int j = 0; j < p; ++j) {
          box.lo[j] = b[2 * j];
          box.hi[j] = b[2 * j + 1];
        }
        plan.box = box;
      } else {
        fail(ErrorCode::kFormatError, "box must be [lo, hi] or per-coordinate lo/hi pairs");
      }
    }
    plan.beta0 = to_vector(doc.at("beta0"));
    for (const auto& b : doc.at("beta1")) plan.beta1s.push_back(to_vector(b));
    const auto& k0 = doc.at("k0");
    if (k0.is_array()) {
      plan.k0s = k0.get<std::vector<std::int64_t>>();
    } else {
      plan.k0s = {k0.get<std::int64_t>()};
    }
    plan.m = doc.value("m", std::int64_t{200});
    plan.horizon = doc.value("horizon", std::int64_t{500});
    plan.tau = doc.value("tau", 0.5);
    plan.gammas = doc.at("gammas").get<std::vector<double>>();
    plan.alphas = doc.at("alphas").get<std::vector<double>>();
    plan.procedure = doc.value("procedure", std::string("open"));
    for (const auto& e : doc.at("errors")) plan.errors.push_back(ErrorLaw::parse(e.get<std::string>()));
    plan.validate();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("malformed scenario plan: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormatError) throw;
    fail(ErrorCode::kFormatError, std::string("invalid scenario plan: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

nlohmann::json parse_json(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

ExperimentPlan plan_from_json(const std::string& text) {
  return plan_from_doc(parse_json(text, "scenario plan"));
}

std::string plan_to_json(const ExperimentPlan& plan) {
  nlohmann::ordered_json doc;
  doc["name"] = plan.name;
  doc["model"] = plan.model;
  doc["q"] = plan.q;
  if (plan.box) {
    std::vector<double> flat;
    for (Eigen::Index j = 0; j < plan.box->dim(); ++j) {
      flat.push_back(plan.box->lo[j]);
      flat.push_back(plan.box->hi[j]);
    }
    doc["box"] = flat;
  }
  doc["beta0"] = from_vector(plan.beta0);
  doc["beta1"] = nlohmann::ordered_json::array();
  for (const Vector& b : plan.beta1s) doc["beta1"].push_back(from_vector(b));
  doc["k0"] = plan.k0s;
  doc["m"] = plan.m;
  doc["horizon"] = plan.horizon;
  doc["tau"] = plan.tau;
  doc["gammas"] = plan.gammas;
  doc["alphas"] = plan.alphas;
  doc["procedure"] = plan.procedure;
  doc["errors"] = nlohmann::ordered_json::array();
  for (const ErrorLaw& e : plan.errors) doc["errors"].push_back(e.label());
  return doc.dump(2) + "\n";
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  return plan_from_json(read_file(path));
}

std::map<std::string, ExperimentPlan> load_presets(const std::filesystem::path& path) {
  const nlohmann::json doc = parse_json(read_file(path), "preset file");
  if (!doc.is_object() || doc.value("schema", std::string{}) != "qcpd-presets-1" ||
      !doc.contains("presets") || !doc.at("presets").is_array()) {
    fail(ErrorCode::kFormatError, "preset file must have schema 'qcpd-presets-1' and a presets array");
  }
  std::map<std::string, ExperimentPlan> presets;
  for (const auto& entry : doc.at("presets")) {
    ExperimentPlan plan = plan_from_doc(entry);
    const std::string name = plan.name;
    if (!presets.emplace(name, std::move(plan)).second) {
      fail(ErrorCode::kFormatError, "duplicate preset '" + name + "'");
    }
  }
  return presets;
}

Scenario make_scenario(const ExperimentPlan& plan, const ErrorLaw& error, const Vector& beta1,
                       std::int64_t k0, double gamma, double alpha, std::uint64_t seed) {
  Scenario s;
  s.name = plan.name;
  s.model = plan.make_model();
  s.beta0 = plan.beta0;
  s.beta1 = beta1;
  s.k0 = k0;
  s.m = plan.m;
  s.horizon = plan.horizon;
  s.tau = QuantileLevel(plan.tau);
  s.gamma = GammaParam(gamma);
  s.alpha = alpha;
  s.procedure = plan.make_procedure();
  s.error = error;
  s.design_seed = substream_key(seed, {hash_name("design")});
  s.noise_seed = substream_key(seed, {hash_name("noise")});
  return s;
}

std::vector<ReportRow> run_plan(const ExperimentPlan& plan, int n_reps,
                                const CriticalValueTable& table, std::uint64_t seed,
                                unsigned threads) {
  if (n_reps < 1) fail(ErrorCode::kInvalidArgument, "n_reps must be >= 1");
  plan.validate();
  std::vector<ReportRow> rows;
  for (const ErrorLaw& error : plan.errors) {
    for (const Vector& beta1 : plan.beta1s) {
      for (std::int64_t k0 : plan.k0s) {
        const Scenario base =
            make_scenario(plan, error, beta1, k0, plan.gammas.front(), plan.alphas.front(), seed);
        std::vector<DetectorCell> cells;
        for (double g : plan.gammas) {
          for (double a : plan.alphas) cells.push_back({g, threshold_for(base, table, g, a)});
        }
        std::vector<std::vector<ReplicationSummary>> by_rep(static_cast<std::size_t>(n_reps));
        parallel_for(by_rep.size(), threads,
                     [&](std::size_t r) { by_rep[r] = run_replication_cells(base, cells, r); });

        std::vector<ReplicationSummary> column(by_rep.size());
        std::size_t c = 0;
        for (double g : plan.gammas) {
          for (double a : plan.alphas) {
            for (std::size_t r = 0; r < by_rep.size(); ++r) column[r] = by_rep[r][c];
            ReportRow row;
            row.scenario = plan.name;
            row.procedure = plan.procedure;
            row.gamma = g;
            row.alpha = a;
            row.error_law = error.label();
            row.beta1 = format_params(beta1);
            row.k0 = k0;
            row.report = aggregate(column);
            rows.push_back(std::move(row));
            ++c;
          }
        }
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------- CSV

std::string format_params(const Vector& beta) {
  std::string out;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (j) out += ';';
    out += shortest(beta[j]);
  }
  return out;
}

std::string report_to_csv(std::span<const ReportRow> rows) {
  std::ostringstream os;
  os << kReportHeader << "\n";
  for (const ReportRow& row : rows) {
    const AggregateReport& r = row.report;
    os << csv_field(row.scenario) << ',' << row.procedure << ',' << shortest(row.gamma) << ','
       << shortest(row.alpha) << ',' << csv_field(row.error_law) << ',' << csv_field(row.beta1)
       << ',' << row.k0 << ',' << r.n_reps << ',' << shortest(r.rate) << ','
       << (r.khat_median ? std::to_string(*r.khat_median) : "NA") << ','
       << (r.khat_min ? std::to_string(*r.khat_min) : "NA") << ','
       << (r.khat_max == kInfStoppingTime ? "Inf" : std::to_string(r.khat_max)) << "\n";
  }
  return os.str();
}

std::vector<ReportRow> report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    fail(ErrorCode::kFormatError, "report CSV header mismatch");
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 12) fail(ErrorCode::kFormatError, "report CSV row needs 12 fields: " + line);
    ReportRow row;
    row.scenario = f[0];
    row.procedure = f[1];
    row.gamma = parse_double(f[2], "gamma");
    row.alpha = parse_double(f[3], "alpha");
    row.error_law = f[4];
    row.beta1 = f[5];
    row.k0 = parse_int(f[6], "k0");
    row.report.n_reps = static_cast<int>(parse_int(f[7], "n_reps"));
    row.report.rate = parse_double(f[8], "rate");
    row.report.rejections =
        static_cast<int>(std::llround(row.report.rate * row.report.n_reps));
    if (f[9] != "NA") row.report.khat_median = parse_int(f[9], "khat_median");
    if (f[10] != "NA") row.report.khat_min = parse_int(f[10], "khat_min");
    row.report.khat_max = f[11] == "Inf" ? kInfStoppingTime : parse_int(f[11], "khat_max");
    rows.push_back(std::move(row));
  }
  return rows;
}

void report_csv(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "' for writing");
  out << report_to_csv(rows);
  if (!out) fail(ErrorCode::kIoError, "failed writing '" + path.string() + "'");
}

}  // namespace qcpd
