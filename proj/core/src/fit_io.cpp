#include "qcpd/fit_io.hpp"

#include "qcpd/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qcpd {
namespace {

using Json = nlohmann::ordered_json;

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index p, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != p) {
    fail(ErrorCode::kFormatError, std::string(what) + " must be a " + std::to_string(p) + "x" +
                                      std::to_string(p) + " array");
  }
  Matrix m(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != p) {
      fail(ErrorCode::kFormatError, std::string(what) + " has a row of the wrong length");
    }
    for (Eigen::Index k = 0; k < p; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
  }
  return m;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::kFormatError, "not a finite number: '" + s + "'");
  }
  return v;
}

}  // namespace

FitReport fit_historical(const RegressionModel& model, std::span<const Observation> data,
                         QuantileLevel tau, const FitConfig& cfg) {
  const FitResult fit = fit_quantile(model, data, tau, cfg);
  return FitReport{build_artifacts(model, fit.beta_hat, data, tau), fit.objective, fit.converged,
                   fit.starts_used};
}

std::string fit_report_to_json(const FitReport& report) {
  const HistoricalArtifacts& a = report.artifacts;
  Json doc;
  doc["schema"] = kFitSchema;
  doc["model"] = a.model.name();
  doc["p"] = a.model.p();
  doc["q"] = a.model.q();
  doc["box"] = {{"lo", to_std(a.model.box().lo)}, {"hi", to_std(a.model.box().hi)}};
  doc["tau"] = a.tau.value();
  doc["m"] = a.m;
  doc["beta_hat"] = to_std(a.beta_hat);
  doc["objective"] = report.objective;
  doc["converged"] = report.converged;
  doc["starts_used"] = report.starts_used;
  doc["J_m"] = matrix_to_json(a.jm);
  doc["J_m_inv_sqrt"] = matrix_to_json(a.j_inv_sqrt);
  doc["rank"] = a.rank;
  doc["rank_deficient"] = a.rank_deficient();
  return doc.dump(2) + "\n";
}

FitReport fit_report_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("fit file is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("schema", std::string{}) != kFitSchema) {
      fail(ErrorCode::kFormatError, std::string("fit file schema must be '") + kFitSchema + "'");
    }
    const auto lo = doc.at("box").at("lo").get<std::vector<double>>();
    const auto hi = doc.at("box").at("hi").get<std::vector<double>>();
    Box box{Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
            Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
    RegressionModel model =
        model_by_name(doc.at("model").get<std::string>(), doc.at("q").get<int>(), box);
    if (doc.at("p").get<int>() != model.p()) {
      fail(ErrorCode::kFormatError, "fit file p does not match its model");
    }
    const auto beta = doc.at("beta_hat").get<std::vector<double>>();
    Vector beta_hat = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    model.check_params(beta_hat);
    const Eigen::Index p = model.p();
    Matrix jm = matrix_from_json(doc.at("J_m"), p, "J_m");
    Matrix inv = matrix_from_json(doc.at("J_m_inv_sqrt"), p, "J_m_inv_sqrt");
    const QuantileLevel tau(doc.at("tau").get<double>());
    const auto m = doc.at("m").get<std::int64_t>();
    if (m < 1) fail(ErrorCode::kFormatError, "fit file m must be >= 1");
    HistoricalArtifacts artifacts{std::move(model), std::move(beta_hat), std::move(jm),
                                  std::move(inv),   doc.at("rank").get<Eigen::Index>(),
                                  m,                tau};
    return FitReport{std::move(artifacts), doc.at("objective").get<double>(),
                     doc.at("converged").get<bool>(), doc.at("starts_used").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("malformed fit file: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormatError) throw;
    fail(ErrorCode::kFormatError, std::string("invalid fit file: ") + e.what());
  }
}

void save_fit_report(const FitReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "' for writing");
  out << fit_report_to_json(report);
  if (!out) fail(ErrorCode::kIoError, "failed writing '" + path.string() + "'");
}

FitReport load_fit_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return fit_report_from_json(buffer.str());
}

Observation parse_observation_line(const std::string& line, int q) {
  const auto fields = split(line);
  if (static_cast<int>(fields.size()) != q + 1) {
    fail(ErrorCode::kFormatError, "expected " + std::to_string(q + 1) + " comma-separated values, got " +
                                      std::to_string(fields.size()));
  }
  Observation obs;
  obs.x.resize(q);
  for (int j = 0; j < q; ++j) obs.x[j] = parse_number(fields[static_cast<std::size_t>(j)]);
  obs.y = parse_number(fields.back());
  return obs;
}

std::vector<Observation> read_observations_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  int q = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  const auto header = split(trim(line));
  if (header.size() < 2 || header.back() != "y") {
    fail(ErrorCode::kFormatError, "line " + std::to_string(line_no) + ": header must be x1,...,xq,y");
  }
  q = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < q; ++j) {
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j + 1)) {
      fail(ErrorCode::kFormatError, "line " + std::to_string(line_no) + ": header must be x1,...,xq,y");
    }
  }
  std::vector<Observation> data;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      data.push_back(parse_observation_line(line, q));
    } catch (const Error& e) {
      fail(ErrorCode::kFormatError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

}  // namespace qcpd
