#include "qcpd/critvals.hpp"

#include "qcpd/error.hpp"
#include "qcpd/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace qcpd {
namespace {

constexpr double kKeyTol = 1e-12;

bool close(double a, double b) { return std::abs(a - b) <= kKeyTol; }

void check_grid(int grid_n) {
  if (grid_n < 2) fail(ErrorCode::kInvalidArgument, "grid_n must be >= 2");
}

void check_upper(double upper) {
  if (!(upper > 0.0 && upper <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "upper end of the time interval must lie in (0, 1]");
  }
}

}  // namespace

Procedure Procedure::closed_end(double horizon_ratio) {
  if (!(horizon_ratio > 0.0) || !std::isfinite(horizon_ratio)) {
    fail(ErrorCode::kInvalidArgument, "closed-end procedure needs a finite horizon ratio T > 0");
  }
  return Procedure(Kind::kClosedEnd, horizon_ratio);
}

double Procedure::upper() const noexcept {
  return is_open() ? 1.0 : horizon_ratio_ / (1.0 + horizon_ratio_);
}

bool Procedure::same_as(const Procedure& other, double ratio_tol) const noexcept {
  if (kind_ != other.kind_) return false;
  return is_open() || std::abs(horizon_ratio_ - other.horizon_ratio_) <= ratio_tol;
}

SupSampler::SupSampler(int p, std::vector<double> gammas, std::vector<double> uppers,
                       int grid_n)
    : p_(p), gammas_(std::move(gammas)), uppers_(std::move(uppers)), grid_n_(grid_n) {
  if (p_ < 1) fail(ErrorCode::kInvalidArgument, "dimension p must be >= 1");
  check_grid(grid_n_);
  if (gammas_.empty() || uppers_.empty()) {
    fail(ErrorCode::kInvalidArgument, "sampler needs at least one gamma and one upper end");
  }
  for (double g : gammas_) GammaParam{g};
  for (double u : uppers_) check_upper(u);

  const std::size_t cells = gammas_.size() * uppers_.size();
  weights_.resize(cells * static_cast<std::size_t>(grid_n_));
  const double n = static_cast<double>(grid_n_);
  for (int j = 1; j <= grid_n_; ++j) {
    for (std::size_t u = 0; u < uppers_.size(); ++u) {
      const double dt = uppers_[u] / n;
      const double t = static_cast<double>(j) * dt;
      for (std::size_t g = 0; g < gammas_.size(); ++g) {
        weights_[static_cast<std::size_t>(j - 1) * cells + u * gammas_.size() + g] =
            std::sqrt(dt) * std::pow(t, -gammas_[g]);
      }
    }
  }
}

void SupSampler::sample(std::uint64_t seed, std::uint64_t replication,
                        std::span<double> out) const {
  const std::size_t cells = gammas_.size() * uppers_.size();
  if (out.size() != cells) fail(ErrorCode::kDimensionMismatch, "output span has the wrong size");
  std::fill(out.begin(), out.end(), 0.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int c = 0; c < p_; ++c) {
    Rng rng = make_rng(seed, {replication, static_cast<std::uint64_t>(c)});
    double walk = 0.0;
    const double* w = weights_.data();
    for (int j = 0; j < grid_n_; ++j, w += cells) {
      walk += normal(rng);
      const double a = std::abs(walk);
      for (std::size_t k = 0; k < cells; ++k) out[k] = std::max(out[k], a * w[k]);
    }
    normal.reset();
  }
}

std::vector<double> SupSampler::sample(std::uint64_t seed, std::uint64_t replication) const {
  std::vector<double> out(gammas_.size() * uppers_.size());
  sample(seed, replication, out);
  return out;
}

double simulate_sup(int p, GammaParam gamma, double upper, int grid_n, Rng& rng) {
  if (p < 1) fail(ErrorCode::kInvalidArgument, "dimension p must be >= 1");
  check_grid(grid_n);
  check_upper(upper);
  const double dt = upper / static_cast<double>(grid_n);
  const double sd = std::sqrt(dt);
  std::normal_distribution<double> normal(0.0, 1.0);
  double best = 0.0;
  for (int c = 0; c < p; ++c) {
    double w = 0.0;
    for (int j = 1; j <= grid_n; ++j) {
      w += sd * normal(rng);
      best = std::max(best, std::abs(w) / std::pow(static_cast<double>(j) * dt, gamma.value()));
    }
  }
  return best;
}

double upper_quantile(std::vector<double>& sample, double alpha) {
  if (sample.empty()) fail(ErrorCode::kInvalidArgument, "empty sample");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::kInvalidArgument, "alpha must lie in (0,1)");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  // The tolerance keeps exact products such as 50000 * 0.95 from rounding up.
  auto rank = static_cast<std::size_t>(std::ceil(n * (1.0 - alpha) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sample.size());
  return sample[rank - 1];
}

CriticalValueTable tabulate(const TabulateOptions& opts) {
  if (opts.reps < 100) fail(ErrorCode::kInvalidArgument, "critical values need reps >= 100");
  if (opts.procedures.empty() || opts.alphas.empty()) {
    fail(ErrorCode::kInvalidArgument, "need at least one procedure and one alpha");
  }
  for (double a : opts.alphas) {
    if (!(a > 0.0 && a < 1.0)) fail(ErrorCode::kInvalidArgument, "alpha must lie in (0,1)");
  }
  std::vector<double> uppers;
  for (const Procedure& proc : opts.procedures) uppers.push_back(proc.upper());
  const SupSampler sampler(opts.p, opts.gammas, uppers, opts.grid_n);

  const std::size_t cells = opts.gammas.size() * uppers.size();
  const auto reps = static_cast<std::size_t>(opts.reps);
  std::vector<double> draws(reps * cells);
  parallel_for(reps, opts.threads, [&](std::size_t r) {
    sampler.sample(opts.seed, r, std::span<double>(draws.data() + r * cells, cells));
  });

  CriticalValueTable table{opts.p, opts.reps, opts.grid_n, opts.seed, {}};
  std::vector<double> column(reps);
  for (std::size_t u = 0; u < uppers.size(); ++u) {
    for (std::size_t g = 0; g < opts.gammas.size(); ++g) {
      const std::size_t cell = u * opts.gammas.size() + g;
      for (std::size_t r = 0; r < reps; ++r) column[r] = draws[r * cells + cell];
      for (double alpha : opts.alphas) {
        table.entries.push_back(
            {opts.gammas[g], alpha, opts.procedures[u], upper_quantile(column, alpha)});
      }
    }
  }
  return table;
}

double critical_value(int p, GammaParam gamma, double alpha, const Procedure& proc, int reps,
                      int grid_n, std::uint64_t seed, unsigned threads) {
  TabulateOptions opts;
  opts.p = p;
  opts.gammas = {gamma.value()};
  opts.alphas = {alpha};
  opts.procedures = {proc};
  opts.reps = reps;
  opts.grid_n = grid_n;
  opts.seed = seed;
  opts.threads = threads;
  return tabulate(opts).entries.front().value;
}

std::optional<double> CriticalValueTable::find(double gamma, double alpha,
                                               const Procedure& proc) const {
  for (const CritEntry& e : entries) {
    if (close(e.gamma, gamma) && close(e.alpha, alpha) && e.procedure.same_as(proc)) {
      return e.value;
    }
  }
  return std::nullopt;
}

double CriticalValueTable::lookup(double gamma, double alpha, const Procedure& proc) const {
  if (auto v = find(gamma, alpha, proc)) return *v;
  std::ostringstream os;
  os << "no critical value for p=" << p << ", gamma=" << gamma << ", alpha=" << alpha
     << ", procedure=" << proc.name();
  if (!proc.is_open()) os << " (T=" << proc.horizon_ratio() << ")";
  fail(ErrorCode::kMissingCriticalValue, os.str());
}

bool CriticalValueTable::operator==(const CriticalValueTable& other) const {
  if (p != other.p || reps != other.reps || grid_n != other.grid_n || seed != other.seed ||
      entries.size() != other.entries.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const CritEntry& a = entries[i];
    const CritEntry& b = other.entries[i];
    if (a.gamma != b.gamma || a.alpha != b.alpha || a.value != b.value ||
        a.procedure.kind() != b.procedure.kind() ||
        a.procedure.horizon_ratio() != b.procedure.horizon_ratio()) {
      return false;
    }
  }
  return true;
}

std::string table_to_json(const CriticalValueTable& table) {
  nlohmann::ordered_json doc;
  doc["schema"] = kCritTableSchema;
  doc["p"] = table.p;
  doc["reps"] = table.reps;
  doc["grid_n"] = table.grid_n;
  doc["seed"] = table.seed;
  doc["entries"] = nlohmann::ordered_json::array();
  for (const CritEntry& e : table.entries) {
    nlohmann::ordered_json row;
    row["gamma"] = e.gamma;
    row["alpha"] = e.alpha;
    row["procedure"] = e.procedure.name();
    if (!e.procedure.is_open()) row["horizon_ratio"] = e.procedure.horizon_ratio();
    row["value"] = e.value;
    doc["entries"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

CriticalValueTable table_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("critical-value table is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("schema", std::string{}) != kCritTableSchema) {
      fail(ErrorCode::kFormatError,
           std::string("critical-value table schema must be '") + kCritTableSchema + "'");
    }
    CriticalValueTable table;
    table.p = doc.at("p").get<int>();
    table.reps = doc.at("reps").get<int>();
    table.grid_n = doc.at("grid_n").get<int>();
    table.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& row : doc.at("entries")) {
      const auto proc_name = row.at("procedure").get<std::string>();
      Procedure proc = Procedure::open_end();
      if (proc_name == "closed") {
        proc = Procedure::closed_end(row.at("horizon_ratio").get<double>());
      } else if (proc_name != "open") {
        fail(ErrorCode::kFormatError, "unknown procedure '" + proc_name + "'");
      }
      table.entries.push_back({row.at("gamma").get<double>(), row.at("alpha").get<double>(), proc,
                               row.at("value").get<double>()});
    }
    return table;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("malformed critical-value table: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormatError) throw;
    fail(ErrorCode::kFormatError, std::string("malformed critical-value table: ") + e.what());
  }
}

void save_table(const CriticalValueTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "' for writing");
  out << table_to_json(table);
  if (!out) fail(ErrorCode::kIoError, "failed writing '" + path.string() + "'");
}

CriticalValueTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return table_from_json(buffer.str());
}

std::string format_table(const CriticalValueTable& table) {
  std::vector<Procedure> procs;
  std::vector<double> gammas;
  std::vector<double> alphas;
  auto add_unique = [](std::vector<double>& v, double x) {
    if (std::none_of(v.begin(), v.end(), [&](double y) { return close(x, y); })) v.push_back(x);
  };
  for (const CritEntry& e : table.entries) {
    if (std::none_of(procs.begin(), procs.end(),
                     [&](const Procedure& q) { return q.same_as(e.procedure); })) {
      procs.push_back(e.procedure);
    }
    add_unique(gammas, e.gamma);
    add_unique(alphas, e.alpha);
  }

  std::ostringstream os;
  os << std::fixed;
  for (const Procedure& proc : procs) {
    os << "c_alpha(gamma), p=" << table.p << ", reps=" << table.reps << ", grid_n=" << table.grid_n
       << ", " << proc.name() << "-end";
    if (!proc.is_open()) os << " T=" << std::setprecision(4) << proc.horizon_ratio();
    os << "\n" << std::setw(8) << "gamma";
    for (double a : alphas) os << std::setw(10) << std::setprecision(3) << a;
    os << "\n";
    for (double g : gammas) {
      os << std::setw(8) << std::setprecision(2) << g;
      for (double a : alphas) {
        if (auto v = table.find(g, a, proc)) {
          os << std::setw(10) << std::setprecision(4) << *v;
        } else {
          os << std::setw(10) << "-";
        }
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace qcpd
