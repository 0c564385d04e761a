#pragma once

#include "qcpd/detector.hpp"
#include "qcpd/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qcpd {

inline constexpr const char* kCritTableSchema = "qcpd-critvals-1";
inline constexpr int kDefaultGridN = 10'000;
inline constexpr int kDefaultCritReps = 50'000;

/// Open-end monitors forever (limit functional on (0,1)); closed-end monitors
/// T_m ~ T m observations (functional on (0, T/(1+T))).
class Procedure {
 public:
  enum class Kind { kOpenEnd, kClosedEnd };

  static Procedure open_end() { return Procedure(Kind::kOpenEnd, 0.0); }
  static Procedure closed_end(double horizon_ratio);

  Kind kind() const noexcept { return kind_; }
  bool is_open() const noexcept { return kind_ == Kind::kOpenEnd; }
  /// T; only meaningful for closed-end.
  double horizon_ratio() const noexcept { return horizon_ratio_; }
  /// Right end of the time interval: 1 or T/(1+T).
  double upper() const noexcept;
  /// "open" | "closed".
  std::string name() const { return is_open() ? "open" : "closed"; }

  bool same_as(const Procedure& other, double ratio_tol = 1e-9) const noexcept;

 private:
  Procedure(Kind kind, double ratio) : kind_(kind), horizon_ratio_(ratio) {}
  Kind kind_;
  double horizon_ratio_;
};

/// Draws sup_{0<t<=upper} ||W(t)||_inf / t^gamma for a p-dimensional Wiener
/// process on the grid t_j = j upper / grid_n, for several gammas and
/// several uppers at once.
///
/// Coordinate c of replication r is driven by its own substream (seed, r, c),
/// so:
///  * sampling the same (seed, r) with different uppers rescales one
///    underlying set of increments (paired across procedures);
///  * raising p keeps the first coordinates and adds new ones.
class SupSampler {
 public:
  SupSampler(int p, std::vector<double> gammas, std::vector<double> uppers, int grid_n);

  int p() const noexcept { return p_; }
  int grid_n() const noexcept { return grid_n_; }
  const std::vector<double>& gammas() const noexcept { return gammas_; }
  const std::vector<double>& uppers() const noexcept { return uppers_; }

  /// out[u * gammas.size() + g] = functional for uppers[u], gammas[g].
  void sample(std::uint64_t seed, std::uint64_t replication, std::span<double> out) const;
  std::vector<double> sample(std::uint64_t seed, std::uint64_t replication) const;

 private:
  int p_;
  std::vector<double> gammas_;
  std::vector<double> uppers_;
  int grid_n_;
  // weights_[(u * G + g) * grid_n + j] = sqrt(upper_u) * t_j^{-gamma_g}, with
  // t_j on the upper_u grid; applied to the unit-variance random walk.
  std::vector<double> weights_;
};

/// Single draw of the sup functional using the given generator.
double simulate_sup(int p, GammaParam gamma, double upper, int grid_n, Rng& rng);

struct CritEntry {
  double gamma = 0.0;
  double alpha = 0.0;
  Procedure procedure = Procedure::open_end();
  double value = 0.0;
};

struct CriticalValueTable {
  int p = 0;
  int reps = 0;
  int grid_n = 0;
  std::uint64_t seed = 0;
  std::vector<CritEntry> entries;

  /// Throws MissingCriticalValue when absent.
  double lookup(double gamma, double alpha, const Procedure& proc) const;
  std::optional<double> find(double gamma, double alpha, const Procedure& proc) const;

  bool operator==(const CriticalValueTable& other) const;
};

struct TabulateOptions {
  int p = 2;
  std::vector<double> gammas{0.0, 0.15, 0.25, 0.35, 0.45, 0.49};
  std::vector<double> alphas{0.01, 0.025, 0.05, 0.10, 0.25};
  std::vector<Procedure> procedures{Procedure::open_end()};
  int reps = kDefaultCritReps;
  int grid_n = kDefaultGridN;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// Upper order statistic at rank ceil(n (1 - alpha)) of `sample` (sorted in
/// place).
double upper_quantile(std::vector<double>& sample, double alpha);

/// Monte-Carlo table of c_alpha(gamma). All alphas of one (gamma, procedure)
/// share one sample, and all procedures share the same replications.
CriticalValueTable tabulate(const TabulateOptions& opts);

/// One cell; equals the matching cell of tabulate() with the same seed.
double critical_value(int p, GammaParam gamma, double alpha, const Procedure& proc, int reps,
                      int grid_n, std::uint64_t seed, unsigned threads = 0);

void save_table(const CriticalValueTable& table, const std::filesystem::path& path);
CriticalValueTable load_table(const std::filesystem::path& path);

std::string table_to_json(const CriticalValueTable& table);
CriticalValueTable table_from_json(const std::string& text);

/// Aligned gamma-by-alpha text layout, one block per procedure.
std::string format_table(const CriticalValueTable& table);

}  // namespace qcpd
