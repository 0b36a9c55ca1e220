#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqtariff {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument values (non-positive income, NaN prices, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix shape mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (bad group counts, missing inputs, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A constraint set that admits no feasible point.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// An object used before it was ready (untrained model, empty pool).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Training diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant; indicates a bug, not bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultHorizon = 24;
inline constexpr double kDaysPerYear = 365.0;

/// Hourly price vector in $/kWh. Finite and non-negative.
class PriceProfile {
 public:
  PriceProfile() = default;
  explicit PriceProfile(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }
  double operator[](std::size_t t) const { return values_[t]; }

  friend bool operator==(const PriceProfile&, const PriceProfile&) = default;

 private:
  std::vector<double> values_;
};

/// Hourly energy vector in kWh. Baseline/absolute demand must be
/// non-negative; demand changes (Signed) may be negative.
class DemandProfile {
 public:
  enum class Sign { NonNegative, Signed };

  DemandProfile() = default;
  explicit DemandProfile(std::vector<double> values, Sign sign = Sign::NonNegative);

  static DemandProfile change(std::vector<double> values) {
    return DemandProfile(std::move(values), Sign::Signed);
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }
  double operator[](std::size_t t) const { return values_[t]; }
  Sign sign() const noexcept { return sign_; }
  double total() const noexcept;

  friend bool operator==(const DemandProfile& a, const DemandProfile& b) {
    return a.values_ == b.values_;
  }

 private:
  std::vector<double> values_;
  Sign sign_ = Sign::NonNegative;
};

// ---------------------------------------------------------------------------
// Consumers and groups
// ---------------------------------------------------------------------------

/// Agent-model flexibility of one consumer: quadratic penalties on reduced
/// (c1) and shifted (c2) demand, plus hourly box bounds on both.
struct FlexParams {
  double c1 = 0.0;
  double c2 = 0.0;
  std::vector<double> shift_lo;
  std::vector<double> shift_hi;
  std::vector<double> reduce_lo;
  std::vector<double> reduce_hi;

  /// Throws DomainError / ShapeError if the invariants do not hold for horizon T.
  void validate(std::size_t horizon) const;

  /// Bounds proportional to the baseline: shift in [-gs*D0, gs*D0],
  /// reduce in [-gr*D0, reduce_up*D0].
  static FlexParams proportional(const DemandProfile& baseline, double c1, double c2,
                                 double gamma_shift, double gamma_reduce,
                                 double reduce_up = 0.0);

  friend bool operator==(const FlexParams&, const FlexParams&) = default;
};

class Consumer {
 public:
  Consumer(std::size_t id, double annual_income, DemandProfile baseline, FlexParams flex);

  std::size_t id() const noexcept { return id_; }
  double annual_income() const noexcept { return annual_income_; }
  double daily_income() const noexcept { return annual_income_ / kDaysPerYear; }
  const DemandProfile& baseline() const noexcept { return baseline_; }
  const FlexParams& flex() const noexcept { return flex_; }
  std::size_t horizon() const noexcept { return baseline_.size(); }

  friend bool operator==(const Consumer&, const Consumer&) = default;

 private:
  std::size_t id_;
  double annual_income_;
  DemandProfile baseline_;
  FlexParams flex_;
};

/// A burden group. All members are priced with one shared tariff; the
/// response model for group `id` is kept alongside, indexed by position.
struct Group {
  std::size_t id = 0;                // 1-based
  std::vector<std::size_t> members;  // consumer ids
  DemandProfile avg_baseline;
  double avg_daily_income = 0.0;

  double size() const noexcept { return static_cast<double>(members.size()); }
};

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

enum class GradientMode { FullJacobian, PaperDiagonal };

std::string to_string(GradientMode mode);
GradientMode gradient_mode_from_string(const std::string& name);

struct SurgeSpec {
  std::vector<std::size_t> hours;  // 0-based
  double multiplier = 1.0;
};

struct BarrierSchedule {
  double mu0 = 1.0;
  double mu_growth = 10.0;
  double epsilon = 1e-6;
  int max_outer = 12;
  int max_inner = 500;
  // Phase-1 margin as a fraction of each constraint's natural scale.
  double slack_margin = 1e-3;
  // Upper price bound as a multiple of max(wholesale).
  double price_cap_factor = 5.0;
};

struct ScenarioConfig {
  double energy_burden_cap = 0.06;
  double alpha = 1.0;
  double beta = 0.0;
  std::vector<std::size_t> peak_hours;  // 0-based; empty disables the DR constraint
  // kWh taken off each peak cap, aligned with peak_hours (empty = none).
  std::vector<double> peak_margin;
  double om_cost = 0.0;  // negative values act as a subsidy
  std::optional<SurgeSpec> surge;
  BarrierSchedule barrier;
  GradientMode gradient_mode = GradientMode::FullJacobian;

  void validate(std::size_t horizon) const;
  bool dr_enabled() const noexcept { return !peak_hours.empty(); }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Bill divided by income over the same period.
double energy_burden(std::span<const double> demand, std::span<const double> price,
                     double daily_income);
double energy_burden(const DemandProfile& demand, const PriceProfile& price,
                     double daily_income);

/// max(0, x).
inline double hinge(double x) noexcept { return x > 0.0 ? x : 0.0; }

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace eqtariff
