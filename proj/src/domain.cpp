#include "eqtariff/domain.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace eqtariff {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (!std::isfinite(values[t])) {
      std::ostringstream os;
      os << what << ": non-finite value at hour " << (t + 1);
      throw DomainError(os.str());
    }
  }
}

void require_length(std::span<const double> values, std::size_t horizon, const char* what) {
  if (values.size() != horizon) {
    std::ostringstream os;
    os << what << ": expected length " << horizon << ", got " << values.size();
    throw ShapeError(os.str());
  }
}

}  // namespace

PriceProfile::PriceProfile(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ShapeError("price profile: empty");
  require_finite(values_, "price profile");
  for (std::size_t t = 0; t < values_.size(); ++t) {
    if (values_[t] < 0.0) {
      throw DomainError("price profile: negative price at hour " + std::to_string(t + 1));
    }
  }
}

DemandProfile::DemandProfile(std::vector<double> values, Sign sign)
    : values_(std::move(values)), sign_(sign) {
  if (values_.empty()) throw ShapeError("demand profile: empty");
  require_finite(values_, "demand profile");
  if (sign_ == Sign::NonNegative) {
    for (std::size_t t = 0; t < values_.size(); ++t) {
      if (values_[t] < 0.0) {
        throw DomainError("demand profile: negative demand at hour " + std::to_string(t + 1));
      }
    }
  }
}

double DemandProfile::total() const noexcept {
  return std::accumulate(values_.begin(), values_.end(), 0.0);
}

void FlexParams::validate(std::size_t horizon) const {
  if (!(c1 > 0.0) || !(c2 > 0.0) || !std::isfinite(c1) || !std::isfinite(c2)) {
    throw DomainError("flex params: c1 and c2 must be positive and finite");
  }
  require_length(shift_lo, horizon, "shift_lo");
  require_length(shift_hi, horizon, "shift_hi");
  require_length(reduce_lo, horizon, "reduce_lo");
  require_length(reduce_hi, horizon, "reduce_hi");
  require_finite(shift_lo, "shift_lo");
  require_finite(shift_hi, "shift_hi");
  require_finite(reduce_lo, "reduce_lo");
  require_finite(reduce_hi, "reduce_hi");
  for (std::size_t t = 0; t < horizon; ++t) {
    if (shift_lo[t] > 0.0 || shift_hi[t] < 0.0) {
      throw DomainError("flex params: shift bounds must straddle zero at hour " +
                        std::to_string(t + 1));
    }
    if (reduce_lo[t] > 0.0 || reduce_hi[t] < 0.0) {
      throw DomainError("flex params: reduce bounds must straddle zero at hour " +
                        std::to_string(t + 1));
    }
  }
}

FlexParams FlexParams::proportional(const DemandProfile& baseline, double c1, double c2,
                                    double gamma_shift, double gamma_reduce, double reduce_up) {
  FlexParams p;
  p.c1 = c1;
  p.c2 = c2;
  const std::size_t n = baseline.size();
  p.shift_lo.resize(n);
  p.shift_hi.resize(n);
  p.reduce_lo.resize(n);
  p.reduce_hi.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double d0 = baseline[t];
    p.shift_lo[t] = -gamma_shift * d0;
    p.shift_hi[t] = gamma_shift * d0;
    p.reduce_lo[t] = -gamma_reduce * d0;
    p.reduce_hi[t] = reduce_up * d0;
  }
  return p;
}

Consumer::Consumer(std::size_t id, double annual_income, DemandProfile baseline, FlexParams flex)
    : id_(id), annual_income_(annual_income), baseline_(std::move(baseline)), flex_(std::move(flex)) {
  if (!(annual_income_ > 0.0) || !std::isfinite(annual_income_)) {
    throw DomainError("consumer " + std::to_string(id_) + ": income must be positive");
  }
  if (baseline_.sign() != DemandProfile::Sign::NonNegative) {
    throw DomainError("consumer " + std::to_string(id_) + ": baseline must be non-negative");
  }
  flex_.validate(baseline_.size());
}

std::string to_string(GradientMode mode) {
  return mode == GradientMode::FullJacobian ? "full_jacobian" : "paper_diagonal";
}

GradientMode gradient_mode_from_string(const std::string& name) {
  if (name == "full_jacobian") return GradientMode::FullJacobian;
  if (name == "paper_diagonal") return GradientMode::PaperDiagonal;
  throw ConfigError("unknown gradient mode '" + name + "'");
}

void ScenarioConfig::validate(std::size_t horizon) const {
  if (!(energy_burden_cap > 0.0)) throw ConfigError("energy burden cap must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must lie in [0, 1)");
  if (!std::isfinite(om_cost)) throw ConfigError("O&M cost must be finite");
  for (auto h : peak_hours) {
    if (h >= horizon) throw ConfigError("peak hour " + std::to_string(h + 1) + " outside horizon");
  }
  if (!peak_margin.empty() && peak_margin.size() != peak_hours.size()) {
    throw ConfigError("peak margins must align with peak hours");
  }
  for (double m : peak_margin) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("peak margins must be finite and non-negative");
  }
  if (surge) {
    for (auto h : surge->hours) {
      if (h >= horizon) throw ConfigError("surge hour " + std::to_string(h + 1) + " outside horizon");
    }
    if (!(surge->multiplier > 0.0)) throw ConfigError("surge multiplier must be positive");
  }
  if (!(barrier.epsilon > 0.0)) throw ConfigError("barrier epsilon must be positive");
  if (!(barrier.mu_growth > 1.0)) throw ConfigError("barrier mu_growth must exceed 1");
  if (!(barrier.mu0 > 0.0)) throw ConfigError("barrier mu0 must be positive");
  if (barrier.max_outer < 1 || barrier.max_inner < 0) throw ConfigError("barrier iteration limits invalid");
  if (!(barrier.price_cap_factor > 1.0)) throw ConfigError("price cap factor must exceed 1");
  if (!(barrier.slack_margin > 0.0)) throw ConfigError("slack margin must be positive");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double energy_burden(std::span<const double> demand, std::span<const double> price,
                     double daily_income) {
  if (!(daily_income > 0.0)) throw DomainError("energy burden: income must be positive");
  if (demand.size() != price.size()) throw ShapeError("energy burden: profile length mismatch");
  return dot(demand, price) / daily_income;
}

double energy_burden(const DemandProfile& demand, const PriceProfile& price, double daily_income) {
  return energy_burden(demand.values(), price.values(), daily_income);
}

}  // namespace eqtariff
