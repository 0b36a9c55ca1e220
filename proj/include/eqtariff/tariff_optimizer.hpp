#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eqtariff/domain.hpp"
#include "eqtariff/response_model.hpp"
#include "eqtariff/synth.hpp"

namespace eqtariff {

/// Decomposition of the design objective, already weighted by group size.
struct ObjectiveTerms {
  double burden = 0.0;     // sum_n w_n ([E_n - cap]^+)^2
  double deviation = 0.0;  // alpha * sum_n w_n |p_n - lambda|^2
  std::vector<double> group_burden;
  std::vector<double> group_deviation;
  std::vector<double> group_energy_burden;  // E_n itself (unweighted)

  double total() const noexcept { return burden + deviation; }
};

struct Slacks {
  double revenue = 0.0;
  std::vector<double> peak;  // aligned with ScenarioConfig::peak_hours
  double min_price = 0.0;    // min_n,t p
  double min_headroom = 0.0; // min_n,t (cap - p)

  bool interior() const noexcept;
};

/// One row per accepted iterate (and one per inner-loop start).
struct TraceRow {
  int outer = 0;
  int inner = 0;  // 0 = starting point of this inner loop
  double mu = 0.0;
  double objective = 0.0;  // f
  double barrier = 0.0;    // F_0
  double grad_norm = 0.0;
  double step = 0.0;
  std::string direction;  // start, newton, gradient
  Slacks slacks;
};

struct BarrierState {
  double mu = 1.0;
  Eigen::VectorXd x;  // group-major prices: x[n * T + t]
  int inner_iter = 0;  // iterations of the latest inner loop
  int outer_iter = 0;
  std::vector<TraceRow> trace;
};

struct OptimizationResult {
  std::vector<PriceProfile> prices;
  std::vector<DemandProfile> predicted_dd;
  std::vector<DemandProfile> predicted_demand;
  ObjectiveTerms objective;
  Slacks slacks;
  bool converged = false;  // outer loop closed the gap M / mu < epsilon
  bool stalled = false;    // some inner loop ended on a failed line search or max_inner
  double final_mu = 0.0;
  std::size_t barrier_terms = 0;
  double kappa_all = 1.0;
  double kappa_peak = 1.0;
  std::vector<TraceRow> trace;
};

/// The equitable tariff design problem over N group price vectors.
///
/// Models are borrowed: one per group, in the order of population.groups, and
/// must outlive the problem. `wholesale` is the effective reference price
/// (a surged price in surge scenarios).
///
/// Predicted demand is anchor + dd, where the anchor is each group's average
/// demand at population.reference_price (what the models were trained
/// against). `baseline` is the group-average demand at `wholesale`; it sets
/// the revenue requirement and the peak caps. When omitted it equals the
/// anchor, which is exact whenever wholesale is the reference price.
class TariffProblem {
 public:
  TariffProblem(const Population& population, std::vector<const DemandResponseModel*> models,
                PriceProfile wholesale, ScenarioConfig config,
                std::vector<DemandProfile> baseline = {});

  std::size_t n_groups() const noexcept { return weights_.size(); }
  std::size_t horizon() const noexcept { return wholesale_.size(); }
  std::size_t n_vars() const noexcept { return n_groups() * horizon(); }
  const ScenarioConfig& config() const noexcept { return config_; }
  const PriceProfile& wholesale() const noexcept { return wholesale_; }
  double price_cap() const noexcept { return cap_; }
  double weight(std::size_t n) const { return weights_.at(n); }
  double income(std::size_t n) const { return incomes_.at(n); }
  const std::vector<double>& baseline(std::size_t n) const { return baseline_.at(n); }
  const std::vector<double>& anchor(std::size_t n) const { return anchor_.at(n); }
  /// 1 revenue term + one per peak hour + two bound terms per price.
  std::size_t barrier_terms() const noexcept;
  /// sum_n w_n D0_n' lambda: what the baseline costs at wholesale.
  double baseline_cost() const noexcept;

  Eigen::VectorXd flatten(const std::vector<PriceProfile>& prices) const;
  std::vector<PriceProfile> unflatten(const Eigen::VectorXd& x) const;
  /// lambda repeated for every group.
  Eigen::VectorXd wholesale_point() const;

  /// Model outputs at x; Jacobians only when requested.
  struct Point {
    Eigen::VectorXd x;
    std::vector<std::vector<double>> dd;  // [n][t]
    std::vector<Eigen::MatrixXd> jac;     // [n], empty unless requested
  };
  Point evaluate(const Eigen::VectorXd& x, bool with_jacobian) const;

  /// Predicted demand: anchor + dd.
  double demand(const Point& pt, std::size_t n, std::size_t t) const {
    return anchor_[n][t] + pt.dd[n][t];
  }

  ObjectiveTerms objective(const Point& pt) const;
  double slack_revenue(const Point& pt) const;
  /// Slack of the peak constraint at 0-based `hour`; ConfigError if it is not a peak hour.
  double slack_peak(const Point& pt, std::size_t hour) const;
  Slacks slacks(const Point& pt) const;

  /// mu * f - ln g_rev - sum ln g_t - sum ln p - sum ln(cap - p).
  /// DomainError when any slack is not strictly positive.
  double barrier_value(const Point& pt, double mu) const;
  /// Needs a Point evaluated with Jacobians.
  Eigen::VectorXd barrier_gradient(const Point& pt, double mu, GradientMode mode) const;
  /// Exact except for the response model's own second derivatives, which are dropped.
  Eigen::MatrixXd barrier_hessian(const Point& pt, double mu, GradientMode mode) const;

 private:
  std::vector<const DemandResponseModel*> models_;
  PriceProfile wholesale_;
  ScenarioConfig config_;
  std::vector<double> weights_;
  std::vector<double> incomes_;
  std::vector<std::vector<double>> anchor_;
  std::vector<std::vector<double>> baseline_;
  std::vector<double> peak_caps_;  // (1 - beta) sum_n w_n D0_n,t per peak hour
  double cap_ = 0.0;

  struct Gradients {
    std::vector<Eigen::VectorXd> energy;  // dE_n/dp_n per group
    Eigen::VectorXd revenue;              // d g_rev / dx
    std::vector<Eigen::VectorXd> peak;    // d g_t / dx per peak hour
  };
  Gradients constraint_gradients(const Point& pt, GradientMode mode) const;
  void require_jacobians(const Point& pt) const;
};

struct Phase1Result {
  Eigen::VectorXd x;
  double kappa_all = 1.0;   // scales every hour (revenue)
  double kappa_peak = 1.0;  // additionally scales peak hours (demand reduction)
};

/// Strictly interior start: prices lambda * kappa_all * (kappa_peak on peak hours),
/// each factor raised by 25% while its constraints lack the required margin.
/// InfeasibleError naming the constraint when a factor would exceed 10.
Phase1Result phase1_initialize(const TariffProblem& problem);

struct InnerResult {
  int iterations = 0;
  bool stalled = false;    // line search failed above rounding level
  bool hit_limit = false;  // max_inner reached
  double grad_norm = 0.0;
  double decrement = 0.0;  // Newton decrement squared / 2 at the last point
};

/// Damped Newton descent on F_0 at fixed mu from state.x, appending accepted
/// iterates to state.trace.
InnerResult inner_minimize(const TariffProblem& problem, BarrierState& state);

/// Phase 1, then inner minimization with mu growing until M / mu < epsilon.
OptimizationResult solve(const TariffProblem& problem);

}  // namespace eqtariff
