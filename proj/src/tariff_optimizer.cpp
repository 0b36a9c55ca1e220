#include "eqtariff/tariff_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eqtariff {

bool Slacks::interior() const noexcept {
  if (!(revenue > 0.0) || !(min_price > 0.0) || !(min_headroom > 0.0)) return false;
  return std::all_of(peak.begin(), peak.end(), [](double g) { return g > 0.0; });
}

TariffProblem::TariffProblem(const Population& population,
                             std::vector<const DemandResponseModel*> models, PriceProfile wholesale,
                             ScenarioConfig config, std::vector<DemandProfile> baseline)
    : models_(std::move(models)), wholesale_(std::move(wholesale)), config_(std::move(config)) {
  const std::size_t horizon = wholesale_.size();
  if (population.groups.empty()) throw ConfigError("tariff problem: population has no groups");
  if (population.horizon() != horizon) {
    throw ShapeError("tariff problem: wholesale price has " + std::to_string(horizon) +
                     " hours, population has " + std::to_string(population.horizon()));
  }
  if (models_.size() != population.groups.size()) {
    throw ConfigError("tariff problem: " + std::to_string(models_.size()) + " models for " +
                      std::to_string(population.groups.size()) + " groups");
  }
  for (std::size_t n = 0; n < models_.size(); ++n) {
    if (models_[n] == nullptr) throw StateError("tariff problem: no model for group " + std::to_string(n + 1));
  }
  config_.validate(horizon);
  const double max_price = *std::max_element(wholesale_.vec().begin(), wholesale_.vec().end());
  if (!(max_price > 0.0)) throw ConfigError("tariff problem: wholesale price is zero everywhere");
  cap_ = config_.barrier.price_cap_factor * max_price;

  for (const auto& g : population.groups) {
    weights_.push_back(g.size());
    incomes_.push_back(g.avg_daily_income);
    anchor_.push_back(g.avg_baseline.vec());
  }
  if (baseline.empty()) {
    baseline_ = anchor_;
  } else {
    if (baseline.size() != n_groups()) {
      throw ShapeError("tariff problem: " + std::to_string(baseline.size()) +
                       " baseline profiles for " + std::to_string(n_groups()) + " groups");
    }
    for (auto& b : baseline) {
      if (b.size() != horizon) throw ShapeError("tariff problem: baseline profile length mismatch");
      baseline_.push_back(b.vec());
    }
  }
  for (std::size_t h : config_.peak_hours) {
    double total = 0.0;
    for (std::size_t n = 0; n < n_groups(); ++n) total += weights_[n] * baseline_[n][h];
    const double margin = config_.peak_margin.empty() ? 0.0 : config_.peak_margin[peak_caps_.size()];
    peak_caps_.push_back((1.0 - config_.beta) * total - margin);
  }
}

std::size_t TariffProblem::barrier_terms() const noexcept {
  return 1 + config_.peak_hours.size() + 2 * n_vars();
}

double TariffProblem::baseline_cost() const noexcept {
  double total = 0.0;
  for (std::size_t n = 0; n < n_groups(); ++n) {
    total += weights_[n] * dot(baseline_[n], wholesale_.values());
  }
  return total;
}

Eigen::VectorXd TariffProblem::flatten(const std::vector<PriceProfile>& prices) const {
  if (prices.size() != n_groups()) throw ShapeError("tariff problem: one price vector per group required");
  Eigen::VectorXd x(static_cast<Eigen::Index>(n_vars()));
  for (std::size_t n = 0; n < n_groups(); ++n) {
    if (prices[n].size() != horizon()) throw ShapeError("tariff problem: price vector length differs from horizon");
    for (std::size_t t = 0; t < horizon(); ++t) x[static_cast<Eigen::Index>(n * horizon() + t)] = prices[n][t];
  }
  return x;
}

std::vector<PriceProfile> TariffProblem::unflatten(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != n_vars()) throw ShapeError("tariff problem: wrong decision vector length");
  std::vector<PriceProfile> out;
  for (std::size_t n = 0; n < n_groups(); ++n) {
    const double* p = x.data() + n * horizon();
    out.emplace_back(std::vector<double>(p, p + horizon()));
  }
  return out;
}

Eigen::VectorXd TariffProblem::wholesale_point() const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(n_vars()));
  for (std::size_t n = 0; n < n_groups(); ++n) {
    for (std::size_t t = 0; t < horizon(); ++t) x[static_cast<Eigen::Index>(n * horizon() + t)] = wholesale_[t];
  }
  return x;
}

TariffProblem::Point TariffProblem::evaluate(const Eigen::VectorXd& x, bool with_jacobian) const {
  if (static_cast<std::size_t>(x.size()) != n_vars()) throw ShapeError("tariff problem: wrong decision vector length");
  Point pt;
  pt.x = x;
  pt.dd.resize(n_groups());
  if (with_jacobian) pt.jac.resize(n_groups());
  for (std::size_t n = 0; n < n_groups(); ++n) {
    std::span<const double> p(x.data() + n * horizon(), horizon());
    Response r = models_[n]->respond(p, with_jacobian);
    if (r.dd.size() != horizon()) throw ShapeError("tariff problem: model output length differs from horizon");
    pt.dd[n] = std::move(r.dd);
    if (with_jacobian) pt.jac[n] = std::move(r.jacobian);
  }
  return pt;
}

ObjectiveTerms TariffProblem::objective(const Point& pt) const {
  ObjectiveTerms terms;
  const std::size_t horizon = this->horizon();
  for (std::size_t n = 0; n < n_groups(); ++n) {
    double bill = 0.0;
    double dev = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      const double p = pt.x[static_cast<Eigen::Index>(n * horizon + t)];
      bill += demand(pt, n, t) * p;
      dev += (p - wholesale_[t]) * (p - wholesale_[t]);
    }
    const double e = bill / incomes_[n];
    const double h = hinge(e - config_.energy_burden_cap);
    terms.group_energy_burden.push_back(e);
    terms.group_burden.push_back(weights_[n] * h * h);
    terms.group_deviation.push_back(config_.alpha * weights_[n] * dev);
    terms.burden += terms.group_burden.back();
    terms.deviation += terms.group_deviation.back();
  }
  return terms;
}

double TariffProblem::slack_revenue(const Point& pt) const {
  double revenue = 0.0;
  for (std::size_t n = 0; n < n_groups(); ++n) {
    double bill = 0.0;
    for (std::size_t t = 0; t < horizon(); ++t) {
      bill += demand(pt, n, t) * pt.x[static_cast<Eigen::Index>(n * horizon() + t)];
    }
    revenue += weights_[n] * bill;
  }
  return revenue - config_.om_cost - baseline_cost();
}

double TariffProblem::slack_peak(const Point& pt, std::size_t hour) const {
  const auto& hours = config_.peak_hours;
  const auto it = std::find(hours.begin(), hours.end(), hour);
  if (it == hours.end()) {
    throw ConfigError("hour " + std::to_string(hour + 1) + " is not a peak hour of this scenario");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < n_groups(); ++n) total += weights_[n] * demand(pt, n, hour);
  return peak_caps_[static_cast<std::size_t>(it - hours.begin())] - total;
}

Slacks TariffProblem::slacks(const Point& pt) const {
  Slacks s;
  s.revenue = slack_revenue(pt);
  for (std::size_t h : config_.peak_hours) s.peak.push_back(slack_peak(pt, h));
  s.min_price = pt.x.minCoeff();
  s.min_headroom = cap_ - pt.x.maxCoeff();
  return s;
}

double TariffProblem::barrier_value(const Point& pt, double mu) const {
  const Slacks s = slacks(pt);
  if (!s.interior()) throw DomainError("barrier evaluated at a point with a non-positive slack");
  double value = mu * objective(pt).total() - std::log(s.revenue);
  for (double g : s.peak) value -= std::log(g);
  for (Eigen::Index i = 0; i < pt.x.size(); ++i) {
    value -= std::log(pt.x[i]) + std::log(cap_ - pt.x[i]);
  }
  return value;
}

void TariffProblem::require_jacobians(const Point& pt) const {
  if (pt.jac.size() != n_groups()) throw StateError("tariff problem: point was evaluated without Jacobians");
}

TariffProblem::Gradients TariffProblem::constraint_gradients(const Point& pt,
                                                             GradientMode mode) const {
  require_jacobians(pt);
  const auto horizon = static_cast<Eigen::Index>(this->horizon());
  Gradients g;
  g.revenue = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_vars()));
  g.peak.assign(config_.peak_hours.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_vars())));
  for (std::size_t n = 0; n < n_groups(); ++n) {
    const Eigen::Index off = static_cast<Eigen::Index>(n) * horizon;
    const auto p = pt.x.segment(off, horizon);
    const Eigen::MatrixXd& jac = pt.jac[n];
    Eigen::VectorXd bill_grad(horizon);
    for (Eigen::Index t = 0; t < horizon; ++t) bill_grad[t] = demand(pt, n, static_cast<std::size_t>(t));
    if (mode == GradientMode::FullJacobian) {
      bill_grad += jac.transpose() * p;
    } else {
      bill_grad += jac.diagonal().cwiseProduct(p);
    }
    g.energy.push_back(bill_grad / incomes_[n]);
    g.revenue.segment(off, horizon) = weights_[n] * bill_grad;
    for (std::size_t k = 0; k < config_.peak_hours.size(); ++k) {
      const auto h = static_cast<Eigen::Index>(config_.peak_hours[k]);
      if (mode == GradientMode::FullJacobian) {
        g.peak[k].segment(off, horizon) = -weights_[n] * jac.row(h).transpose();
      } else {
        g.peak[k][off + h] = -weights_[n] * jac(h, h);
      }
    }
  }
  return g;
}

Eigen::VectorXd TariffProblem::barrier_gradient(const Point& pt, double mu, GradientMode mode) const {
  const Slacks s = slacks(pt);
  if (!s.interior()) throw DomainError("barrier gradient requested at a point with a non-positive slack");
  const Gradients cg = constraint_gradients(pt, mode);
  const ObjectiveTerms terms = objective(pt);
  const auto horizon = static_cast<Eigen::Index>(this->horizon());
  Eigen::VectorXd grad(static_cast<Eigen::Index>(n_vars()));
  for (std::size_t n = 0; n < n_groups(); ++n) {
    const Eigen::Index off = static_cast<Eigen::Index>(n) * horizon;
    const double h = hinge(terms.group_energy_burden[n] - config_.energy_burden_cap);
    for (Eigen::Index t = 0; t < horizon; ++t) {
      const double dev = pt.x[off + t] - wholesale_[static_cast<std::size_t>(t)];
      grad[off + t] = mu * weights_[n] * (2.0 * h * cg.energy[n][t] + 2.0 * config_.alpha * dev);
    }
  }
  grad -= cg.revenue / s.revenue;
  for (std::size_t k = 0; k < cg.peak.size(); ++k) grad -= cg.peak[k] / s.peak[k];
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    grad[i] += -1.0 / pt.x[i] + 1.0 / (cap_ - pt.x[i]);
  }
  return grad;
}

Eigen::MatrixXd TariffProblem::barrier_hessian(const Point& pt, double mu, GradientMode mode) const {
  const Slacks s = slacks(pt);
  if (!s.interior()) throw DomainError("barrier Hessian requested at a point with a non-positive slack");
  const Gradients cg = constraint_gradients(pt, mode);
  const ObjectiveTerms terms = objective(pt);
  const auto horizon = static_cast<Eigen::Index>(this->horizon());
  const auto nv = static_cast<Eigen::Index>(n_vars());
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(nv, nv);
  for (std::size_t n = 0; n < n_groups(); ++n) {
    const Eigen::Index off = static_cast<Eigen::Index>(n) * horizon;
    // Second derivative of the bill D'p, dropping the model's own curvature.
    Eigen::MatrixXd bill_hess;
    if (mode == GradientMode::FullJacobian) {
      bill_hess = pt.jac[n] + pt.jac[n].transpose();
    } else {
      bill_hess = Eigen::MatrixXd(2.0 * pt.jac[n].diagonal().asDiagonal());
    }
    auto block = hess.block(off, off, horizon, horizon);
    block.diagonal().array() += mu * 2.0 * config_.alpha * weights_[n];
    const double h = hinge(terms.group_energy_burden[n] - config_.energy_burden_cap);
    if (h > 0.0) {
      block += mu * 2.0 * weights_[n] *
               (cg.energy[n] * cg.energy[n].transpose() + h * bill_hess / incomes_[n]);
    }
    block -= weights_[n] * bill_hess / s.revenue;
  }
  hess += cg.revenue * cg.revenue.transpose() / (s.revenue * s.revenue);
  for (std::size_t k = 0; k < cg.peak.size(); ++k) {
    hess += cg.peak[k] * cg.peak[k].transpose() / (s.peak[k] * s.peak[k]);
  }
  for (Eigen::Index i = 0; i < nv; ++i) {
    const double lo = pt.x[i];
    const double hi = cap_ - pt.x[i];
    hess(i, i) += 1.0 / (lo * lo) + 1.0 / (hi * hi);
  }
  return hess;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kKappaGrowth = 1.25;
constexpr double kKappaMax = 10.0;
constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;

Eigen::VectorXd scaled_start(const TariffProblem& problem, double kappa_all, double kappa_peak) {
  const auto& cfg = problem.config();
  const double lo = cfg.barrier.slack_margin * problem.price_cap();
  const double hi = (1.0 - cfg.barrier.slack_margin) * problem.price_cap();
  const std::size_t horizon = problem.horizon();
  std::vector<bool> is_peak(horizon, false);
  for (std::size_t h : cfg.peak_hours) is_peak[h] = true;
  Eigen::VectorXd x(static_cast<Eigen::Index>(problem.n_vars()));
  for (std::size_t n = 0; n < problem.n_groups(); ++n) {
    for (std::size_t t = 0; t < horizon; ++t) {
      const double p = problem.wholesale()[t] * kappa_all * (is_peak[t] ? kappa_peak : 1.0);
      x[static_cast<Eigen::Index>(n * horizon + t)] = std::clamp(p, lo, hi);
    }
  }
  return x;
}

}  // namespace

Phase1Result phase1_initialize(const TariffProblem& problem) {
  const auto& cfg = problem.config();
  const double margin = cfg.barrier.slack_margin;
  const double revenue_scale = std::max(problem.baseline_cost() + std::abs(cfg.om_cost), 1e-12);
  std::vector<double> peak_scale;
  for (std::size_t h : cfg.peak_hours) {
    double total = 0.0;
    for (std::size_t n = 0; n < problem.n_groups(); ++n) total += problem.weight(n) * problem.baseline(n)[h];
    peak_scale.push_back(std::max(total, 1e-12));
  }

  Phase1Result out;
  for (;;) {
    out.x = scaled_start(problem, out.kappa_all, out.kappa_peak);
    const Slacks s = problem.slacks(problem.evaluate(out.x, false));
    const bool revenue_ok = s.revenue >= margin * revenue_scale;
    std::size_t short_hour = cfg.peak_hours.size();
    for (std::size_t k = 0; k < s.peak.size(); ++k) {
      if (s.peak[k] < margin * peak_scale[k]) {
        short_hour = k;
        break;
      }
    }
    const bool peak_ok = short_hour == cfg.peak_hours.size();
    if (revenue_ok && peak_ok) return out;
    if (!revenue_ok) out.kappa_all *= kKappaGrowth;
    if (!peak_ok) out.kappa_peak *= kKappaGrowth;
    if (out.kappa_all > kKappaMax) {
      throw InfeasibleError(
          "revenue adequacy cannot be reached: raising all prices up to 10x wholesale leaves the "
          "revenue slack at " + std::to_string(s.revenue));
    }
    if (out.kappa_peak > kKappaMax) {
      throw InfeasibleError("peak demand reduction at hour " +
                            std::to_string(cfg.peak_hours[short_hour] + 1) +
                            " cannot be reached: raising peak prices up to 10x leaves the slack at " +
                            std::to_string(s.peak[short_hour]));
    }
  }
}

namespace {

TraceRow make_row(const TariffProblem& problem, const TariffProblem::Point& pt,
                  const BarrierState& state, int inner, double barrier, double grad_norm,
                  double step, const char* direction) {
  TraceRow row;
  row.outer = state.outer_iter;
  row.inner = inner;
  row.mu = state.mu;
  row.objective = problem.objective(pt).total();
  row.barrier = barrier;
  row.grad_norm = grad_norm;
  row.step = step;
  row.direction = direction;
  row.slacks = problem.slacks(pt);
  return row;
}

/// Solves (H + tau I) dx = -g with tau grown until the factorization succeeds.
bool damped_newton(const Eigen::MatrixXd& hess, const Eigen::VectorXd& grad, Eigen::VectorXd& dx) {
  const double scale = std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  double tau = 0.0;
  const Eigen::Index n = hess.rows();
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(hess + tau * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      dx = llt.solve(-grad);
      if (dx.allFinite() && grad.dot(dx) < 0.0) return true;
    }
    tau = tau == 0.0 ? 1e-12 * scale : tau * 100.0;
  }
  return false;
}

}  // namespace

InnerResult inner_minimize(const TariffProblem& problem, BarrierState& state) {
  const auto& sched = problem.config().barrier;
  const GradientMode mode = problem.config().gradient_mode;
  InnerResult res;
  auto pt = problem.evaluate(state.x, true);
  double value = problem.barrier_value(pt, state.mu);
  Eigen::VectorXd grad = problem.barrier_gradient(pt, state.mu, mode);
  state.inner_iter = 0;
  state.trace.push_back(make_row(problem, pt, state, 0, value, grad.norm(), 0.0, "start"));

  // Backtracking from step 1: Armijo decrease with every slack strictly positive.
  TariffProblem::Point trial;
  double trial_value = 0.0;
  double step = 0.0;
  auto line_search = [&](const Eigen::VectorXd& dx) {
    const double decrease = -grad.dot(dx);
    step = 1.0;
    for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
      // Steps whose predicted gain is below the rounding of F_0 cannot be judged.
      if (step * decrease <= 1e-13 * std::max(1.0, std::abs(value))) return false;
      const Eigen::VectorXd x_new = state.x + step * dx;
      if (x_new.minCoeff() <= 0.0 || x_new.maxCoeff() >= problem.price_cap()) continue;
      trial = problem.evaluate(x_new, false);
      if (!problem.slacks(trial).interior()) continue;
      trial_value = problem.barrier_value(trial, state.mu);
      if (trial_value <= value - kArmijo * step * decrease) return true;
    }
    return false;
  };

  for (int it = 1; it <= sched.max_inner; ++it) {
    res.grad_norm = grad.norm();
    if (res.grad_norm <= sched.epsilon) return res;

    Eigen::VectorXd dx;
    const bool have_newton = damped_newton(problem.barrier_hessian(pt, state.mu, mode), grad, dx);
    const double decrease = have_newton ? -grad.dot(dx) : res.grad_norm * res.grad_norm;
    res.decrement = 0.5 * decrease;
    if (have_newton && res.decrement <= sched.epsilon) return res;

    const char* direction = "newton";
    bool accepted = have_newton && line_search(dx);
    if (!accepted) {
      // The response models are only piecewise smooth; across a kink the
      // Newton model can be useless while plain descent still makes progress.
      direction = "gradient";
      accepted = line_search(-grad * (0.1 * problem.price_cap() / res.grad_norm));
    }
    if (!accepted) {
      // Below this the predicted decrease is lost in the rounding of F_0 itself.
      res.stalled = decrease > 1e-12 * std::max(1.0, std::abs(value));
      return res;
    }
    state.x = trial.x;
    pt = problem.evaluate(state.x, true);
    value = trial_value;
    grad = problem.barrier_gradient(pt, state.mu, mode);
    state.inner_iter = it;
    res.iterations = it;
    state.trace.push_back(make_row(problem, pt, state, it, value, grad.norm(), step, direction));
  }
  res.grad_norm = grad.norm();
  res.hit_limit = true;
  return res;
}

OptimizationResult solve(const TariffProblem& problem) {
  const auto& sched = problem.config().barrier;
  const Phase1Result start = phase1_initialize(problem);

  BarrierState state;
  state.x = start.x;
  state.mu = sched.mu0;
  OptimizationResult out;
  out.kappa_all = start.kappa_all;
  out.kappa_peak = start.kappa_peak;
  out.barrier_terms = problem.barrier_terms();

  bool gap_closed = false;
  for (int outer = 1; outer <= sched.max_outer; ++outer) {
    state.outer_iter = outer;
    const InnerResult inner = inner_minimize(problem, state);
    out.stalled = out.stalled || inner.stalled || inner.hit_limit;
    if (static_cast<double>(out.barrier_terms) / state.mu < sched.epsilon) {
      gap_closed = true;
      break;
    }
    state.mu *= sched.mu_growth;
  }

  const auto pt = problem.evaluate(state.x, false);
  out.prices = problem.unflatten(state.x);
  for (std::size_t n = 0; n < problem.n_groups(); ++n) {
    out.predicted_dd.push_back(DemandProfile::change(pt.dd[n]));
    std::vector<double> d(problem.horizon());
    for (std::size_t t = 0; t < problem.horizon(); ++t) d[t] = problem.demand(pt, n, t);
    out.predicted_demand.push_back(DemandProfile::change(std::move(d)));
  }
  out.objective = problem.objective(pt);
  out.slacks = problem.slacks(pt);
  out.converged = gap_closed && out.slacks.interior();
  out.final_mu = state.mu;
  out.trace = std::move(state.trace);
  return out;
}

}  // namespace eqtariff
