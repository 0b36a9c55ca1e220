#include "eqtariff/agent_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eqtariff {

namespace {

constexpr int kMaxBisection = 200;
constexpr double kBalanceTol = 1e-10;

void check_inputs(const Consumer& consumer, const PriceProfile& price) {
  if (price.size() != consumer.horizon()) {
    throw ShapeError("agent model: price length " + std::to_string(price.size()) +
                     " does not match horizon " + std::to_string(consumer.horizon()));
  }
}

AgentSolution assemble(const Consumer& consumer, const PriceProfile& price,
                       std::vector<double> d_r, std::vector<double> d_s, double nu) {
  const auto& d0 = consumer.baseline();
  std::vector<double> demand(d0.size());
  for (std::size_t t = 0; t < demand.size(); ++t) {
    demand[t] = d0[t] + d_r[t] + d_s[t];
  }
  AgentSolution s;
  s.objective = agent_objective(consumer, price, d_r, d_s);
  s.d_r = std::move(d_r);
  s.d_s = std::move(d_s);
  // Non-negative whenever the bounds are proportional to the baseline with
  // gamma_shift + gamma_reduce <= 1; arbitrary bounds may drive it below zero.
  s.demand = DemandProfile::change(std::move(demand));
  s.bill = dot(price.values(), s.demand.values());
  s.nu = nu;
  return s;
}

}  // namespace

double agent_objective(const Consumer& consumer, const PriceProfile& price,
                       std::span<const double> d_r, std::span<const double> d_s) {
  const auto& f = consumer.flex();
  const auto& d0 = consumer.baseline();
  double obj = 0.0;
  for (std::size_t t = 0; t < price.size(); ++t) {
    obj += price[t] * (d0[t] + d_r[t] + d_s[t]) + f.c1 * d_r[t] * d_r[t] +
           f.c2 * d_s[t] * d_s[t];
  }
  return obj;
}

AgentSolution solve_response(const Consumer& consumer, const PriceProfile& price) {
  check_inputs(consumer, price);
  const auto& f = consumer.flex();
  const std::size_t horizon = price.size();

  double sum_lo = 0.0;
  double sum_hi = 0.0;
  double width = 0.0;
  double bound = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    sum_lo += f.shift_lo[t];
    sum_hi += f.shift_hi[t];
    width += f.shift_hi[t] - f.shift_lo[t];
    bound = std::max({bound, std::abs(f.shift_lo[t]), std::abs(f.shift_hi[t])});
  }
  if (sum_lo > 0.0 || sum_hi < 0.0) {
    throw InfeasibleError("agent model: shift bounds of consumer " +
                          std::to_string(consumer.id()) + " cannot balance to zero");
  }

  std::vector<double> d_r(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    d_r[t] = std::clamp(-price[t] / (2.0 * f.c1), f.reduce_lo[t], f.reduce_hi[t]);
  }

  auto unclipped = [&](std::size_t t, double nu) { return -(price[t] + nu) / (2.0 * f.c2); };
  auto shifted = [&](std::size_t t, double nu) {
    return std::clamp(unclipped(t, nu), f.shift_lo[t], f.shift_hi[t]);
  };
  auto balance = [&](double nu) {
    double s = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) s += shifted(t, nu);
    return s;
  };

  const auto [pmin_it, pmax_it] = std::minmax_element(price.vec().begin(), price.vec().end());
  double lo = -*pmax_it - 2.0 * f.c2 * bound;
  double hi = -*pmin_it + 2.0 * f.c2 * bound;

  std::vector<double> d_s(horizon, 0.0);
  if (width == 0.0) {
    double mean = 0.0;
    for (double p : price.values()) mean += p;
    return assemble(consumer, price, std::move(d_r), std::move(d_s),
                    -mean / static_cast<double>(horizon));
  }

  // balance() is non-increasing in nu; the bracket sends every hour to its
  // upper bound at `lo` and to its lower bound at `hi`.
  if (balance(lo) < 0.0 || balance(hi) > 0.0) {
    throw InternalError("agent model: balance bisection is not bracketed");
  }
  double nu = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxBisection; ++it) {
    nu = 0.5 * (lo + hi);
    const double b = balance(nu);
    if (std::abs(b) <= kBalanceTol * width) break;
    if (b > 0.0) {
      lo = nu;
    } else {
      hi = nu;
    }
  }

  // Polish: solve the balance equation exactly on the current active set.
  double free_price = 0.0;
  double clipped_sum = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const double u = unclipped(t, nu);
    if (u > f.shift_lo[t] && u < f.shift_hi[t]) {
      free_price += price[t];
      ++n_free;
    } else {
      clipped_sum += u <= f.shift_lo[t] ? f.shift_lo[t] : f.shift_hi[t];
    }
  }
  if (n_free > 0) {
    const double candidate =
        (2.0 * f.c2 * clipped_sum - free_price) / static_cast<double>(n_free);
    bool consistent = true;
    for (std::size_t t = 0; t < horizon && consistent; ++t) {
      const double u_old = unclipped(t, nu);
      const double u_new = unclipped(t, candidate);
      const bool was_free = u_old > f.shift_lo[t] && u_old < f.shift_hi[t];
      if (was_free) {
        consistent = u_new >= f.shift_lo[t] && u_new <= f.shift_hi[t];
      } else if (u_old <= f.shift_lo[t]) {
        consistent = u_new <= f.shift_lo[t];
      } else {
        consistent = u_new >= f.shift_hi[t];
      }
    }
    if (consistent) nu = candidate;
  }

  for (std::size_t t = 0; t < horizon; ++t) d_s[t] = shifted(t, nu);
  return assemble(consumer, price, std::move(d_r), std::move(d_s), nu);
}

namespace {

std::vector<double> grid_points(double lo, double hi, double step) {
  const auto k_lo = static_cast<long>(std::ceil(lo / step - 1e-9));
  const auto k_hi = static_cast<long>(std::floor(hi / step + 1e-9));
  std::vector<double> pts;
  for (long k = k_lo; k <= k_hi; ++k) {
    pts.push_back(std::clamp(static_cast<double>(k) * step, lo, hi));
  }
  return pts;
}

struct ShiftSearch {
  const std::vector<std::vector<double>>& grids;
  std::span<const double> price;
  double c2;
  double step;
  std::vector<double> current;
  std::vector<double> best;
  double best_cost = std::numeric_limits<double>::infinity();

  void recurse(std::size_t t, double partial_sum, double partial_cost) {
    const std::size_t last = grids.size() - 1;
    if (t == last) {
      for (double v : grids[t]) {
        if (std::abs(partial_sum + v) > 0.5 * step) continue;
        const double cost = partial_cost + price[t] * v + c2 * v * v;
        if (cost < best_cost) {
          best_cost = cost;
          current[t] = v;
          best = current;
        }
      }
      return;
    }
    for (double v : grids[t]) {
      current[t] = v;
      recurse(t + 1, partial_sum + v, partial_cost + price[t] * v + c2 * v * v);
    }
  }
};

}  // namespace

AgentSolution brute_force_response(const Consumer& consumer, const PriceProfile& price,
                                   double step) {
  check_inputs(consumer, price);
  const std::size_t horizon = price.size();
  if (horizon > 4) {
    throw ConfigError("brute force response: horizon " + std::to_string(horizon) +
                      " too large for exhaustive search (max 4)");
  }
  if (!(step > 0.0)) throw ConfigError("brute force response: step must be positive");
  const auto& f = consumer.flex();

  // The reduced-demand part of the objective has no coupling constraint, so
  // the minimum over the product grid is the product of per-hour minima.
  std::vector<double> d_r(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (double v : grid_points(f.reduce_lo[t], f.reduce_hi[t], step)) {
      const double cost = price[t] * v + f.c1 * v * v;
      if (cost < best) {
        best = cost;
        d_r[t] = v;
      }
    }
  }

  std::vector<std::vector<double>> grids(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    grids[t] = grid_points(f.shift_lo[t], f.shift_hi[t], step);
  }
  ShiftSearch search{grids, price.values(), f.c2, step, std::vector<double>(horizon, 0.0), {}};
  search.recurse(0, 0.0, 0.0);
  if (search.best.empty()) {
    throw InfeasibleError("brute force response: no balanced grid point");
  }
  return assemble(consumer, price, std::move(d_r), std::move(search.best),
                  std::numeric_limits<double>::quiet_NaN());
}

}  // namespace eqtariff
