#pragma once

#include <vector>

#include "eqtariff/domain.hpp"

namespace eqtariff {

/// Bill-minimizing response of one consumer:
///
///   min  p'D + c1 |D_r|^2 + c2 |D_s|^2
///   s.t. D = D0 + D_r + D_s,  sum_t D_s,t = 0,  box bounds on D_r and D_s.
struct AgentSolution {
  std::vector<double> d_r;
  std::vector<double> d_s;
  DemandProfile demand;
  double bill = 0.0;
  double nu = 0.0;  // multiplier of the shift-balance constraint
  double objective = 0.0;
};

/// Objective value of the agent QP at (d_r, d_s).
double agent_objective(const Consumer& consumer, const PriceProfile& price,
                       std::span<const double> d_r, std::span<const double> d_s);

/// Exact solution. The QP separates per hour once the balance multiplier is
/// known, so d_r is a clipped closed form and nu is found by bisection on the
/// monotone balance function, then polished on the active set.
AgentSolution solve_response(const Consumer& consumer, const PriceProfile& price);

/// Exhaustive grid search over multiples of `step` inside the bounds. Only
/// usable for horizons up to 4.
AgentSolution brute_force_response(const Consumer& consumer, const PriceProfile& price,
                                   double step);

}  // namespace eqtariff
