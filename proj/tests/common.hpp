#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "eqtariff/agent_model.hpp"
#include "eqtariff/domain.hpp"
#include "eqtariff/synth.hpp"

namespace testutil {

using namespace eqtariff;

inline std::vector<double> uniform_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Consumer box_consumer(std::size_t id, double income, std::vector<double> baseline, double c1, double c2,
                             double shift, double reduce) {
  const std::size_t T = baseline.size();
  FlexParams f;
  f.c1 = c1;
  f.c2 = c2;
  f.shift_lo.assign(T, -shift);
  f.shift_hi.assign(T, shift);
  f.reduce_lo.assign(T, -reduce);
  f.reduce_hi.assign(T, 0.0);
  return Consumer(id, income, DemandProfile(std::move(baseline)), std::move(f));
}

/// Small population built by the production generator.
inline Population small_population(std::size_t n_consumers, std::size_t n_groups, std::uint64_t seed = 3) {
  PopulationConfig pc;
  pc.n_consumers = n_consumers;
  pc.n_groups = n_groups;
  pc.seed = seed;
  return gen_population(pc, synthetic_seed_profiles(5, 11), default_wholesale_profile());
}

/// One consumer per group with hand-set incomes; baseline equals the agent
/// demand at `wholesale` (zero flexibility keeps it at the raw profile).
inline Population manual_population(const std::vector<std::vector<double>>& baselines,
                                    const std::vector<double>& incomes, const PriceProfile& wholesale) {
  Population pop;
  pop.reference_price = wholesale;
  for (std::size_t i = 0; i < baselines.size(); ++i) {
    pop.consumers.push_back(box_consumer(i, incomes[i], baselines[i], 1.0, 1.0, 0.0, 0.0));
    pop.baseline.push_back(DemandProfile(baselines[i]));
    Group g;
    g.id = i + 1;
    g.members = {i};
    g.avg_baseline = DemandProfile(baselines[i]);
    g.avg_daily_income = incomes[i] / kDaysPerYear;
    pop.groups.push_back(std::move(g));
  }
  return pop;
}

}  // namespace testutil
