#include "eqtariff/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "eqtariff/agent_model.hpp"
#include "eqtariff/csv.hpp"
#include "eqtariff/parallel.hpp"

namespace eqtariff {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::mt19937_64 trial_stream(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

void require_pool(const Population& population, const ResidualPool& residuals,
                  std::span<const std::size_t> hours) {
  if (residuals.size() != population.groups.size()) {
    throw StateError("residual pool has " + std::to_string(residuals.size()) + " groups, population has " +
                     std::to_string(population.groups.size()));
  }
  for (std::size_t n = 0; n < residuals.size(); ++n) {
    if (residuals[n].empty()) throw StateError("empty residual pool for group " + std::to_string(n + 1));
    for (const auto& r : residuals[n]) {
      for (std::size_t h : hours) {
        if (h >= r.size()) throw ShapeError("residual sample shorter than peak hour " + std::to_string(h + 1));
      }
    }
  }
}

double group_burden(std::span<const double> demand, const PriceProfile& price, double income) {
  return energy_burden(demand, price.values(), income);
}

}  // namespace

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::TariffDesign: return "tariff_design";
    case ScenarioKind::DrEvent: return "dr_event";
    case ScenarioKind::PriceSurge: return "price_surge";
  }
  return "?";
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  if (name == "tariff_design") return ScenarioKind::TariffDesign;
  if (name == "dr_event") return ScenarioKind::DrEvent;
  if (name == "price_surge") return ScenarioKind::PriceSurge;
  throw ConfigError("unknown scenario kind '" + name + "' (tariff_design, dr_event, price_surge)");
}

void ScenarioSpec::validate(std::size_t horizon) const {
  if (kind == ScenarioKind::DrEvent) {
    if (peak_count < 1 || peak_count > horizon) {
      throw ConfigError("dr_event: peak count must lie in [1, " + std::to_string(horizon) + "]");
    }
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("dr_event: beta must lie in [0, 1)");
    if (!(dr_confidence_z >= 0.0) || !std::isfinite(dr_confidence_z)) {
      throw ConfigError("dr_event: confidence z must be finite and non-negative");
    }
  }
  if (kind == ScenarioKind::PriceSurge) {
    if (!(surge_multiplier > 1.0) || !std::isfinite(surge_multiplier)) {
      throw ConfigError("price_surge: multiplier must exceed 1");
    }
    if (surge_hours.empty()) throw ConfigError("price_surge: no surge hours");
    for (auto h : surge_hours) {
      if (h >= horizon) throw ConfigError("price_surge: hour " + std::to_string(h + 1) + " outside horizon");
    }
  }
  if (!(mismatch_budget >= 0.0)) throw ConfigError("mismatch budget must be non-negative");
}

std::vector<double> aggregate_baseline(const Population& population) {
  std::vector<double> agg(population.horizon(), 0.0);
  for (const auto& d : population.baseline) {
    for (std::size_t t = 0; t < agg.size(); ++t) agg[t] += d[t];
  }
  return agg;
}

std::vector<std::size_t> select_peak_hours(std::span<const double> aggregate, std::size_t k) {
  if (k < 1 || k > aggregate.size()) {
    throw ConfigError("peak hour count " + std::to_string(k) + " outside [1, " +
                      std::to_string(aggregate.size()) + "]");
  }
  std::vector<std::size_t> order(aggregate.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return aggregate[a] > aggregate[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> select_peak_hours(const Population& population, std::size_t k) {
  return select_peak_hours(aggregate_baseline(population), k);
}

PriceProfile apply_surge(const PriceProfile& wholesale, std::span<const std::size_t> hours,
                         double multiplier) {
  auto v = wholesale.vec();
  for (std::size_t h : hours) {
    if (h >= v.size()) throw ConfigError("surge hour " + std::to_string(h + 1) + " outside horizon");
  }
  // A repeated hour is still surged once.
  std::vector<bool> hit(v.size(), false);
  for (std::size_t h : hours) hit[h] = true;
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (hit[t]) v[t] *= multiplier;
  }
  return PriceProfile(std::move(v));
}

std::vector<double> peak_margins(const Population& population, const ResidualPool& residuals,
                                 std::span<const std::size_t> peak_hours, double z) {
  require_pool(population, residuals, peak_hours);
  std::vector<double> out;
  for (std::size_t h : peak_hours) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < residuals.size(); ++n) {
      const double w = population.groups[n].size();
      double m = 0.0;
      for (const auto& r : residuals[n]) m += r[h];
      m /= static_cast<double>(residuals[n].size());
      double v = 0.0;
      for (const auto& r : residuals[n]) v += (r[h] - m) * (r[h] - m);
      v /= static_cast<double>(residuals[n].size());
      mean += w * m;
      var += w * w * v;
    }
    out.push_back(std::max(0.0, mean + z * std::sqrt(var)));
  }
  return out;
}

PriceProfile effective_wholesale(const ScenarioSpec& spec, const PriceProfile& wholesale) {
  if (spec.kind != ScenarioKind::PriceSurge) return wholesale;
  return apply_surge(wholesale, spec.surge_hours, spec.surge_multiplier);
}

ScenarioConfig resolve_config(const ScenarioSpec& spec, const Population& population,
                              const ResidualPool* residuals) {
  const std::size_t horizon = population.horizon();
  spec.validate(horizon);
  ScenarioConfig cfg = spec.base;
  cfg.peak_hours.clear();
  cfg.peak_margin.clear();
  cfg.beta = 0.0;
  cfg.surge.reset();
  if (spec.kind == ScenarioKind::DrEvent) {
    cfg.beta = spec.beta;
    cfg.peak_hours = select_peak_hours(population, spec.peak_count);
    if (spec.dr_confidence_z > 0.0) {
      if (residuals == nullptr) throw StateError("dr_event: confidence margin needs validation residuals");
      cfg.peak_margin = peak_margins(population, *residuals, cfg.peak_hours, spec.dr_confidence_z);
    }
  }
  if (spec.kind == ScenarioKind::PriceSurge) {
    cfg.surge = SurgeSpec{spec.surge_hours, spec.surge_multiplier};
  }
  cfg.validate(horizon);
  return cfg;
}

AgentOutcome evaluate_agents(const Population& population, std::span<const PriceProfile> group_prices,
                             unsigned threads) {
  if (group_prices.size() != population.groups.size()) {
    throw ShapeError("expected one tariff per group");
  }
  std::vector<const PriceProfile*> price_of(population.consumers.size(), nullptr);
  for (std::size_t n = 0; n < population.groups.size(); ++n) {
    for (std::size_t id : population.groups[n].members) price_of.at(id) = &group_prices[n];
  }
  AgentOutcome out;
  out.demand.resize(population.consumers.size());
  parallel_for(out.demand.size(), threads, [&](std::size_t i) {
    if (price_of[i] == nullptr) throw StateError("consumer " + std::to_string(i) + " is in no group");
    try {
      out.demand[i] = solve_response(population.consumers[i], *price_of[i]).demand;
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("consumer " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

AgentOutcome evaluate_agents(const Population& population, const PriceProfile& price, unsigned threads) {
  std::vector<PriceProfile> prices(population.groups.size(), price);
  return evaluate_agents(population, prices, threads);
}

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) throw DomainError("quartiles: no values");
  std::sort(values.begin(), values.end());
  auto q = [&](double f) {
    const double pos = f * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

double ValidationReport::tested_revenue_margin() const {
  const double req = revenue_required();
  return (revenue_tested - req) / std::abs(req);
}

bool ValidationReport::within_budget(double budget) const {
  if (max_burden_gap_rel > budget || revenue_gap_rel > budget) return false;
  return std::all_of(peaks.begin(), peaks.end(),
                     [&](const PeakValidation& p) { return p.tested <= p.cap * (1.0 + budget); });
}

ValidationReport build_validation_report(const Population& population, const PriceProfile& wholesale,
                                         const ScenarioConfig& config, const OptimizationResult& result,
                                         const AgentOutcome& baseline, const AgentOutcome& tested) {
  const std::size_t n_groups = population.groups.size();
  const std::size_t horizon = population.horizon();
  if (result.prices.size() != n_groups || result.predicted_demand.size() != n_groups) {
    throw ShapeError("validation: result does not match the population's groups");
  }
  if (baseline.demand.size() != population.consumers.size() ||
      tested.demand.size() != population.consumers.size()) {
    throw ShapeError("validation: expected one agent outcome per consumer");
  }
  if (wholesale.size() != horizon) throw ShapeError("validation: wholesale length mismatch");

  ValidationReport rep;
  rep.om_cost = config.om_cost;
  const auto base_avg = group_averages(population, baseline.demand);
  const auto test_avg = group_averages(population, tested.demand);
  for (std::size_t n = 0; n < n_groups; ++n) {
    const auto& g = population.groups[n];
    const auto& price = result.prices[n];
    GroupValidation gv;
    gv.group = g.id;
    gv.income = g.avg_daily_income;
    gv.baseline_burden = group_burden(base_avg[n].values(), wholesale, g.avg_daily_income);
    gv.predicted_burden = group_burden(result.predicted_demand[n].values(), price, g.avg_daily_income);
    gv.tested_burden = group_burden(test_avg[n].values(), price, g.avg_daily_income);
    std::vector<double> members;
    for (std::size_t id : g.members) {
      const auto& c = population.consumer(id);
      members.push_back(energy_burden(tested.demand[id], price, c.daily_income()));
      rep.revenue_baseline += dot(baseline.demand[id].values(), wholesale.values());
      rep.revenue_tested += dot(tested.demand[id].values(), price.values());
    }
    gv.tested_members = quartiles(std::move(members));
    rep.revenue_predicted += g.size() * dot(result.predicted_demand[n].values(), price.values());

    const double gap = std::abs(gv.predicted_burden - gv.tested_burden);
    rep.max_burden_gap = std::max(rep.max_burden_gap, gap);
    if (gv.tested_burden > 0.0) rep.max_burden_gap_rel = std::max(rep.max_burden_gap_rel, gap / gv.tested_burden);
    rep.groups.push_back(gv);
  }
  rep.revenue_gap_rel = rep.revenue_tested != 0.0
                            ? std::abs(rep.revenue_predicted - rep.revenue_tested) / std::abs(rep.revenue_tested)
                            : 0.0;

  for (std::size_t h : config.peak_hours) {
    PeakValidation pv;
    pv.hour = h;
    for (std::size_t n = 0; n < n_groups; ++n) {
      const auto& g = population.groups[n];
      pv.predicted += g.size() * result.predicted_demand[n][h];
      for (std::size_t id : g.members) {
        pv.baseline += baseline.demand[id][h];
        pv.tested += tested.demand[id][h];
      }
    }
    pv.cap = (1.0 - config.beta) * pv.baseline;
    rep.peaks.push_back(pv);
  }
  return rep;
}

ScenarioRun design_tariffs(const ScenarioSpec& spec, const Population& population,
                           std::span<const DemandResponseModel* const> models,
                           const PriceProfile& wholesale, const ResidualPool* residuals) {
  if (models.size() != population.groups.size()) {
    throw ConfigError(std::to_string(models.size()) + " models for " +
                      std::to_string(population.groups.size()) + " groups");
  }
  ScenarioRun run;
  run.spec = spec;
  run.config = resolve_config(spec, population, residuals);
  run.wholesale = effective_wholesale(spec, wholesale);

  // Nobody has faced a price other than the reference one, so the baseline
  // there comes from the same models the design uses.
  std::vector<DemandProfile> baseline;
  if (!(run.wholesale == population.reference_price)) {
    for (std::size_t n = 0; n < population.groups.size(); ++n) {
      if (models[n] == nullptr) throw StateError("no model for group " + std::to_string(n + 1));
      auto d = population.groups[n].avg_baseline.vec();
      const auto dd = models[n]->predict(run.wholesale.values());
      for (std::size_t t = 0; t < d.size(); ++t) d[t] = std::max(0.0, d[t] + dd[t]);
      baseline.emplace_back(std::move(d));
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  const TariffProblem problem(population,
                              std::vector<const DemandResponseModel*>(models.begin(), models.end()),
                              run.wholesale, run.config, std::move(baseline));
  run.result = solve(problem);
  run.solve_seconds = seconds_since(t0);
  return run;
}

void validate_run(ScenarioRun& run, const Population& population, unsigned threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const AgentOutcome base = evaluate_agents(population, run.wholesale, threads);
  const AgentOutcome tested = evaluate_agents(population, run.result.prices, threads);
  run.report = build_validation_report(population, run.wholesale, run.config, run.result, base, tested);
  run.validate_seconds = seconds_since(t0);
}

ScenarioRun run_scenario(const ScenarioSpec& spec, const Population& population,
                         std::span<const DemandResponseModel* const> models,
                         const PriceProfile& wholesale, const ResidualPool* residuals, unsigned threads) {
  ScenarioRun run = design_tariffs(spec, population, models, wholesale, residuals);
  validate_run(run, population, threads);
  return run;
}

ReliabilityResult reliability_mc(const OptimizationResult& result, const Population& population,
                                 const ScenarioConfig& config, const ResidualPool& residuals,
                                 std::size_t n_trials, std::uint64_t seed, unsigned threads,
                                 double residual_scale) {
  if (config.peak_hours.empty()) throw ConfigError("reliability: scenario has no peak hours");
  if (n_trials < 1) throw ConfigError("reliability: need at least one trial");
  if (!(residual_scale >= 0.0)) throw ConfigError("reliability: residual scale must be non-negative");
  if (result.predicted_demand.size() != population.groups.size()) {
    throw ShapeError("reliability: result does not match the population's groups");
  }
  require_pool(population, residuals, config.peak_hours);

  const auto agg = aggregate_baseline(population);
  const std::size_t n_peak = config.peak_hours.size();
  ReliabilityResult out;
  out.hours = config.peak_hours;
  out.trials = n_trials;
  for (std::size_t h : config.peak_hours) {
    out.baseline.push_back(agg[h]);
    out.cap.push_back((1.0 - config.beta) * agg[h]);
    double pred = 0.0;
    for (std::size_t n = 0; n < population.groups.size(); ++n) {
      pred += population.groups[n].size() * result.predicted_demand[n][h];
    }
    out.predicted.push_back(pred);
  }

  out.samples.assign(n_trials, std::vector<double>(n_peak, 0.0));
  parallel_for(n_trials, threads, [&](std::size_t j) {
    auto rng = trial_stream(seed, j);
    auto& row = out.samples[j];
    for (std::size_t k = 0; k < n_peak; ++k) {
      const std::size_t h = config.peak_hours[k];
      double total = out.predicted[k];
      for (std::size_t n = 0; n < residuals.size(); ++n) {
        std::uniform_int_distribution<std::size_t> pick(0, residuals[n].size() - 1);
        total += population.groups[n].size() * residual_scale * residuals[n][pick(rng)][h];
      }
      row[k] = total;
    }
  });

  for (std::size_t k = 0; k < n_peak; ++k) {
    std::size_t ok = 0;
    for (const auto& row : out.samples) ok += row[k] <= out.cap[k] ? 1 : 0;
    out.success_rate.push_back(static_cast<double>(ok) / static_cast<double>(n_trials));
  }
  return out;
}

std::vector<MetricRow> metrics_report(const ScenarioRun& run) {
  const auto& rep = run.report;
  const auto& obj = run.result.objective;
  const double base = rep.revenue_baseline - std::max(0.0, rep.om_cost);
  auto pct = [&](double v) { return base != 0.0 ? 100.0 * v / base : 0.0; };

  std::vector<MetricRow> rows;
  auto add = [&](std::string metric, std::string key, double value) {
    rows.push_back({std::move(metric), std::move(key), value});
  };
  add("converged", "", run.result.converged ? 1.0 : 0.0);
  add("stalled", "", run.result.stalled ? 1.0 : 0.0);
  add("revenue_baseline", "", rep.revenue_baseline);
  add("revenue_required", "", rep.revenue_required());
  add("revenue_predicted", "", rep.revenue_predicted);
  add("revenue_tested", "", rep.revenue_tested);
  add("revenue_delta_predicted_usd", "", rep.revenue_predicted - rep.revenue_baseline);
  add("revenue_delta_predicted_pct", "", pct(rep.revenue_predicted - rep.revenue_baseline));
  add("revenue_delta_tested_usd", "", rep.revenue_tested - rep.revenue_baseline);
  add("revenue_delta_tested_pct", "", pct(rep.revenue_tested - rep.revenue_baseline));
  add("revenue_gap_rel", "", rep.revenue_gap_rel);
  add("objective_total", "", obj.total());
  add("objective_burden", "", obj.burden);
  add("objective_deviation", "", obj.deviation);
  add("max_burden_gap", "", rep.max_burden_gap);
  add("max_burden_gap_rel", "", rep.max_burden_gap_rel);
  for (const auto& g : rep.groups) {
    const std::string key = "group_" + std::to_string(g.group);
    add("burden_baseline", key, g.baseline_burden);
    add("burden_predicted", key, g.predicted_burden);
    add("burden_tested", key, g.tested_burden);
  }
  for (const auto& p : rep.peaks) {
    const std::string key = "hour_" + std::to_string(p.hour + 1);
    add("peak_reduction_predicted_pct", key, 100.0 * p.predicted_reduction());
    add("peak_reduction_tested_pct", key, 100.0 * p.tested_reduction());
  }
  add("solve_seconds", "", run.solve_seconds);
  add("validate_seconds", "", run.validate_seconds);
  return rows;
}

void write_run_csvs(const ScenarioRun& run, const std::filesystem::path& dir) {
  {
    csv::Writer w(dir / "metrics.csv");
    w.header({"metric", "key", "value"});
    for (const auto& r : metrics_report(run)) {
      // Timings vary between runs; they go to the CLI's timings file instead.
      if (r.metric == "solve_seconds" || r.metric == "validate_seconds") continue;
      const std::string text[] = {r.metric, r.key};
      const double v[] = {r.value};
      w.row(text, v);
    }
    w.close();
  }
  {
    csv::Writer w(dir / "burden_by_group.csv");
    w.header({"group", "income", "baseline", "predicted", "tested", "tested_min", "tested_q1",
              "tested_median", "tested_q3", "tested_max"});
    for (const auto& g : run.report.groups) {
      const auto& q = g.tested_members;
      w.row({static_cast<double>(g.group), g.income, g.baseline_burden, g.predicted_burden,
             g.tested_burden, q.min, q.q1, q.median, q.q3, q.max});
    }
    w.close();
  }
  {
    csv::Writer w(dir / "tariff_by_hour.csv");
    std::vector<std::string> head = {"hour", "wholesale"};
    for (auto& name : csv::numbered("group_", run.result.prices.size())) head.push_back(name);
    w.header(head);
    for (std::size_t t = 0; t < run.wholesale.size(); ++t) {
      std::vector<double> row = {static_cast<double>(t + 1), run.wholesale[t]};
      for (const auto& p : run.result.prices) row.push_back(p[t]);
      w.row(row);
    }
    w.close();
  }
  {
    csv::Writer w(dir / "peak_reduction.csv");
    w.header({"hour", "baseline", "cap", "predicted", "tested", "predicted_reduction_pct",
              "tested_reduction_pct"});
    for (const auto& p : run.report.peaks) {
      w.row({static_cast<double>(p.hour + 1), p.baseline, p.cap, p.predicted, p.tested,
             100.0 * p.predicted_reduction(), 100.0 * p.tested_reduction()});
    }
    w.close();
  }
}

void write_reliability_csvs(const ReliabilityResult& mc, const std::filesystem::path& dir) {
  {
    csv::Writer w(dir / "reliability.csv");
    w.header({"hour", "cap", "predicted", "success_rate", "trials"});
    for (std::size_t k = 0; k < mc.hours.size(); ++k) {
      w.row({static_cast<double>(mc.hours[k] + 1), mc.cap[k], mc.predicted[k], mc.success_rate[k],
             static_cast<double>(mc.trials)});
    }
    w.close();
  }
  {
    csv::Writer w(dir / "reliability_samples.csv");
    w.header({"trial", "hour", "demand", "reduction_pct"});
    for (std::size_t j = 0; j < mc.samples.size(); ++j) {
      for (std::size_t k = 0; k < mc.hours.size(); ++k) {
        w.row({static_cast<double>(j + 1), static_cast<double>(mc.hours[k] + 1), mc.samples[j][k],
               100.0 * (1.0 - mc.samples[j][k] / mc.baseline[k])});
      }
    }
    w.close();
  }
}

}  // namespace eqtariff
