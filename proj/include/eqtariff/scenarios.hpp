#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eqtariff/domain.hpp"
#include "eqtariff/response_model.hpp"
#include "eqtariff/synth.hpp"
#include "eqtariff/tariff_optimizer.hpp"

namespace eqtariff {

enum class ScenarioKind { TariffDesign, DrEvent, PriceSurge };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

/// What to run. `base` carries the burden cap, alpha, O&M cost, barrier
/// schedule and gradient mode; the kind-specific fields fill in the rest.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::TariffDesign;
  ScenarioConfig base;

  // dr_event
  std::size_t peak_count = 4;
  double beta = 0.02;
  // Peak caps are tightened by mean + z * sd of the aggregate prediction
  // error drawn from the residual pool. 0 keeps the plain caps.
  double dr_confidence_z = 2.0;

  // price_surge (0-based hours)
  std::vector<std::size_t> surge_hours = {13, 15};
  double surge_multiplier = 5.0;

  // Relative tolerance between predicted and tested quantities.
  double mismatch_budget = 0.15;

  void validate(std::size_t horizon) const;
};

/// Validation residuals (actual - predicted, kWh) per group: [group][sample][hour].
using ResidualPool = std::vector<std::vector<std::vector<double>>>;

/// Sum of every consumer's baseline demand per hour.
std::vector<double> aggregate_baseline(const Population& population);

/// The k hours with the largest values, ties to the earlier hour; sorted ascending.
std::vector<std::size_t> select_peak_hours(std::span<const double> aggregate, std::size_t k);
std::vector<std::size_t> select_peak_hours(const Population& population, std::size_t k);

/// lambda_t * multiplier on `hours` (0-based), unchanged elsewhere.
PriceProfile apply_surge(const PriceProfile& wholesale, std::span<const std::size_t> hours,
                         double multiplier);

/// Per peak hour: mean + z * sd of sum_n w_n r_n,t with r_n,t drawn from group
/// n's pool. StateError when a group's pool is empty.
std::vector<double> peak_margins(const Population& population, const ResidualPool& residuals,
                                 std::span<const std::size_t> peak_hours, double z);

/// Wholesale price the scenario designs against.
PriceProfile effective_wholesale(const ScenarioSpec& spec, const PriceProfile& wholesale);

/// Scenario config with peak hours, beta, surge and margins resolved.
/// `residuals` may be null when dr_confidence_z is 0 or the kind is not dr_event.
ScenarioConfig resolve_config(const ScenarioSpec& spec, const Population& population,
                              const ResidualPool* residuals);

/// Agent-model demand of every consumer (by id) under its group's tariff.
/// This is the only source of tested quantities.
struct AgentOutcome {
  std::vector<DemandProfile> demand;
};

AgentOutcome evaluate_agents(const Population& population, std::span<const PriceProfile> group_prices,
                             unsigned threads = 1);
/// Every consumer facing the same price.
AgentOutcome evaluate_agents(const Population& population, const PriceProfile& price,
                             unsigned threads = 1);

struct Quartiles {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};
/// Linear-interpolation quantiles; DomainError on empty input.
Quartiles quartiles(std::vector<double> values);

struct GroupValidation {
  std::size_t group = 0;  // 1-based
  double income = 0.0;    // average daily income
  // Burdens of the group-average consumer: average demand . price / average income.
  double baseline_burden = 0.0;
  double predicted_burden = 0.0;
  double tested_burden = 0.0;
  Quartiles tested_members;  // spread of individual tested burdens
};

struct PeakValidation {
  std::size_t hour = 0;  // 0-based
  double baseline = 0.0; // aggregate kWh
  double cap = 0.0;      // (1 - beta) * baseline
  double predicted = 0.0;
  double tested = 0.0;
  double predicted_reduction() const { return 1.0 - predicted / baseline; }
  double tested_reduction() const { return 1.0 - tested / baseline; }
};

struct ValidationReport {
  std::vector<GroupValidation> groups;
  double om_cost = 0.0;
  double revenue_baseline = 0.0;  // sum_i D0_i' lambda
  double revenue_predicted = 0.0;
  double revenue_tested = 0.0;
  std::vector<PeakValidation> peaks;
  double max_burden_gap = 0.0;      // max_n |predicted - tested|
  double max_burden_gap_rel = 0.0;  // same, relative to tested
  double revenue_gap_rel = 0.0;     // |predicted - tested| / tested

  /// C + baseline wholesale cost.
  double revenue_required() const { return om_cost + revenue_baseline; }
  /// (tested - required) / required.
  double tested_revenue_margin() const;
  bool within_budget(double budget) const;
};

/// Predicted quantities come from `result`; tested and baseline ones only from
/// agent outcomes. `baseline` must be the agents at `wholesale`.
ValidationReport build_validation_report(const Population& population, const PriceProfile& wholesale,
                                         const ScenarioConfig& config, const OptimizationResult& result,
                                         const AgentOutcome& baseline, const AgentOutcome& tested);

struct ScenarioRun {
  ScenarioSpec spec;
  ScenarioConfig config;
  PriceProfile wholesale;  // effective
  OptimizationResult result;
  ValidationReport report;
  double solve_seconds = 0.0;
  double validate_seconds = 0.0;
};

/// Resolve the config and solve; `report` is left empty. Away from the
/// reference price the baseline is estimated as anchor + model prediction.
ScenarioRun design_tariffs(const ScenarioSpec& spec, const Population& population,
                           std::span<const DemandResponseModel* const> models,
                           const PriceProfile& wholesale, const ResidualPool* residuals);

/// Tests run.result on every consumer with the agent model and fills run.report.
void validate_run(ScenarioRun& run, const Population& population, unsigned threads = 1);

/// design_tariffs followed by validate_run.
ScenarioRun run_scenario(const ScenarioSpec& spec, const Population& population,
                         std::span<const DemandResponseModel* const> models,
                         const PriceProfile& wholesale, const ResidualPool* residuals,
                         unsigned threads = 1);

struct ReliabilityResult {
  std::vector<std::size_t> hours;  // 0-based peak hours
  std::vector<double> baseline;    // aggregate baseline demand
  std::vector<double> cap;
  std::vector<double> predicted;   // aggregate predicted demand
  std::vector<double> success_rate;
  std::size_t trials = 0;
  /// Aggregate demand per trial, [trial][peak index].
  std::vector<std::vector<double>> samples;
};

/// Bootstrap: each trial adds w_n * r to group n's predicted demand at every
/// peak hour, r drawn i.i.d. per (group, hour) from that group's residuals
/// scaled by `residual_scale`. Success when the aggregate stays at or below
/// (1 - beta) times the aggregate baseline. Trial j uses its own stream from
/// (seed, j), so the result does not depend on `threads`.
ReliabilityResult reliability_mc(const OptimizationResult& result, const Population& population,
                                 const ScenarioConfig& config, const ResidualPool& residuals,
                                 std::size_t n_trials, std::uint64_t seed, unsigned threads = 1,
                                 double residual_scale = 1.0);

struct MetricRow {
  std::string metric;
  std::string key;  // group or hour label, empty for totals
  double value = 0.0;
};

/// Revenue percentages use sum D0' lambda minus C (when C > 0) as the base.
std::vector<MetricRow> metrics_report(const ScenarioRun& run);

/// metrics.csv, burden_by_group.csv, tariff_by_hour.csv, peak_reduction.csv.
void write_run_csvs(const ScenarioRun& run, const std::filesystem::path& dir);
/// reliability.csv and reliability_samples.csv.
void write_reliability_csvs(const ReliabilityResult& mc, const std::filesystem::path& dir);

}  // namespace eqtariff
