#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "eqtariff/domain.hpp"

namespace eqtariff {

struct PopulationConfig {
  std::size_t n_consumers = 1000;
  std::size_t n_groups = 10;
  std::uint64_t seed = 2018;
  double income_low = 800.0;
  double income_high = 60000.0;
  // Lognormal sigma of the per-consumer level and per-hour jitter applied to
  // the chosen seed profile.
  double level_jitter = 0.15;
  double hourly_jitter = 0.05;
  // Flexibility: c ~ mean * LogNormal(sigma), bounds proportional to D0.
  double c1_mean = 0.3;
  double c2_mean = 0.6;
  double c_sigma = 0.25;
  double gamma_shift = 0.1;
  double gamma_reduce = 0.2;
  double reduce_up = 0.0;
  // Income-flexibility coupling in [0, 1]: richer consumers get smaller
  // penalties and wider bounds.
  double flex_income_corr = 0.5;

  void validate() const;
};

/// Consumers, their burden groups, and the demand each consumer settles on
/// under the reference wholesale price. That reference demand is the baseline
/// the tariff designer works against: demand changes are measured from it.
struct Population {
  std::vector<Consumer> consumers;         // consumers[i].id() == i
  PriceProfile reference_price;            // wholesale price the baseline was taken at
  std::vector<DemandProfile> baseline;     // agent demand at reference_price, per consumer
  std::vector<Group> groups;               // ascending mean baseline burden

  const Consumer& consumer(std::size_t id) const { return consumers.at(id); }
  const DemandProfile& baseline_of(std::size_t id) const { return baseline.at(id); }
  std::size_t horizon() const { return consumers.empty() ? 0 : consumers.front().horizon(); }
};

/// Consumers only (no grouping). Consumer i draws from its own RNG stream
/// derived from (seed, i), so the result is independent of evaluation order.
std::vector<Consumer> gen_consumers(const PopulationConfig& config,
                                    std::span<const DemandProfile> seed_profiles);

/// Solves every consumer at the wholesale price, sorts by the resulting burden
/// (ties by id) and cuts the order into n_groups contiguous chunks of equal
/// size (+-1).
Population group_by_burden(std::vector<Consumer> consumers, const PriceProfile& wholesale,
                           std::size_t n_groups, unsigned threads = 1);

/// Agent demand of every consumer at one price (indexed by consumer id).
std::vector<DemandProfile> consumer_demand_at(const Population& population,
                                              const PriceProfile& price, unsigned threads = 1);

/// Member average of per-consumer profiles for every group.
std::vector<DemandProfile> group_averages(const Population& population,
                                          std::span<const DemandProfile> per_consumer);

Population gen_population(const PopulationConfig& config,
                          std::span<const DemandProfile> seed_profiles,
                          const PriceProfile& wholesale, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Training corpus
// ---------------------------------------------------------------------------

/// Per-hour z-score parameters for prices and demand changes of one group.
/// Empty vectors mean the identity transform (mean 0, scale 1).
struct NormStats {
  std::vector<double> price_mean;
  std::vector<double> price_std;
  std::vector<double> dd_mean;
  std::vector<double> dd_std;

  double p_mean(std::size_t t) const { return price_mean.empty() ? 0.0 : price_mean.at(t); }
  double p_std(std::size_t t) const { return price_std.empty() ? 1.0 : price_std.at(t); }
  double d_mean(std::size_t t) const { return dd_mean.empty() ? 0.0 : dd_mean.at(t); }
  double d_std(std::size_t t) const { return dd_std.empty() ? 1.0 : dd_std.at(t); }
  /// Throws ShapeError unless every vector is empty or has `horizon` entries.
  void check(std::size_t horizon) const;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Samples of one group: the group-average demand change (relative to the
/// population baseline) for each price day.
/// The first n_train days form the training split, the rest validation.
struct GroupSamples {
  std::size_t group_id = 0;
  std::vector<PriceProfile> prices;
  std::vector<DemandProfile> dd;
  std::size_t n_train = 0;

  std::size_t size() const noexcept { return prices.size(); }
  std::size_t n_validation() const noexcept { return prices.size() - n_train; }
  /// Statistics over the training split.
  NormStats norm_stats() const;
};

struct Dataset {
  std::size_t horizon = 0;
  double train_fraction = 0.8;
  std::vector<GroupSamples> groups;
};

/// Number of training days for a split fraction (at least one when n > 0).
std::size_t train_count(std::size_t n_days, double train_fraction);

Dataset build_dataset(const Population& population, std::span<const PriceProfile> price_days,
                      double train_fraction = 0.8, unsigned threads = 1);

/// Writes group_<n>/prices.csv and group_<n>/dd.csv for every group.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Reads the CSV pairs back for groups 1..n_groups.
Dataset read_dataset(const std::filesystem::path& dir, std::size_t n_groups,
                     std::size_t horizon, double train_fraction);

// ---------------------------------------------------------------------------
// Price days and profile ingestion
// ---------------------------------------------------------------------------

struct PriceDayConfig {
  double volatility = 0.5;         // sigma of the mean-one lognormal day factor
  double hourly_volatility = 0.02; // sigma of the mean-one lognormal hour factors
  double hourly_correlation = 0.0; // AR(1) coefficient of the hour factors' log noise
  double spike_prob = 0.0;         // chance per hour of a spike
  double spike_max = 1.0;          // spikes multiply the hour by U(1, spike_max)

  void validate() const;
};

/// base * day factor * hour factors * spikes. Day d draws from its own stream
/// derived from (seed, d).
std::vector<PriceProfile> gen_price_days(std::size_t n_days, std::uint64_t seed,
                                         const PriceProfile& base, const PriceDayConfig& config);

/// One profile per row of `horizon` columns, or 4*horizon quarter-hourly
/// columns averaged down to hourly values.
std::vector<PriceProfile> ingest_price_csv(const std::filesystem::path& path,
                                           std::size_t horizon = kDefaultHorizon);
std::vector<DemandProfile> ingest_demand_csv(const std::filesystem::path& path,
                                             std::size_t horizon = kDefaultHorizon);

void write_profiles_csv(const std::filesystem::path& path,
                        std::span<const std::vector<double>> rows);

/// Day-ahead wholesale reference shape ($/kWh) with an afternoon peak.
PriceProfile default_wholesale_profile();

/// Residential daily load shapes with a morning and a larger evening peak.
std::vector<DemandProfile> synthetic_seed_profiles(std::size_t count, std::uint64_t seed,
                                                   std::size_t horizon = kDefaultHorizon);

}  // namespace eqtariff
