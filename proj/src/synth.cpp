#include "eqtariff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "eqtariff/agent_model.hpp"
#include "eqtariff/csv.hpp"
#include "eqtariff/parallel.hpp"

namespace eqtariff {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// exp(sigma*z - sigma^2/2): lognormal with unit mean.
double unit_lognormal(std::mt19937_64& rng, double sigma) {
  if (sigma == 0.0) return 1.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  return std::exp(sigma * normal(rng) - 0.5 * sigma * sigma);
}

void require_unit_interval(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

void PopulationConfig::validate() const {
  if (n_groups < 1) throw ConfigError("population: need at least one group");
  if (n_consumers < n_groups) {
    throw ConfigError("population: " + std::to_string(n_consumers) + " consumers cannot fill " +
                      std::to_string(n_groups) + " groups");
  }
  if (!(income_low > 0.0) || !(income_high >= income_low)) {
    throw ConfigError("population: income range must satisfy 0 < low <= high");
  }
  if (!(c1_mean > 0.0) || !(c2_mean > 0.0)) throw ConfigError("population: c1/c2 means must be positive");
  if (!(c_sigma >= 0.0) || !(level_jitter >= 0.0) || !(hourly_jitter >= 0.0)) {
    throw ConfigError("population: jitter sigmas must be non-negative");
  }
  if (!(gamma_shift >= 0.0) || !(gamma_reduce >= 0.0) || !(reduce_up >= 0.0)) {
    throw ConfigError("population: bound fractions must be non-negative");
  }
  require_unit_interval(flex_income_corr, "population: flex_income_corr");
}

std::vector<Consumer> gen_consumers(const PopulationConfig& config,
                                    std::span<const DemandProfile> seed_profiles) {
  config.validate();
  if (seed_profiles.empty()) throw ConfigError("population: no seed demand profiles");
  const std::size_t horizon = seed_profiles.front().size();
  for (const auto& p : seed_profiles) {
    if (p.size() != horizon) throw ShapeError("population: seed profiles differ in length");
  }

  std::vector<Consumer> out;
  out.reserve(config.n_consumers);
  for (std::size_t i = 0; i < config.n_consumers; ++i) {
    auto rng = stream(config.seed, i);
    std::uniform_int_distribution<std::size_t> pick(0, seed_profiles.size() - 1);
    std::uniform_real_distribution<double> income_dist(config.income_low, config.income_high);

    const auto& seed_profile = seed_profiles[pick(rng)];
    const double income = config.income_low == config.income_high ? config.income_low
                                                                   : income_dist(rng);
    const double level = unit_lognormal(rng, config.level_jitter);
    std::vector<double> baseline(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
      baseline[t] = seed_profile[t] * level * unit_lognormal(rng, config.hourly_jitter);
    }

    const double span = config.income_high - config.income_low;
    const double rank = span > 0.0 ? (income - config.income_low) / span : 0.5;
    const double tilt = config.flex_income_corr * (2.0 * rank - 1.0);  // in [-corr, corr]
    const double c1 = config.c1_mean * unit_lognormal(rng, config.c_sigma) * std::exp(-tilt);
    const double c2 = config.c2_mean * unit_lognormal(rng, config.c_sigma) * std::exp(-tilt);
    const double widen = std::max(0.0, 1.0 + tilt);

    DemandProfile d0(std::move(baseline));
    auto flex = FlexParams::proportional(d0, c1, c2, config.gamma_shift * widen,
                                         config.gamma_reduce * widen, config.reduce_up);
    out.emplace_back(i, income, std::move(d0), std::move(flex));
  }
  return out;
}

Population group_by_burden(std::vector<Consumer> consumers, const PriceProfile& wholesale,
                           std::size_t n_groups, unsigned threads) {
  if (n_groups < 1) throw ConfigError("grouping: need at least one group");
  if (n_groups > consumers.size()) {
    throw ConfigError("grouping: " + std::to_string(n_groups) + " groups exceed " +
                      std::to_string(consumers.size()) + " consumers");
  }
  std::sort(consumers.begin(), consumers.end(),
            [](const Consumer& a, const Consumer& b) { return a.id() < b.id(); });
  for (std::size_t i = 0; i < consumers.size(); ++i) {
    if (consumers[i].id() != i) throw ConfigError("grouping: consumer ids must be 0..n-1");
  }

  Population pop;
  pop.reference_price = wholesale;
  pop.baseline.resize(consumers.size());
  std::vector<double> burden(consumers.size());
  parallel_for(consumers.size(), threads, [&](std::size_t i) {
    try {
      pop.baseline[i] = solve_response(consumers[i], wholesale).demand;
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("consumer " + std::to_string(i) + ": " + e.what());
    }
    burden[i] = energy_burden(pop.baseline[i], wholesale, consumers[i].daily_income());
  });
  std::vector<std::size_t> order(consumers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return burden[a] < burden[b]; });

  const std::size_t n = consumers.size();
  const std::size_t horizon = consumers.front().horizon();
  for (std::size_t g = 0; g < n_groups; ++g) {
    Group group;
    group.id = g + 1;
    const std::size_t begin = n * g / n_groups;
    const std::size_t end = n * (g + 1) / n_groups;
    std::vector<double> avg(horizon, 0.0);
    double income = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& c = consumers[order[k]];
      group.members.push_back(c.id());
      for (std::size_t t = 0; t < horizon; ++t) avg[t] += pop.baseline[c.id()][t];
      income += c.daily_income();
    }
    const double size = static_cast<double>(end - begin);
    for (auto& v : avg) v /= size;
    group.avg_baseline = DemandProfile(std::move(avg));
    group.avg_daily_income = income / size;
    pop.groups.push_back(std::move(group));
  }
  pop.consumers = std::move(consumers);
  return pop;
}

std::vector<DemandProfile> consumer_demand_at(const Population& population,
                                              const PriceProfile& price, unsigned threads) {
  if (price.size() != population.horizon()) {
    throw ShapeError("price has " + std::to_string(price.size()) + " hours, population has " +
                     std::to_string(population.horizon()));
  }
  std::vector<DemandProfile> out(population.consumers.size());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    try {
      out[i] = solve_response(population.consumers[i], price).demand;
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("consumer " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

std::vector<DemandProfile> group_averages(const Population& population,
                                          std::span<const DemandProfile> per_consumer) {
  if (per_consumer.size() != population.consumers.size()) {
    throw ShapeError("expected one profile per consumer");
  }
  const std::size_t horizon = population.horizon();
  std::vector<DemandProfile> out;
  for (const auto& g : population.groups) {
    std::vector<double> avg(horizon, 0.0);
    for (std::size_t id : g.members) {
      for (std::size_t t = 0; t < horizon; ++t) avg[t] += per_consumer[id][t];
    }
    for (auto& v : avg) v /= g.size();
    out.emplace_back(std::move(avg));
  }
  return out;
}

Population gen_population(const PopulationConfig& config,
                          std::span<const DemandProfile> seed_profiles,
                          const PriceProfile& wholesale, unsigned threads) {
  return group_by_burden(gen_consumers(config, seed_profiles), wholesale, config.n_groups,
                         threads);
}

// ---------------------------------------------------------------------------

void NormStats::check(std::size_t horizon) const {
  for (const auto* v : {&price_mean, &price_std, &dd_mean, &dd_std}) {
    if (!v->empty() && v->size() != horizon) {
      throw ShapeError("normalization stats have " + std::to_string(v->size()) +
                       " entries for horizon " + std::to_string(horizon));
    }
  }
  for (const auto* v : {&price_std, &dd_std}) {
    for (double x : *v) {
      if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("normalization scale must be positive");
    }
  }
}

NormStats GroupSamples::norm_stats() const {
  if (n_train == 0) throw StateError("group " + std::to_string(group_id) + ": empty training split");
  const std::size_t horizon = prices.front().size();
  NormStats s;
  s.price_mean.assign(horizon, 0.0);
  s.price_std.assign(horizon, 0.0);
  s.dd_mean.assign(horizon, 0.0);
  s.dd_std.assign(horizon, 0.0);
  const auto count = static_cast<double>(n_train);
  for (std::size_t k = 0; k < n_train; ++k) {
    for (std::size_t t = 0; t < horizon; ++t) {
      s.price_mean[t] += prices[k][t];
      s.dd_mean[t] += dd[k][t];
    }
  }
  for (std::size_t t = 0; t < horizon; ++t) {
    s.price_mean[t] /= count;
    s.dd_mean[t] /= count;
  }
  for (std::size_t k = 0; k < n_train; ++k) {
    for (std::size_t t = 0; t < horizon; ++t) {
      const double dp = prices[k][t] - s.price_mean[t];
      const double dd_k = dd[k][t] - s.dd_mean[t];
      s.price_std[t] += dp * dp;
      s.dd_std[t] += dd_k * dd_k;
    }
  }
  // Constant series keep unit scale so the transform stays invertible.
  for (auto* v : {&s.price_std, &s.dd_std}) {
    for (auto& x : *v) {
      const double var = x / count;
      x = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }
  return s;
}

std::size_t train_count(std::size_t n_days, double train_fraction) {
  if (n_days == 0) return 0;
  const auto n = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_days)));
  return std::clamp<std::size_t>(n, 1, n_days);
}

Dataset build_dataset(const Population& population, std::span<const PriceProfile> price_days,
                      double train_fraction, unsigned threads) {
  if (price_days.empty()) throw ConfigError("dataset: no price days");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("dataset: train fraction must lie in (0, 1]");
  }
  const std::size_t horizon = population.horizon();
  for (const auto& p : price_days) {
    if (p.size() != horizon) throw ShapeError("dataset: price day length differs from horizon");
  }

  const std::size_t n_groups = population.groups.size();
  const std::size_t n_days = price_days.size();
  std::vector<std::vector<double>> averages(n_groups * n_days);

  parallel_for(n_groups * n_days, threads, [&](std::size_t job) {
    const auto& group = population.groups[job / n_days];
    const auto& price = price_days[job % n_days];
    std::vector<double> acc(horizon, 0.0);
    for (std::size_t id : group.members) {
      const auto& consumer = population.consumer(id);
      AgentSolution sol;
      try {
        sol = solve_response(consumer, price);
      } catch (const InfeasibleError& e) {
        throw InfeasibleError("consumer " + std::to_string(id) + ": " + e.what());
      }
      const auto& base = population.baseline_of(id);
      for (std::size_t t = 0; t < horizon; ++t) acc[t] += sol.demand[t] - base[t];
    }
    for (auto& v : acc) v /= group.size();
    averages[job] = std::move(acc);
  });

  Dataset ds;
  ds.horizon = horizon;
  ds.train_fraction = train_fraction;
  const std::size_t n_train = train_count(n_days, train_fraction);
  for (std::size_t g = 0; g < n_groups; ++g) {
    GroupSamples samples;
    samples.group_id = population.groups[g].id;
    samples.n_train = n_train;
    samples.prices.assign(price_days.begin(), price_days.end());
    samples.dd.reserve(n_days);
    for (std::size_t d = 0; d < n_days; ++d) {
      samples.dd.push_back(DemandProfile::change(std::move(averages[g * n_days + d])));
    }
    ds.groups.push_back(std::move(samples));
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  for (const auto& g : dataset.groups) {
    const auto sub = dir / ("group_" + std::to_string(g.group_id));
    std::error_code ec;
    std::filesystem::create_directories(sub, ec);
    if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
    std::vector<std::vector<double>> prices;
    std::vector<std::vector<double>> dd;
    for (std::size_t k = 0; k < g.size(); ++k) {
      prices.push_back(g.prices[k].vec());
      dd.push_back(g.dd[k].vec());
    }
    write_profiles_csv(sub / "prices.csv", prices);
    write_profiles_csv(sub / "dd.csv", dd);
  }
}

Dataset read_dataset(const std::filesystem::path& dir, std::size_t n_groups, std::size_t horizon,
                     double train_fraction) {
  Dataset ds;
  ds.horizon = horizon;
  ds.train_fraction = train_fraction;
  for (std::size_t g = 1; g <= n_groups; ++g) {
    const auto sub = dir / ("group_" + std::to_string(g));
    GroupSamples samples;
    samples.group_id = g;
    samples.prices = ingest_price_csv(sub / "prices.csv", horizon);
    std::vector<std::size_t> lines;
    const auto path = sub / "dd.csv";
    const auto rows = csv::read_numeric_rows(path, &lines);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != horizon) {
        throw ParseError(path.string() + ":" + std::to_string(lines[r]) + ": expected " +
                             std::to_string(horizon) + " columns, got " +
                             std::to_string(rows[r].size()),
                         lines[r], rows[r].size());
      }
      samples.dd.push_back(DemandProfile::change(rows[r]));
    }
    if (samples.dd.size() != samples.prices.size()) {
      throw ParseError(sub.string() + ": price and demand-change files have different row counts", 0, 0);
    }
    samples.n_train = train_count(samples.size(), train_fraction);
    ds.groups.push_back(std::move(samples));
  }
  return ds;
}

// ---------------------------------------------------------------------------

void PriceDayConfig::validate() const {
  require_unit_interval(volatility, "price days: volatility");
  require_unit_interval(hourly_volatility, "price days: hourly volatility");
  require_unit_interval(spike_prob, "price days: spike probability");
  if (!(hourly_correlation >= 0.0 && hourly_correlation < 1.0)) {
    throw ConfigError("price days: hourly correlation must lie in [0, 1)");
  }
  if (!(spike_max >= 1.0)) throw ConfigError("price days: spike_max must be at least 1");
}

std::vector<PriceProfile> gen_price_days(std::size_t n_days, std::uint64_t seed,
                                         const PriceProfile& base, const PriceDayConfig& config) {
  config.validate();
  std::vector<PriceProfile> days;
  days.reserve(n_days);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t d = 0; d < n_days; ++d) {
    auto rng = stream(seed, d);
    const double day = unit_lognormal(rng, config.volatility);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double rho = config.hourly_correlation;
    const double sigma = config.hourly_volatility;
    const double innovation = std::sqrt(1.0 - rho * rho);
    double z = normal(rng);  // stationary AR(1) with unit variance
    std::vector<double> v(base.size());
    for (std::size_t t = 0; t < base.size(); ++t) {
      if (t > 0) z = rho * z + innovation * normal(rng);
      double f = day * std::exp(sigma * z - 0.5 * sigma * sigma);
      // Always draw both numbers so the stream layout does not depend on spike_prob.
      const double hit = u(rng);
      const double size = u(rng);
      if (hit < config.spike_prob) f *= 1.0 + (config.spike_max - 1.0) * size;
      v[t] = base[t] * f;
    }
    days.emplace_back(std::move(v));
  }
  return days;
}

namespace {

std::vector<std::vector<double>> read_profile_rows(const std::filesystem::path& path,
                                                   std::size_t horizon) {
  std::vector<std::size_t> lines;
  auto rows = csv::read_numeric_rows(path, &lines);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto& row = rows[r];
    if (row.size() == 4 * horizon) {
      std::vector<double> hourly(horizon);
      for (std::size_t t = 0; t < horizon; ++t) {
        hourly[t] = 0.25 * (row[4 * t] + row[4 * t + 1] + row[4 * t + 2] + row[4 * t + 3]);
      }
      row = std::move(hourly);
    } else if (row.size() != horizon) {
      throw ParseError(path.string() + ":" + std::to_string(lines[r]) + ": expected " +
                           std::to_string(horizon) + " or " + std::to_string(4 * horizon) +
                           " columns, got " + std::to_string(row.size()),
                       lines[r], row.size());
    }
  }
  return rows;
}

}  // namespace

std::vector<PriceProfile> ingest_price_csv(const std::filesystem::path& path, std::size_t horizon) {
  std::vector<PriceProfile> out;
  for (auto& row : read_profile_rows(path, horizon)) out.emplace_back(std::move(row));
  return out;
}

std::vector<DemandProfile> ingest_demand_csv(const std::filesystem::path& path,
                                             std::size_t horizon) {
  std::vector<DemandProfile> out;
  for (auto& row : read_profile_rows(path, horizon)) out.emplace_back(std::move(row));
  return out;
}

void write_profiles_csv(const std::filesystem::path& path,
                        std::span<const std::vector<double>> rows) {
  csv::Writer w(path);
  w.header(csv::numbered("h", rows.empty() ? 0 : rows.front().size()));
  for (const auto& r : rows) w.row(r);
  w.close();
}

PriceProfile default_wholesale_profile() {
  return PriceProfile({0.022, 0.020, 0.019, 0.019, 0.020, 0.023, 0.027, 0.030,
                       0.031, 0.032, 0.034, 0.037, 0.041, 0.046, 0.052, 0.058,
                       0.062, 0.060, 0.052, 0.044, 0.037, 0.031, 0.027, 0.024});
}

std::vector<DemandProfile> synthetic_seed_profiles(std::size_t count, std::uint64_t seed,
                                                   std::size_t horizon) {
  std::vector<DemandProfile> out;
  out.reserve(count);
  const double scale = static_cast<double>(horizon) / 24.0;  // hours per 24-slot day
  for (std::size_t k = 0; k < count; ++k) {
    auto rng = stream(seed, k);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double base = 0.65 + 0.5 * u(rng);
    const double morning_amp = 0.4 + 0.65 * u(rng);
    const double morning_at = (7.0 + 1.5 * u(rng)) * scale;
    const double evening_amp = 1.2 + 1.55 * u(rng);
    const double evening_at = (17.0 + 2.5 * u(rng)) * scale;
    const double evening_width = (2.0 + 1.5 * u(rng)) * scale;
    std::vector<double> d(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
      const double h = static_cast<double>(t) + 0.5;
      const double m = (h - morning_at) / (1.5 * scale);
      const double e = (h - evening_at) / evening_width;
      d[t] = base + morning_amp * std::exp(-0.5 * m * m) + evening_amp * std::exp(-0.5 * e * e);
    }
    out.emplace_back(std::move(d));
  }
  return out;
}

}  // namespace eqtariff
