#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "eqtariff/rnn.hpp"
#include "eqtariff/scenarios.hpp"
#include "eqtariff/synth.hpp"

namespace eqtariff::cli {

using json = nlohmann::json;

struct SeedProfileSettings {
  std::string file;  // empty: generated shapes
  std::size_t count = 25;
  std::uint64_t seed = 11;
};

struct PriceSettings {
  std::string wholesale_file;  // empty: built-in reference shape
  std::size_t days = 600;
  std::uint64_t seed = 5;
  PriceDayConfig day;
  double train_fraction = 0.8;
};

struct McSettings {
  std::size_t trials = 10000;
  std::uint64_t seed = 99;
  double variance_scale = 1.0;
};

struct Config {
  unsigned threads = 1;
  PopulationConfig population;
  SeedProfileSettings seed_profiles;
  PriceSettings prices;
  TrainConfig train;
  ScenarioSpec scenario;
  McSettings mc;
  // Directory that relative file paths in the config are taken from.
  std::filesystem::path base_dir = ".";

  std::filesystem::path resolve(const std::string& file) const;
  /// Population, prices, train and mc seeds become s, s+1, s+2, s+3.
  void set_master_seed(std::uint64_t s);
};

/// Overlays `doc` on `cfg`. Unknown keys and wrong types raise ConfigError.
void apply_json(Config& cfg, const json& doc);
void apply_scenario_json(ScenarioSpec& spec, const json& doc);

Config load_config(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

json to_json(const Config& cfg);
json to_json(const ScenarioSpec& spec);
/// Resolved config as the solver saw it; hours are 1-based.
json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_config_from_json(const json& doc);

}  // namespace eqtariff::cli
