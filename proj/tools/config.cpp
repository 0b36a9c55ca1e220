#include "config.hpp"

#include <fstream>
#include <set>

namespace eqtariff::cli {

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& keys, const std::string& section) {
  if (!obj.is_object()) throw ConfigError("config: '" + section + "' must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!keys.count(k)) throw ConfigError("config: unknown key '" + section + "." + k + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + section + "." + key + "' has the wrong type");
  }
  if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t> ||
                std::is_same_v<T, unsigned>) {
    if (!it->is_number_unsigned()) {
      throw ConfigError("config: '" + section + "." + key + "' must be a non-negative integer");
    }
  }
}

std::vector<std::size_t> hours_from_json(const json& arr, const std::string& what) {
  std::vector<std::size_t> out;
  if (!arr.is_array()) throw ConfigError("config: '" + what + "' must be a list of hours");
  for (const auto& h : arr) {
    if (!h.is_number_unsigned() || h.get<std::size_t>() < 1) {
      throw ConfigError("config: '" + what + "' entries are 1-based hours");
    }
    out.push_back(h.get<std::size_t>() - 1);
  }
  return out;
}

json hours_to_json(const std::vector<std::size_t>& hours) {
  json arr = json::array();
  for (auto h : hours) arr.push_back(h + 1);
  return arr;
}

void apply_barrier(BarrierSchedule& b, const json& doc) {
  const std::string s = "scenario.barrier";
  reject_unknown(doc, {"mu0", "mu_growth", "epsilon", "max_outer", "max_inner", "slack_margin",
                       "price_cap_factor"}, s);
  read(doc, "mu0", b.mu0, s);
  read(doc, "mu_growth", b.mu_growth, s);
  read(doc, "epsilon", b.epsilon, s);
  read(doc, "max_outer", b.max_outer, s);
  read(doc, "max_inner", b.max_inner, s);
  read(doc, "slack_margin", b.slack_margin, s);
  read(doc, "price_cap_factor", b.price_cap_factor, s);
}

json barrier_json(const BarrierSchedule& b) {
  return {{"mu0", b.mu0},           {"mu_growth", b.mu_growth},       {"epsilon", b.epsilon},
          {"max_outer", b.max_outer}, {"max_inner", b.max_inner},     {"slack_margin", b.slack_margin},
          {"price_cap_factor", b.price_cap_factor}};
}

}  // namespace

std::filesystem::path Config::resolve(const std::string& file) const {
  const std::filesystem::path p(file);
  return p.is_absolute() ? p : base_dir / p;
}

void Config::set_master_seed(std::uint64_t s) {
  population.seed = s;
  prices.seed = s + 1;
  train.seed = s + 2;
  mc.seed = s + 3;
}

void apply_scenario_json(ScenarioSpec& spec, const json& doc) {
  const std::string s = "scenario";
  reject_unknown(doc, {"kind", "energy_burden_cap", "alpha", "om_cost", "gradient_mode", "barrier",
                       "peak_count", "beta", "dr_confidence_z", "surge_hours", "surge_multiplier",
                       "mismatch_budget"}, s);
  if (doc.contains("kind")) {
    if (!doc["kind"].is_string()) throw ConfigError("config: 'scenario.kind' must be a string");
    spec.kind = scenario_kind_from_string(doc["kind"].get<std::string>());
  }
  read(doc, "energy_burden_cap", spec.base.energy_burden_cap, s);
  read(doc, "alpha", spec.base.alpha, s);
  read(doc, "om_cost", spec.base.om_cost, s);
  if (doc.contains("gradient_mode")) {
    if (!doc["gradient_mode"].is_string()) throw ConfigError("config: 'scenario.gradient_mode' must be a string");
    spec.base.gradient_mode = gradient_mode_from_string(doc["gradient_mode"].get<std::string>());
  }
  if (doc.contains("barrier")) apply_barrier(spec.base.barrier, doc["barrier"]);
  read(doc, "peak_count", spec.peak_count, s);
  read(doc, "beta", spec.beta, s);
  read(doc, "dr_confidence_z", spec.dr_confidence_z, s);
  if (doc.contains("surge_hours")) spec.surge_hours = hours_from_json(doc["surge_hours"], "scenario.surge_hours");
  read(doc, "surge_multiplier", spec.surge_multiplier, s);
  read(doc, "mismatch_budget", spec.mismatch_budget, s);
}

void apply_json(Config& cfg, const json& doc) {
  reject_unknown(doc, {"threads", "population", "seed_profiles", "prices", "train", "scenario", "mc"}, "");
  read(doc, "threads", cfg.threads, "threads");

  if (doc.contains("population")) {
    const auto& d = doc["population"];
    auto& p = cfg.population;
    const std::string s = "population";
    reject_unknown(d, {"n_consumers", "n_groups", "seed", "income_low", "income_high", "level_jitter",
                       "hourly_jitter", "c1_mean", "c2_mean", "c_sigma", "gamma_shift", "gamma_reduce",
                       "reduce_up", "flex_income_corr"}, s);
    read(d, "n_consumers", p.n_consumers, s);
    read(d, "n_groups", p.n_groups, s);
    read(d, "seed", p.seed, s);
    read(d, "income_low", p.income_low, s);
    read(d, "income_high", p.income_high, s);
    read(d, "level_jitter", p.level_jitter, s);
    read(d, "hourly_jitter", p.hourly_jitter, s);
    read(d, "c1_mean", p.c1_mean, s);
    read(d, "c2_mean", p.c2_mean, s);
    read(d, "c_sigma", p.c_sigma, s);
    read(d, "gamma_shift", p.gamma_shift, s);
    read(d, "gamma_reduce", p.gamma_reduce, s);
    read(d, "reduce_up", p.reduce_up, s);
    read(d, "flex_income_corr", p.flex_income_corr, s);
  }
  if (doc.contains("seed_profiles")) {
    const auto& d = doc["seed_profiles"];
    const std::string s = "seed_profiles";
    reject_unknown(d, {"file", "count", "seed"}, s);
    read(d, "file", cfg.seed_profiles.file, s);
    read(d, "count", cfg.seed_profiles.count, s);
    read(d, "seed", cfg.seed_profiles.seed, s);
  }
  if (doc.contains("prices")) {
    const auto& d = doc["prices"];
    auto& p = cfg.prices;
    const std::string s = "prices";
    reject_unknown(d, {"wholesale_file", "days", "seed", "volatility", "hourly_volatility",
                       "hourly_correlation", "spike_prob", "spike_max", "train_fraction"}, s);
    read(d, "wholesale_file", p.wholesale_file, s);
    read(d, "days", p.days, s);
    read(d, "seed", p.seed, s);
    read(d, "volatility", p.day.volatility, s);
    read(d, "hourly_volatility", p.day.hourly_volatility, s);
    read(d, "hourly_correlation", p.day.hourly_correlation, s);
    read(d, "spike_prob", p.day.spike_prob, s);
    read(d, "spike_max", p.day.spike_max, s);
    read(d, "train_fraction", p.train_fraction, s);
  }
  if (doc.contains("train")) {
    const auto& d = doc["train"];
    auto& t = cfg.train;
    const std::string s = "train";
    reject_unknown(d, {"hidden", "activations", "output_activation", "learning_rate", "beta1", "beta2",
                       "adam_epsilon", "epochs", "batch_size", "patience", "seed"}, s);
    read(d, "hidden", t.hidden, s);
    if (d.contains("activations")) {
      if (!d["activations"].is_array()) throw ConfigError("config: 'train.activations' must be a list");
      t.activations.clear();
      for (const auto& a : d["activations"]) {
        if (!a.is_string()) throw ConfigError("config: 'train.activations' entries must be names");
        t.activations.push_back(activation_from_string(a.get<std::string>()));
      }
    }
    if (d.contains("output_activation")) {
      if (!d["output_activation"].is_string()) throw ConfigError("config: 'train.output_activation' must be a name");
      t.output_activation = activation_from_string(d["output_activation"].get<std::string>());
    }
    read(d, "learning_rate", t.learning_rate, s);
    read(d, "beta1", t.beta1, s);
    read(d, "beta2", t.beta2, s);
    read(d, "adam_epsilon", t.adam_epsilon, s);
    read(d, "epochs", t.epochs, s);
    read(d, "batch_size", t.batch_size, s);
    read(d, "patience", t.patience, s);
    read(d, "seed", t.seed, s);
  }
  if (doc.contains("scenario")) apply_scenario_json(cfg.scenario, doc["scenario"]);
  if (doc.contains("mc")) {
    const auto& d = doc["mc"];
    const std::string s = "mc";
    reject_unknown(d, {"trials", "seed", "variance_scale"}, s);
    read(d, "trials", cfg.mc.trials, s);
    read(d, "seed", cfg.mc.seed, s);
    read(d, "variance_scale", cfg.mc.variance_scale, s);
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, e.byte);
  }
}

Config load_config(const std::filesystem::path& path) {
  Config cfg;
  apply_json(cfg, read_json_file(path));
  cfg.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return cfg;
}

json to_json(const ScenarioSpec& spec) {
  const auto& b = spec.base;
  return {{"kind", to_string(spec.kind)},
          {"energy_burden_cap", b.energy_burden_cap},
          {"alpha", b.alpha},
          {"om_cost", b.om_cost},
          {"gradient_mode", to_string(b.gradient_mode)},
          {"barrier", barrier_json(b.barrier)},
          {"peak_count", spec.peak_count},
          {"beta", spec.beta},
          {"dr_confidence_z", spec.dr_confidence_z},
          {"surge_hours", hours_to_json(spec.surge_hours)},
          {"surge_multiplier", spec.surge_multiplier},
          {"mismatch_budget", spec.mismatch_budget}};
}

json to_json(const Config& cfg) {
  const auto& p = cfg.population;
  const auto& t = cfg.train;
  json acts = json::array();
  for (auto a : t.activations) acts.push_back(to_string(a));
  return {
      {"threads", cfg.threads},
      {"population",
       {{"n_consumers", p.n_consumers}, {"n_groups", p.n_groups}, {"seed", p.seed},
        {"income_low", p.income_low}, {"income_high", p.income_high}, {"level_jitter", p.level_jitter},
        {"hourly_jitter", p.hourly_jitter}, {"c1_mean", p.c1_mean}, {"c2_mean", p.c2_mean},
        {"c_sigma", p.c_sigma}, {"gamma_shift", p.gamma_shift}, {"gamma_reduce", p.gamma_reduce},
        {"reduce_up", p.reduce_up}, {"flex_income_corr", p.flex_income_corr}}},
      {"seed_profiles",
       {{"file", cfg.seed_profiles.file}, {"count", cfg.seed_profiles.count}, {"seed", cfg.seed_profiles.seed}}},
      {"prices",
       {{"wholesale_file", cfg.prices.wholesale_file}, {"days", cfg.prices.days}, {"seed", cfg.prices.seed},
        {"volatility", cfg.prices.day.volatility}, {"hourly_volatility", cfg.prices.day.hourly_volatility},
        {"hourly_correlation", cfg.prices.day.hourly_correlation}, {"spike_prob", cfg.prices.day.spike_prob},
        {"spike_max", cfg.prices.day.spike_max}, {"train_fraction", cfg.prices.train_fraction}}},
      {"train",
       {{"hidden", t.hidden}, {"activations", acts}, {"output_activation", to_string(t.output_activation)},
        {"learning_rate", t.learning_rate}, {"beta1", t.beta1}, {"beta2", t.beta2},
        {"adam_epsilon", t.adam_epsilon}, {"epochs", t.epochs}, {"batch_size", t.batch_size},
        {"patience", t.patience}, {"seed", t.seed}}},
      {"scenario", to_json(cfg.scenario)},
      {"mc", {{"trials", cfg.mc.trials}, {"seed", cfg.mc.seed}, {"variance_scale", cfg.mc.variance_scale}}},
  };
}

json to_json(const ScenarioConfig& cfg) {
  json surge = nullptr;
  if (cfg.surge) surge = {{"hours", hours_to_json(cfg.surge->hours)}, {"multiplier", cfg.surge->multiplier}};
  return {{"energy_burden_cap", cfg.energy_burden_cap},
          {"alpha", cfg.alpha},
          {"beta", cfg.beta},
          {"peak_hours", hours_to_json(cfg.peak_hours)},
          {"peak_margin", cfg.peak_margin},
          {"om_cost", cfg.om_cost},
          {"surge", surge},
          {"barrier", barrier_json(cfg.barrier)},
          {"gradient_mode", to_string(cfg.gradient_mode)}};
}

ScenarioConfig scenario_config_from_json(const json& doc) {
  const std::string s = "config";
  reject_unknown(doc, {"energy_burden_cap", "alpha", "beta", "peak_hours", "peak_margin", "om_cost",
                       "surge", "barrier", "gradient_mode"}, s);
  ScenarioConfig cfg;
  read(doc, "energy_burden_cap", cfg.energy_burden_cap, s);
  read(doc, "alpha", cfg.alpha, s);
  read(doc, "beta", cfg.beta, s);
  if (doc.contains("peak_hours")) cfg.peak_hours = hours_from_json(doc["peak_hours"], "config.peak_hours");
  read(doc, "peak_margin", cfg.peak_margin, s);
  read(doc, "om_cost", cfg.om_cost, s);
  if (doc.contains("surge") && !doc["surge"].is_null()) {
    SurgeSpec surge;
    surge.hours = hours_from_json(doc["surge"].at("hours"), "config.surge.hours");
    surge.multiplier = doc["surge"].at("multiplier").get<double>();
    cfg.surge = surge;
  }
  if (doc.contains("barrier")) apply_barrier(cfg.barrier, doc["barrier"]);
  if (doc.contains("gradient_mode")) cfg.gradient_mode = gradient_mode_from_string(doc["gradient_mode"].get<std::string>());
  return cfg;
}

}  // namespace eqtariff::cli
