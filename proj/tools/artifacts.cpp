#include "artifacts.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "eqtariff/csv.hpp"

namespace eqtariff::cli {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_bytes(std::uint64_t& h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
}

void fnv_file(std::uint64_t& h, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for hashing");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    fnv_bytes(h, buf, static_cast<std::size_t>(in.gcount()));
  }
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string rel(const fs::path& path, const fs::path& base) {
  return fs::relative(fs::absolute(path), fs::absolute(base)).generic_string();
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

json profiles_json(const auto& profiles) {
  json arr = json::array();
  for (const auto& p : profiles) arr.push_back(p.vec());
  return arr;
}

template <typename T>
T get(const json& doc, const char* key, const fs::path& path) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": field '" + key + "': " + e.what(), 0, 0);
  }
}

json slacks_json(const Slacks& s) {
  return {{"revenue", s.revenue}, {"peak", s.peak}, {"min_price", s.min_price}, {"min_headroom", s.min_headroom}};
}

}  // namespace

std::string content_hash(const fs::path& path) {
  std::uint64_t h = kFnvOffset;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (!e.is_regular_file()) continue;
      const auto name = e.path().filename();
      if (name == "manifest.json" || name == "timings.csv") continue;
      files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(),
              [&](const fs::path& a, const fs::path& b) { return rel(a, path) < rel(b, path); });
    for (const auto& f : files) {
      const auto r = rel(f, path);
      fnv_bytes(h, r.data(), r.size() + 1);  // include the terminator as a separator
      fnv_file(h, f);
    }
  } else if (fs::is_regular_file(path)) {
    fnv_file(h, path);
  } else {
    throw StateError("missing input '" + path.string() + "'");
  }
  return hex(h);
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

Manifest::Manifest(std::string command, fs::path out_dir, const Config& cfg)
    : command_(std::move(command)), out_dir_(std::move(out_dir)), config_(to_json(cfg)) {}

void Manifest::input(const std::string& key, const fs::path& path) {
  inputs_[key] = {{"path", rel(path, out_dir_)}, {"hash", content_hash(path)}};
}

void Manifest::output(const fs::path& path) { outputs_.push_back(path); }

void Manifest::write() const {
  json outs = json::array();
  for (const auto& p : outputs_) outs.push_back({{"path", rel(p, out_dir_)}, {"hash", content_hash(p)}});
  json doc = {{"tool", "eqtariff"},
              {"version", kToolVersion},
              {"command", command_},
              {"config", config_},
              {"seeds",
               {{"population", config_["population"]["seed"]},
                {"prices", config_["prices"]["seed"]},
                {"train", config_["train"]["seed"]},
                {"mc", config_["mc"]["seed"]}}},
              {"inputs", inputs_},
              {"outputs", outs},
              {"timings", "timings.csv"}};
  for (const auto& [k, v] : extra_.items()) doc[k] = v;
  write_json(doc, out_dir_ / "manifest.json");
}

json read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) {
    throw StateError("'" + dir.string() + "' has no manifest.json; run the producing command first");
  }
  return read_json_file(path);
}

fs::path manifest_input(const fs::path& dir, const std::string& key) {
  const auto doc = read_manifest(dir);
  if (!doc.contains("inputs") || !doc["inputs"].contains(key)) {
    throw StateError("'" + dir.string() + "/manifest.json' records no '" + key + "' input");
  }
  const auto p = dir / doc["inputs"][key]["path"].get<std::string>();
  if (!fs::exists(p)) throw StateError("dependency '" + p.string() + "' is missing");
  return p.lexically_normal();
}

Config manifest_config(const fs::path& dir) {
  Config cfg;
  apply_json(cfg, read_manifest(dir).at("config"));
  return cfg;
}

void Timings::write(const fs::path& dir) const {
  csv::Writer w(dir / "timings.csv");
  w.header({"step", "seconds"});
  for (const auto& [step, s] : rows_) {
    const std::string text[] = {step};
    const double v[] = {s};
    w.row(text, v);
  }
  w.close();
}

void save_population(const Population& pop, const fs::path& path) {
  json consumers = json::array();
  for (const auto& c : pop.consumers) {
    const auto& f = c.flex();
    consumers.push_back({{"id", c.id()},
                         {"annual_income", c.annual_income()},
                         {"baseline", c.baseline().vec()},
                         {"c1", f.c1},
                         {"c2", f.c2},
                         {"shift_lo", f.shift_lo},
                         {"shift_hi", f.shift_hi},
                         {"reduce_lo", f.reduce_lo},
                         {"reduce_hi", f.reduce_hi}});
  }
  json groups = json::array();
  for (const auto& g : pop.groups) {
    groups.push_back({{"id", g.id},
                      {"members", g.members},
                      {"avg_baseline", g.avg_baseline.vec()},
                      {"avg_daily_income", g.avg_daily_income}});
  }
  write_json({{"format", "eqtariff-population"},
              {"version", 1},
              {"reference_price", pop.reference_price.vec()},
              {"consumers", consumers},
              {"baseline", profiles_json(pop.baseline)},
              {"groups", groups}},
             path);
}

Population load_population(const fs::path& path) {
  if (!fs::exists(path)) throw StateError("population file '" + path.string() + "' is missing");
  const json doc = read_json_file(path);
  if (doc.value("format", "") != "eqtariff-population") {
    throw ParseError(path.string() + ": not a population file", 0, 0);
  }
  try {
    Population pop;
    pop.reference_price = PriceProfile(doc.at("reference_price").get<std::vector<double>>());
    for (const auto& c : doc.at("consumers")) {
      FlexParams f;
      f.c1 = c.at("c1").get<double>();
      f.c2 = c.at("c2").get<double>();
      f.shift_lo = c.at("shift_lo").get<std::vector<double>>();
      f.shift_hi = c.at("shift_hi").get<std::vector<double>>();
      f.reduce_lo = c.at("reduce_lo").get<std::vector<double>>();
      f.reduce_hi = c.at("reduce_hi").get<std::vector<double>>();
      pop.consumers.emplace_back(c.at("id").get<std::size_t>(), c.at("annual_income").get<double>(),
                                 DemandProfile(c.at("baseline").get<std::vector<double>>()), std::move(f));
    }
    for (const auto& b : doc.at("baseline")) pop.baseline.emplace_back(b.get<std::vector<double>>());
    for (const auto& g : doc.at("groups")) {
      Group grp;
      grp.id = g.at("id").get<std::size_t>();
      grp.members = g.at("members").get<std::vector<std::size_t>>();
      grp.avg_baseline = DemandProfile(g.at("avg_baseline").get<std::vector<double>>());
      grp.avg_daily_income = g.at("avg_daily_income").get<double>();
      pop.groups.push_back(std::move(grp));
    }
    for (std::size_t i = 0; i < pop.consumers.size(); ++i) {
      if (pop.consumers[i].id() != i) throw ParseError(path.string() + ": consumer ids out of order", 0, 0);
    }
    if (pop.baseline.size() != pop.consumers.size()) {
      throw ParseError(path.string() + ": one baseline per consumer expected", 0, 0);
    }
    for (const auto& g : pop.groups) {
      for (auto id : g.members) {
        if (id >= pop.consumers.size()) throw ParseError(path.string() + ": group member out of range", 0, 0);
      }
    }
    return pop;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, 0);
  } catch (const DomainError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, 0);
  } catch (const ShapeError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, 0);
  }
}

void save_residuals(const std::vector<std::vector<double>>& residuals, const fs::path& path) {
  csv::Writer w(path);
  w.header(csv::numbered("h", residuals.empty() ? 0 : residuals.front().size()));
  for (const auto& r : residuals) w.row(r);
  w.close();
}

ResidualPool load_residual_pool(const fs::path& models_dir, std::size_t n_groups) {
  ResidualPool pool;
  for (std::size_t n = 1; n <= n_groups; ++n) {
    const auto path = models_dir / "residuals" / ("group_" + std::to_string(n) + ".csv");
    if (!fs::exists(path)) throw StateError("residuals '" + path.string() + "' are missing; rerun train");
    pool.push_back(csv::read_numeric_rows(path));
  }
  return pool;
}

void save_design(const ScenarioRun& run, const fs::path& dir) {
  const auto& r = run.result;
  const auto& o = r.objective;
  json doc = {{"format", "eqtariff-result"},
              {"version", 1},
              {"scenario", to_json(run.spec)},
              {"config", to_json(run.config)},
              {"wholesale", run.wholesale.vec()},
              {"prices", profiles_json(r.prices)},
              {"predicted_dd", profiles_json(r.predicted_dd)},
              {"predicted_demand", profiles_json(r.predicted_demand)},
              {"objective",
               {{"burden", o.burden},
                {"deviation", o.deviation},
                {"total", o.total()},
                {"group_burden", o.group_burden},
                {"group_deviation", o.group_deviation},
                {"group_energy_burden", o.group_energy_burden}}},
              {"slacks", slacks_json(r.slacks)},
              {"converged", r.converged},
              {"stalled", r.stalled},
              {"final_mu", r.final_mu},
              {"barrier_terms", r.barrier_terms},
              {"kappa_all", r.kappa_all},
              {"kappa_peak", r.kappa_peak}};
  write_json(doc, dir / "result.json");

  csv::Writer w(dir / "trace.csv");
  std::vector<std::string> head = {"direction", "outer", "inner", "mu", "objective", "barrier",
                                   "grad_norm", "step", "slack_revenue", "min_price", "min_headroom"};
  for (auto& name : csv::numbered("slack_peak_", run.config.peak_hours.size())) head.push_back(name);
  w.header(head);
  for (const auto& t : r.trace) {
    std::vector<double> v = {static_cast<double>(t.outer), static_cast<double>(t.inner), t.mu, t.objective,
                             t.barrier, t.grad_norm, t.step, t.slacks.revenue, t.slacks.min_price,
                             t.slacks.min_headroom};
    for (double s : t.slacks.peak) v.push_back(s);
    const std::string text[] = {t.direction};
    w.row(text, v);
  }
  w.close();
}

ScenarioRun load_design(const fs::path& dir) {
  const auto path = dir / "result.json";
  if (!fs::exists(path)) throw StateError("'" + dir.string() + "' has no result.json; run optimize first");
  const json doc = read_json_file(path);
  if (doc.value("format", "") != "eqtariff-result") throw ParseError(path.string() + ": not a result file", 0, 0);
  try {
    ScenarioRun run;
    apply_scenario_json(run.spec, doc.at("scenario"));
    run.config = scenario_config_from_json(doc.at("config"));
    run.wholesale = PriceProfile(doc.at("wholesale").get<std::vector<double>>());
    auto& r = run.result;
    for (const auto& p : doc.at("prices")) r.prices.emplace_back(p.get<std::vector<double>>());
    for (const auto& p : doc.at("predicted_dd")) r.predicted_dd.push_back(DemandProfile::change(p.get<std::vector<double>>()));
    for (const auto& p : doc.at("predicted_demand")) {
      r.predicted_demand.push_back(DemandProfile::change(p.get<std::vector<double>>()));
    }
    const auto& o = doc.at("objective");
    r.objective.burden = get<double>(o, "burden", path);
    r.objective.deviation = get<double>(o, "deviation", path);
    r.objective.group_burden = get<std::vector<double>>(o, "group_burden", path);
    r.objective.group_deviation = get<std::vector<double>>(o, "group_deviation", path);
    r.objective.group_energy_burden = get<std::vector<double>>(o, "group_energy_burden", path);
    const auto& s = doc.at("slacks");
    r.slacks.revenue = get<double>(s, "revenue", path);
    r.slacks.peak = get<std::vector<double>>(s, "peak", path);
    r.slacks.min_price = get<double>(s, "min_price", path);
    r.slacks.min_headroom = get<double>(s, "min_headroom", path);
    r.converged = get<bool>(doc, "converged", path);
    r.stalled = get<bool>(doc, "stalled", path);
    r.final_mu = get<double>(doc, "final_mu", path);
    r.barrier_terms = get<std::size_t>(doc, "barrier_terms", path);
    r.kappa_all = get<double>(doc, "kappa_all", path);
    r.kappa_peak = get<double>(doc, "kappa_peak", path);
    return run;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, 0);
  }
}

void save_validation(const ValidationReport& rep, const fs::path& path) {
  json groups = json::array();
  for (const auto& g : rep.groups) {
    const auto& q = g.tested_members;
    groups.push_back({{"group", g.group},
                      {"income", g.income},
                      {"baseline_burden", g.baseline_burden},
                      {"predicted_burden", g.predicted_burden},
                      {"tested_burden", g.tested_burden},
                      {"tested_members", {q.min, q.q1, q.median, q.q3, q.max}}});
  }
  json peaks = json::array();
  for (const auto& p : rep.peaks) {
    peaks.push_back({{"hour", p.hour + 1},
                     {"baseline", p.baseline},
                     {"cap", p.cap},
                     {"predicted", p.predicted},
                     {"tested", p.tested}});
  }
  write_json({{"format", "eqtariff-validation"},
              {"version", 1},
              {"groups", groups},
              {"om_cost", rep.om_cost},
              {"revenue_baseline", rep.revenue_baseline},
              {"revenue_required", rep.revenue_required()},
              {"revenue_predicted", rep.revenue_predicted},
              {"revenue_tested", rep.revenue_tested},
              {"tested_revenue_margin", rep.tested_revenue_margin()},
              {"peaks", peaks},
              {"max_burden_gap", rep.max_burden_gap},
              {"max_burden_gap_rel", rep.max_burden_gap_rel},
              {"revenue_gap_rel", rep.revenue_gap_rel}},
             path);
}

}  // namespace eqtariff::cli
