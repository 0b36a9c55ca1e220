#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "artifacts.hpp"
#include "eqtariff/csv.hpp"
#include "eqtariff/parallel.hpp"

namespace eqtariff::cli {

namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string group_dir(std::size_t n) { return "group_" + std::to_string(n); }

std::vector<DemandProfile> seed_profiles(const Config& cfg) {
  if (cfg.seed_profiles.file.empty()) {
    return synthetic_seed_profiles(cfg.seed_profiles.count, cfg.seed_profiles.seed);
  }
  return ingest_demand_csv(cfg.resolve(cfg.seed_profiles.file));
}

PriceProfile wholesale_profile(const Config& cfg) {
  if (cfg.prices.wholesale_file.empty()) return default_wholesale_profile();
  const auto days = ingest_price_csv(cfg.resolve(cfg.prices.wholesale_file));
  if (days.empty()) throw ConfigError("wholesale file '" + cfg.prices.wholesale_file + "' has no rows");
  return days.front();
}

void write_group_rows(const fs::path& path, const std::vector<DemandProfile>& rows) {
  csv::Writer w(path);
  std::vector<std::string> head = {"group"};
  for (auto& h : csv::numbered("h", rows.empty() ? 0 : rows.front().size())) head.push_back(h);
  w.header(head);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    std::vector<double> v = {static_cast<double>(n + 1)};
    v.insert(v.end(), rows[n].vec().begin(), rows[n].vec().end());
    w.row(v);
  }
  w.close();
}

struct LoadedModels {
  std::vector<RnnModel> models;
  std::vector<const DemandResponseModel*> ptrs;
};

LoadedModels load_models(const fs::path& dir, std::size_t n_groups) {
  LoadedModels out;
  out.models.reserve(n_groups);
  for (std::size_t n = 1; n <= n_groups; ++n) {
    const auto path = dir / (group_dir(n) + ".json");
    if (!fs::exists(path)) throw StateError("model checkpoint '" + path.string() + "' is missing; run train first");
    out.models.push_back(load_model(path));
  }
  for (const auto& m : out.models) out.ptrs.push_back(&m);
  return out;
}

// Minimal reader for the metric tables: comma-separated, no quoting.
std::vector<std::vector<std::string>> read_text_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StateError("'" + path.string() + "' is missing");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

int cmd_synth(const Config& base, const SynthOptions& opt, const fs::path& out) {
  Config cfg = base;
  if (opt.consumers) cfg.population.n_consumers = *opt.consumers;
  if (opt.groups) cfg.population.n_groups = *opt.groups;
  if (opt.days) cfg.prices.days = *opt.days;
  cfg.population.validate();
  cfg.prices.day.validate();
  if (cfg.prices.days == 0) throw ConfigError("prices.days must be positive");
  if (!(cfg.prices.train_fraction > 0.0 && cfg.prices.train_fraction < 1.0)) {
    throw ConfigError("prices.train_fraction must lie in (0, 1)");
  }

  prepare_out_dir(out);
  Timings timings;
  Stopwatch clock;
  Manifest manifest("synth", out, cfg);
  if (!cfg.seed_profiles.file.empty()) manifest.input("seed_profiles", cfg.resolve(cfg.seed_profiles.file));
  if (!cfg.prices.wholesale_file.empty()) manifest.input("wholesale_source", cfg.resolve(cfg.prices.wholesale_file));

  const auto wholesale = wholesale_profile(cfg);
  const auto pop = gen_population(cfg.population, seed_profiles(cfg), wholesale, cfg.threads);
  timings.add("population", clock.lap());
  const auto days = gen_price_days(cfg.prices.days, cfg.prices.seed, wholesale, cfg.prices.day);
  const auto dataset = build_dataset(pop, days, cfg.prices.train_fraction, cfg.threads);
  timings.add("dataset", clock.lap());

  save_population(pop, out / "population.json");
  const std::vector<std::vector<double>> w_rows = {wholesale.vec()};
  write_profiles_csv(out / "wholesale.csv", w_rows);
  write_dataset(dataset, out / "dataset");
  timings.add("write", clock.lap());

  manifest.output(out / "population.json");
  manifest.output(out / "wholesale.csv");
  manifest.output(out / "dataset");
  json norms = json::array();
  for (const auto& g : dataset.groups) {
    const auto st = g.norm_stats();
    norms.push_back({{"group", g.group_id},
                     {"price_mean", st.price_mean},
                     {"price_std", st.price_std},
                     {"dd_mean", st.dd_mean},
                     {"dd_std", st.dd_std}});
  }
  manifest.note("normalization", norms);
  manifest.note("dataset", {{"groups", pop.groups.size()},
                            {"horizon", pop.horizon()},
                            {"days", cfg.prices.days},
                            {"train_fraction", cfg.prices.train_fraction}});
  manifest.write();
  timings.write(out);
  std::cout << "synth: " << pop.consumers.size() << " consumers in " << pop.groups.size() << " groups, "
            << cfg.prices.days << " price days -> " << out.string() << '\n';
  return kExitOk;
}

int cmd_train(const Config& base, const TrainOptions& opt, const fs::path& out) {
  Config cfg = base;
  if (opt.epochs) cfg.train.epochs = *opt.epochs;
  if (opt.lr) cfg.train.learning_rate = *opt.lr;
  if (opt.batch_size) cfg.train.batch_size = *opt.batch_size;
  if (opt.patience) cfg.train.patience = *opt.patience;
  cfg.train.validate();

  const auto synth = read_manifest(opt.data);
  if (synth.value("command", "") != "synth" || !synth.contains("dataset")) {
    throw StateError("'" + opt.data.string() + "' is not a synth output directory");
  }
  const auto& info = synth["dataset"];
  const auto n_groups = info.at("groups").get<std::size_t>();
  const auto horizon = info.at("horizon").get<std::size_t>();
  const auto fraction = info.at("train_fraction").get<double>();
  const auto dataset_dir = opt.data / "dataset";
  if (!fs::exists(dataset_dir)) throw StateError("dataset '" + dataset_dir.string() + "' is missing; rerun synth");

  prepare_out_dir(out);
  Timings timings;
  Stopwatch clock;
  Manifest manifest("train", out, cfg);
  manifest.input("dataset", dataset_dir);
  manifest.input("population", opt.data / "population.json");

  const auto dataset = read_dataset(dataset_dir, n_groups, horizon, fraction);
  timings.add("read_dataset", clock.lap());

  std::vector<TrainedModel> trained(n_groups);
  std::vector<double> seconds(n_groups, 0.0);
  parallel_for(n_groups, cfg.threads, [&](std::size_t n) {
    Stopwatch sw;
    trained[n] = train(dataset.groups[n], cfg.train);
    seconds[n] = sw.lap();
  });
  for (std::size_t n = 0; n < n_groups; ++n) timings.add("train_" + group_dir(n + 1), seconds[n]);

  fs::create_directories(out / "residuals");
  csv::Writer report(out / "training_report.csv");
  report.header({"group", "epochs_run", "best_epoch", "stopped_early", "final_train_mse", "val_mse",
                 "val_rmse_kwh", "val_mape"});
  for (std::size_t n = 0; n < n_groups; ++n) {
    const auto& tm = trained[n];
    const auto& r = tm.report;
    const auto name = group_dir(n + 1);
    save_model(tm.model, out / (name + ".json"));
    manifest.output(out / (name + ".json"));

    csv::Writer loss(out / ("loss_" + name + ".csv"));
    loss.header({"epoch", "train_mse", "val_mse"});
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
      const double val = e < r.val_loss.size() ? r.val_loss[e] : std::numeric_limits<double>::quiet_NaN();
      loss.row({static_cast<double>(e), r.train_loss[e], val});
    }
    loss.close();
    manifest.output(out / ("loss_" + name + ".csv"));

    save_residuals(r.residuals, out / "residuals" / (name + ".csv"));
    const double final_train = r.train_loss.empty() ? std::numeric_limits<double>::quiet_NaN() : r.train_loss.back();
    report.row({static_cast<double>(n + 1), static_cast<double>(r.epochs_run), static_cast<double>(r.best_epoch),
                r.stopped_early ? 1.0 : 0.0, final_train, r.val_mse, r.val_rmse, r.val_mape});
    std::cout << "train: " << name << " val_mse " << r.val_mse << " rmse " << r.val_rmse << " kWh\n";
  }
  report.close();
  manifest.output(out / "training_report.csv");
  manifest.output(out / "residuals");
  manifest.note("models", {{"groups", n_groups}, {"horizon", horizon}});
  timings.add("write", clock.lap());
  manifest.write();
  timings.write(out);
  return kExitOk;
}

int cmd_optimize(const Config& base, const OptimizeOptions& opt, const fs::path& out) {
  Config cfg = base;
  if (opt.scenario_file) apply_scenario_json(cfg.scenario, read_json_file(*opt.scenario_file));
  if (opt.kind) cfg.scenario.kind = scenario_kind_from_string(*opt.kind);

  const auto trained = read_manifest(opt.models);
  if (trained.value("command", "") != "train") {
    throw StateError("'" + opt.models.string() + "' is not a train output directory");
  }
  const auto pop_path = manifest_input(opt.models, "population");
  const auto pop = load_population(pop_path);
  cfg.scenario.validate(pop.horizon());

  prepare_out_dir(out);
  Timings timings;
  Stopwatch clock;
  Manifest manifest("optimize", out, cfg);
  manifest.input("models", opt.models);
  manifest.input("population", pop_path);
  if (opt.scenario_file) manifest.input("scenario_file", *opt.scenario_file);

  const auto loaded = load_models(opt.models, pop.groups.size());
  const auto pool = load_residual_pool(opt.models, pop.groups.size());
  timings.add("load", clock.lap());

  auto run = design_tariffs(cfg.scenario, pop, loaded.ptrs, pop.reference_price, &pool);
  timings.add("solve", clock.lap());

  save_design(run, out);
  write_group_rows(out / "prices.csv",
                   [&] {
                     std::vector<DemandProfile> rows;
                     for (const auto& p : run.result.prices) rows.emplace_back(p.vec());
                     return rows;
                   }());
  write_group_rows(out / "demand.csv", run.result.predicted_demand);
  for (const char* f : {"result.json", "trace.csv", "prices.csv", "demand.csv"}) manifest.output(out / f);
  manifest.note("outcome", {{"converged", run.result.converged}, {"stalled", run.result.stalled}});
  manifest.write();
  timings.write(out);

  const auto& r = run.result;
  std::cout << "optimize: " << to_string(run.spec.kind) << (r.converged ? " converged" : " did not converge")
            << (r.stalled ? " (inner stall)" : "") << ", objective " << r.objective.total() << ", revenue slack "
            << r.slacks.revenue << '\n';
  if (!r.converged) {
    std::cerr << "error: barrier method did not close the duality gap within max_outer\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_validate(const Config& base, const ValidateOptions& opt, const fs::path& out) {
  Config cfg = base;
  read_manifest(opt.result);
  const auto pop_path = manifest_input(opt.result, "population");
  const auto pop = load_population(pop_path);
  auto run = load_design(opt.result);

  prepare_out_dir(out);
  Timings timings;
  Stopwatch clock;
  cfg.scenario = run.spec;
  Manifest manifest("validate", out, cfg);
  manifest.input("result", opt.result / "result.json");
  manifest.input("population", pop_path);

  validate_run(run, pop, cfg.threads);
  timings.add("validate", clock.lap());

  save_validation(run.report, out / "validation.json");
  write_run_csvs(run, out);
  for (const char* f : {"validation.json", "metrics.csv", "burden_by_group.csv", "tariff_by_hour.csv",
                        "peak_reduction.csv"}) {
    manifest.output(out / f);
  }
  const bool ok = run.report.within_budget(run.spec.mismatch_budget);
  manifest.note("scenario_kind", to_string(run.spec.kind));
  manifest.note("outcome", {{"converged", run.result.converged}, {"within_budget", ok}});
  manifest.write();
  timings.write(out);

  const auto& rep = run.report;
  std::cout << "validate: revenue margin " << 100.0 * rep.tested_revenue_margin() << "%, max burden gap "
            << rep.max_burden_gap << " (" << 100.0 * rep.max_burden_gap_rel << "%), revenue gap "
            << 100.0 * rep.revenue_gap_rel << "%\n";
  if (!ok) {
    std::cerr << "error: tested outcome is outside the " << 100.0 * run.spec.mismatch_budget
              << "% mismatch budget\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_mc(const Config& base, const McOptions& opt, const fs::path& out) {
  Config cfg = base;
  if (opt.trials) cfg.mc.trials = *opt.trials;
  if (opt.variance_scale) cfg.mc.variance_scale = *opt.variance_scale;
  if (cfg.mc.trials == 0) throw ConfigError("mc.trials must be positive");
  if (!(cfg.mc.variance_scale >= 0.0)) throw ConfigError("mc.variance_scale must be non-negative");

  read_manifest(opt.result);
  const auto pop_path = manifest_input(opt.result, "population");
  const auto models_dir = manifest_input(opt.result, "models");
  const auto pop = load_population(pop_path);
  const auto run = load_design(opt.result);
  if (run.config.peak_hours.empty()) {
    throw ConfigError("mc needs a dr_event result; '" + opt.result.string() + "' has no peak hours");
  }
  const auto pool = load_residual_pool(models_dir, pop.groups.size());

  prepare_out_dir(out);
  Timings timings;
  Stopwatch clock;
  cfg.scenario = run.spec;
  Manifest manifest("mc", out, cfg);
  manifest.input("result", opt.result / "result.json");
  manifest.input("population", pop_path);
  manifest.input("residuals", models_dir / "residuals");

  const auto mc = reliability_mc(run.result, pop, run.config, pool, cfg.mc.trials, cfg.mc.seed, cfg.threads,
                                 std::sqrt(cfg.mc.variance_scale));
  timings.add("monte_carlo", clock.lap());
  write_reliability_csvs(mc, out);
  manifest.output(out / "reliability.csv");
  manifest.output(out / "reliability_samples.csv");
  manifest.write();
  timings.write(out);

  std::cout << "mc: " << mc.trials << " trials";
  for (std::size_t k = 0; k < mc.hours.size(); ++k) {
    std::cout << ", hour " << mc.hours[k] + 1 << ' ' << 100.0 * mc.success_rate[k] << '%';
  }
  std::cout << '\n';
  return kExitOk;
}

int cmd_report(const Config& cfg, const ReportOptions& opt, const fs::path& out) {
  if (opt.validation.empty() && opt.mc.empty()) throw ConfigError("report needs --validation or --mc directories");

  for (const auto& dir : opt.validation) read_manifest(dir);
  for (const auto& dir : opt.mc) read_manifest(dir);

  prepare_out_dir(out);
  Manifest manifest("report", out, cfg);
  csv::Writer summary(out / "summary.csv");
  summary.header({"source", "kind", "metric", "key", "value"});
  std::ostringstream md;
  md << std::setprecision(6);
  md << "# Tariff design report\n";

  for (std::size_t i = 0; i < opt.validation.size(); ++i) {
    const auto& dir = opt.validation[i];
    const auto doc = read_manifest(dir);
    if (doc.value("command", "") != "validate") throw StateError("'" + dir.string() + "' is not a validate output");
    const std::string kind = doc.value("scenario_kind", "");
    const std::string source = "validation_" + std::to_string(i + 1);
    manifest.input(source, dir);
    std::map<std::string, std::string> totals;
    const auto rows = read_text_rows(dir / "metrics.csv");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != 3) throw ParseError((dir / "metrics.csv").string() + ": expected 3 columns", r + 1, 0);
      summary.row(std::vector<std::string>{source, kind, rows[r][0], rows[r][1]},
                  std::vector<double>{std::stod(rows[r][2])});
      if (rows[r][1].empty()) totals[rows[r][0]] = rows[r][2];
    }
    md << "\n## " << source << " (" << kind << ")\n\n| metric | value |\n|---|---|\n";
    for (const auto& [k, v] : totals) md << "| " << k << " | " << v << " |\n";

    const auto burden = read_text_rows(dir / "burden_by_group.csv");
    md << "\n| group | baseline burden | predicted | tested |\n|---|---|---|---|\n";
    for (std::size_t r = 1; r < burden.size(); ++r) {
      md << "| " << burden[r][0] << " | " << burden[r][2] << " | " << burden[r][3] << " | " << burden[r][4]
         << " |\n";
    }
  }

  for (std::size_t i = 0; i < opt.mc.size(); ++i) {
    const auto& dir = opt.mc[i];
    const auto doc = read_manifest(dir);
    if (doc.value("command", "") != "mc") throw StateError("'" + dir.string() + "' is not an mc output");
    const std::string source = "mc_" + std::to_string(i + 1);
    manifest.input(source, dir);
    const auto rows = read_text_rows(dir / "reliability.csv");
    md << "\n## " << source << "\n\n| hour | cap | predicted | success rate | trials |\n|---|---|---|---|---|\n";
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != 5) throw ParseError((dir / "reliability.csv").string() + ": expected 5 columns", r + 1, 0);
      summary.row(std::vector<std::string>{source, "dr_event", "success_rate", "hour_" + rows[r][0]},
                  std::vector<double>{std::stod(rows[r][3])});
      md << "| " << rows[r][0] << " | " << rows[r][1] << " | " << rows[r][2] << " | " << rows[r][3] << " | "
         << rows[r][4] << " |\n";
    }
  }
  summary.close();

  {
    std::ofstream f(out / "report.md");
    if (!f) throw IoError("cannot write '" + (out / "report.md").string() + "'");
    f << md.str();
  }
  manifest.output(out / "summary.csv");
  manifest.output(out / "report.md");
  manifest.write();
  Timings{}.write(out);
  std::cout << "report: " << (out / "report.md").string() << '\n';
  return kExitOk;
}

}  // namespace eqtariff::cli
