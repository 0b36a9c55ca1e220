#include <iostream>

#include "CLI11.hpp"

#include "artifacts.hpp"
#include "commands.hpp"

using namespace eqtariff;
using namespace eqtariff::cli;

int main(int argc, char** argv) {
  CLI::App app{"Equitable day-ahead tariff design: synthesize, identify, optimize, validate."};
  app.set_version_flag("--version", std::string("eqtariff ") + kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
  app.add_option("--config", config_file, "JSON config overlaid on the built-in defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed: population s, prices s+1, train s+2, mc s+3");
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");
  app.add_option("--out", out, "Output directory (default: out/<command>)");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a population, price days and the grouped dataset");
  c_synth->add_option("--consumers", synth.consumers, "Number of consumers");
  c_synth->add_option("--groups", synth.groups, "Number of burden groups");
  c_synth->add_option("--days", synth.days, "Number of price days");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Fit one recurrent response model per group");
  c_train->add_option("--data", train.data, "synth output directory")->required();
  c_train->add_option("--epochs", train.epochs, "Training epochs");
  c_train->add_option("--lr", train.lr, "Adam learning rate");
  c_train->add_option("--batch-size", train.batch_size, "Mini-batch size (0 = full batch)");
  c_train->add_option("--patience", train.patience, "Early-stopping patience in epochs");

  OptimizeOptions optimize;
  auto* c_opt = app.add_subcommand("optimize", "Design group tariffs for a scenario");
  c_opt->add_option("--models", optimize.models, "train output directory")->required();
  c_opt->add_option("--scenario", optimize.scenario_file, "Scenario JSON (same keys as the config's scenario section)");
  c_opt->add_option("--kind", optimize.kind, "tariff_design, dr_event or price_surge");

  ValidateOptions validate;
  auto* c_val = app.add_subcommand("validate", "Test a designed tariff on every consumer with the agent model");
  c_val->add_option("--result", validate.result, "optimize output directory")->required();

  McOptions mc;
  auto* c_mc = app.add_subcommand("mc", "Monte-Carlo reliability of the peak caps");
  c_mc->add_option("--result", mc.result, "optimize output directory of a dr_event run")->required();
  c_mc->add_option("--trials", mc.trials, "Number of bootstrap trials");
  c_mc->add_option("--variance-scale", mc.variance_scale, "Residual variance multiplier");

  ReportOptions report;
  auto* c_rep = app.add_subcommand("report", "Collect validation and mc outputs into summary tables");
  c_rep->add_option("--validation", report.validation, "validate output directories");
  c_rep->add_option("--mc", report.mc, "mc output directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    Config cfg = config_file.empty() ? Config{} : load_config(config_file);
    if (seed) cfg.set_master_seed(*seed);
    if (threads) cfg.threads = *threads;

    const auto* sub = app.get_subcommands().front();
    const std::filesystem::path out_dir = out.empty() ? std::filesystem::path("out") / sub->get_name() : std::filesystem::path(out);
    if (sub == c_synth) return cmd_synth(cfg, synth, out_dir);
    if (sub == c_train) return cmd_train(cfg, train, out_dir);
    if (sub == c_opt) return cmd_optimize(cfg, optimize, out_dir);
    if (sub == c_val) return cmd_validate(cfg, validate, out_dir);
    if (sub == c_mc) return cmd_mc(cfg, mc, out_dir);
    return cmd_report(cfg, report, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kExitNotConverged;
  } catch (const StateError& e) {
    std::cerr << "missing dependency: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
