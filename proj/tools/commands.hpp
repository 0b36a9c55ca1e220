#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace eqtariff::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitNotConverged = 4;
inline constexpr int kExitIo = 5;

struct SynthOptions {
  std::optional<std::size_t> consumers;
  std::optional<std::size_t> groups;
  std::optional<std::size_t> days;
};

struct TrainOptions {
  std::filesystem::path data;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<int> patience;
};

struct OptimizeOptions {
  std::filesystem::path models;
  std::optional<std::filesystem::path> scenario_file;
  std::optional<std::string> kind;
};

struct ValidateOptions {
  std::filesystem::path result;
};

struct McOptions {
  std::filesystem::path result;
  std::optional<std::size_t> trials;
  std::optional<double> variance_scale;
};

struct ReportOptions {
  std::vector<std::filesystem::path> validation;
  std::vector<std::filesystem::path> mc;
};

// Each command writes its manifest before returning; a nonzero return is an
// outcome code (non-convergence, budget failure), not an error.
int cmd_synth(const Config& cfg, const SynthOptions& opt, const std::filesystem::path& out);
int cmd_train(const Config& cfg, const TrainOptions& opt, const std::filesystem::path& out);
int cmd_optimize(const Config& cfg, const OptimizeOptions& opt, const std::filesystem::path& out);
int cmd_validate(const Config& cfg, const ValidateOptions& opt, const std::filesystem::path& out);
int cmd_mc(const Config& cfg, const McOptions& opt, const std::filesystem::path& out);
int cmd_report(const Config& cfg, const ReportOptions& opt, const std::filesystem::path& out);

}  // namespace eqtariff::cli
