#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "eqtariff/scenarios.hpp"

namespace eqtariff::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a 64 of a file, or of every file under a directory (sorted by
/// relative path, skipping manifest.json and timings.csv), as 16 hex digits.
std::string content_hash(const fs::path& path);

/// Creates `dir`, failing with IoError when it cannot be written.
void prepare_out_dir(const fs::path& dir);

/// manifest.json: command, tool version, config snapshot, seeds, inputs and
/// outputs with hashes. Paths are relative to the output directory.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir, const Config& cfg);

  void input(const std::string& key, const fs::path& path);
  void output(const fs::path& path);
  void note(const std::string& key, json value) { extra_[key] = std::move(value); }
  void write() const;

 private:
  std::string command_;
  fs::path out_dir_;
  json config_;
  json inputs_ = json::object();
  std::vector<fs::path> outputs_;
  json extra_ = json::object();
};

json read_manifest(const fs::path& dir);
/// Path recorded under inputs.<key> in dir/manifest.json, resolved against dir.
/// StateError naming the missing dependency otherwise.
fs::path manifest_input(const fs::path& dir, const std::string& key);
/// Config snapshot stored in dir/manifest.json.
Config manifest_config(const fs::path& dir);

/// Wall-clock step timings, kept out of the manifest so reruns compare equal.
class Timings {
 public:
  void add(std::string step, double seconds) { rows_.emplace_back(std::move(step), seconds); }
  void write(const fs::path& dir) const;

 private:
  std::vector<std::pair<std::string, double>> rows_;
};

void save_population(const Population& pop, const fs::path& path);
Population load_population(const fs::path& path);

void save_residuals(const std::vector<std::vector<double>>& residuals, const fs::path& path);
ResidualPool load_residual_pool(const fs::path& models_dir, std::size_t n_groups);

/// result.json (spec, resolved config, effective wholesale, solution) and trace.csv.
void save_design(const ScenarioRun& run, const fs::path& dir);
/// Inverse of save_design; the trace is not reloaded.
ScenarioRun load_design(const fs::path& dir);

void save_validation(const ValidationReport& rep, const fs::path& path);

}  // namespace eqtariff::cli
