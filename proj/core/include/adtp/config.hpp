#pragma once

#include "adtp/evaluation.hpp"
#include "adtp/series.hpp"
#include "adtp/synth.hpp"
#include "adtp/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace adtp {

/// Everything a CLI command needs. Zero-valued `fill_limit`, `period` and
/// `delay` mean "granularity default"; an unset `k` means "sweep".
struct PipelineConfig {
  TrainConfig train;

  std::string data;
  std::filesystem::path out_dir = "adtp_out";
  std::filesystem::path model_dir;  // empty: out_dir
  std::optional<Granularity> granularity;
  std::size_t fill_limit = 0;
  std::size_t period = 0;
  std::size_t delay = 0;

  std::optional<double> k;
  double k_min = 0.5;
  double k_max = 10.0;
  double k_step = 0.25;
  SigmaPopulation sigma_population = SigmaPopulation::train;

  std::size_t checkpoint_every = 0;
  bool resume = false;

  SyntheticSpec synth;
  std::filesystem::path synth_output;  // empty: out_dir/synthetic.csv

  std::filesystem::path models() const { return model_dir.empty() ? out_dir : model_dir; }
  void validate() const;
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Dataset-level hyperparameters. kpi: w0=120, h_l=100, K=3, h=100, D0=4.1,
/// beta=0.01, lambda=1, L=256. yahoo: w0=30, h_l=24, K=8, h=24, D0=3.1,
/// beta=0.01, lambda=10, L=256.
PipelineConfig regime_preset(DatasetRegime regime);
DatasetRegime regime_from_string(const std::string& s);

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
/// Throws ConfigError naming the line on malformed input.
ConfigEntries parse_config(std::istream& in, const std::string& source = "<config>");
ConfigEntries read_config_file(const std::filesystem::path& path);

/// Splits a `key=value` override.
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Sets one key; throws ConfigError on unknown keys or bad values.
void apply_entry(PipelineConfig& config, const std::string& key, const std::string& value);

/// Resolves precedence: overrides > file entries > regime preset > defaults.
/// The regime itself is taken from the highest-precedence `regime` entry.
PipelineConfig resolve_config(const ConfigEntries& file, const ConfigEntries& overrides);

/// Canonical `key = value` listing of every setting, one per line.
std::string describe(const PipelineConfig& config);

/// FNV-1a of the settings that affect the trained model.
std::string config_hash(const PipelineConfig& config);

} // namespace adtp
