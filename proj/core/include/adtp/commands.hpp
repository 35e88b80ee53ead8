#pragma once

#include "adtp/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace adtp {

/// Commands read `config.data`, write into `config.out_dir` and report
/// progress on `log`. Failures surface as adtp::Error subclasses.
///
/// Files per series (ids are made filename-safe):
///   preprocess  <id>.repaired.csv, <id>.normalized.csv
///   train       <id>.model, <id>.ckpt, <id>.train_log.csv, train_config.txt
///   detect      <id>.flags.csv
///   predict     <id>.predictions.csv
///   eval        report.csv
///   synth       synth_output (default out_dir/synthetic.csv)
void cmd_preprocess(const PipelineConfig& config, std::ostream& log);
void cmd_synth(const PipelineConfig& config, std::ostream& log);
void cmd_train(const PipelineConfig& config, std::ostream& log);
void cmd_detect(const PipelineConfig& config, std::ostream& log);
void cmd_predict(const PipelineConfig& config, std::ostream& log);
void cmd_eval(const PipelineConfig& config, std::ostream& log);

const std::vector<std::string>& command_names();

/// Dispatches by name; throws ConfigError for unknown commands.
void run_command(const std::string& name, const PipelineConfig& config, std::ostream& log);

/// Replaces characters outside [A-Za-z0-9._-] with '_'.
std::string file_stem(const std::string& series_id);

} // namespace adtp
