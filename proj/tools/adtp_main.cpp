// adtp: command-line front end.
//
//   adtp preprocess|synth|train|detect|predict|eval --config PATH [--set key=value ...]
//
// Exit codes: 0 success, 1 usage, 2 configuration error, 3 data error,
// 4 numeric failure.

#include "adtp/commands.hpp"
#include "adtp/config.hpp"
#include "adtp/errors.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Joint anomaly detection and trend prediction for operation KPIs"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  for (const auto& name : adtp::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config,-c", config_path, "key = value configuration file");
    sub->add_option("--set,-s", overrides, "override a configuration key (key=value)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    adtp::ConfigEntries file;
    if (!config_path.empty()) file = adtp::read_config_file(config_path);
    adtp::ConfigEntries set;
    for (const auto& o : overrides) set.push_back(adtp::parse_override(o));
    const adtp::PipelineConfig config = adtp::resolve_config(file, set);
    adtp::run_command(app.get_subcommands().front()->get_name(), config, std::cout);
  } catch (const adtp::Error& e) {
    std::cerr << "adtp: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "adtp: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
