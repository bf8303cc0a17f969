// Experiment harness for the neuroplastic-expansion TD3 engine.
//
//   ne_cli run --config cfg [--seed N[,M..]] [--mode M[,..]] [--out DIR] [--jobs J]
//   ne_cli report --glob 'runs/*/seed_*' [--out DIR]
//   ne_cli validate --config cfg
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <CLI11.hpp>
#include <iostream>

#include "ne/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Dynamic-sparse TD3 training harness (neuroplastic expansion)"};
  app.require_subcommand(1);

  std::string config_path, seed_override, mode_override, out_override;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "train one or more runs");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--seed", seed_override, "seed or comma list, overrides file");
  run->add_option("--mode", mode_override, "mode or comma list, overrides file");
  run->add_option("--out", out_override, "output directory, overrides file");
  run->add_option("--jobs", jobs, "parallel runs (independent instances)");

  std::string glob_pattern, report_out = ".";
  auto* report = app.add_subcommand("report", "aggregate run directories");
  report->add_option("--glob", glob_pattern, "glob of run directories")->required();
  report->add_option("--out", report_out, "directory for report.csv/report.txt");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "parse and echo a config");
  validate->add_option("--config", validate_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ne::RunConfig cfg = ne::parse_config(config_path);
      if (!seed_override.empty()) {
        cfg.seeds.clear();
        for (const auto& s : ne::detail::split_list(seed_override))
          cfg.seeds.push_back(
              static_cast<std::uint64_t>(ne::detail::to_long("seed", s)));
      }
      if (!mode_override.empty()) {
        cfg.modes.clear();
        for (const auto& m : ne::detail::split_list(mode_override))
          cfg.modes.push_back(ne::mode_from_string(m));
      }
      if (!out_override.empty()) cfg.out_dir = out_override;
      cfg.resolve_and_validate();
      return ne::run_all(cfg, jobs);
    }
    if (report->parsed()) return ne::report_command(glob_pattern, report_out);
    if (validate->parsed()) {
      ne::RunConfig cfg = ne::parse_config(validate_path);
      std::cout << ne::echo_resolved_config(cfg, cfg.modes.front(),
                                            cfg.seeds.front());
      return 0;
    }
  } catch (const ne::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
