#pragma once

#include <glob.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ne/checkpoint.hpp"
#include "ne/config.hpp"
#include "ne/metrics.hpp"
#include "ne/train.hpp"

namespace ne {

/// NE_OUT, when set, roots relative output directories.
inline std::filesystem::path resolve_out_root(const std::string& out_dir) {
  std::filesystem::path p(out_dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("NE_OUT")) return std::filesystem::path(root) / p;
  return p;
}

/// runs/<seed_N> for a single-mode config, runs/<mode>/<seed_N> for a matrix.
inline std::filesystem::path run_directory(const RunConfig& cfg, Mode mode,
                                           std::uint64_t seed) {
  std::filesystem::path base = resolve_out_root(cfg.out_dir);
  if (cfg.modes.size() > 1) base /= to_string(mode);
  return base / ("seed_" + std::to_string(seed));
}

/// Trains one (mode, seed) run and writes metrics.csv, resolved_config and
/// checkpoint.bin into its directory.
inline RunResult execute_run(const RunConfig& cfg, Mode mode, std::uint64_t seed,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream rc(dir / "resolved_config", std::ios::binary);
    if (!rc)
      throw std::runtime_error("cannot write resolved_config in " + dir.string());
    rc << echo_resolved_config(cfg, mode, seed);
  }
  RunResult result = train(cfg, mode, seed);
  write_csv(result.rows, dir / "metrics.csv");
  save_checkpoint(dir / "checkpoint.bin", *result.agent, result.rng);
  return result;
}

struct RunPlanEntry {
  Mode mode;
  std::uint64_t seed;
  std::filesystem::path dir;
};

inline std::vector<RunPlanEntry> plan_runs(const RunConfig& cfg) {
  std::vector<RunPlanEntry> plan;
  for (Mode m : cfg.modes)
    for (std::uint64_t s : cfg.seeds)
      plan.push_back({m, s, run_directory(cfg, m, s)});
  return plan;
}

/// Executes the full mode x seed matrix, optionally fanning out across
/// worker threads (each run is an independent instance). Returns 0 on
/// success, 2 if any run failed.
inline int run_all(const RunConfig& cfg, int jobs = 1, std::ostream& log = std::cerr) {
  const auto plan = plan_runs(cfg);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::atomic<int> failures{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.size()) return;
      const auto& entry = plan[i];
      try {
        execute_run(cfg, entry.mode, entry.seed, entry.dir);
        std::lock_guard<std::mutex> lock(log_mutex);
        log << "run " << to_string(entry.mode) << "/seed_" << entry.seed
            << ": done -> " << entry.dir.string() << "\n";
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(log_mutex);
        log << "run " << to_string(entry.mode) << "/seed_" << entry.seed
            << ": error: " << e.what() << "\n";
        failures.fetch_add(1);
      }
    }
  };
  jobs = std::max(1, jobs);
  if (jobs == 1 || plan.size() == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < jobs; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  return failures.load() == 0 ? 0 : 2;
}

/// Expands a shell glob into run directories (entries containing metrics.csv).
inline std::vector<std::filesystem::path> glob_run_dirs(const std::string& pattern) {
  glob_t g{};
  std::vector<std::filesystem::path> dirs;
  const int rc = ::glob(pattern.c_str(), GLOB_TILDE, nullptr, &g);
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) {
      std::filesystem::path p(g.gl_pathv[i]);
      if (std::filesystem::is_directory(p) &&
          std::filesystem::exists(p / "metrics.csv"))
        dirs.push_back(p);
    }
  }
  globfree(&g);
  return dirs;
}

inline int report_command(const std::string& pattern,
                          const std::filesystem::path& out_dir,
                          std::ostream& out = std::cout) {
  const auto dirs = glob_run_dirs(pattern);
  if (dirs.empty()) {
    out << "report: no run directories match '" << pattern << "'\n";
    return 2;
  }
  const AggregateReport report = aggregate_report(dirs);
  write_report(report, out_dir);
  std::ifstream txt(out_dir / "report.txt");
  out << txt.rdbuf();
  return 0;
}

}  // namespace ne
