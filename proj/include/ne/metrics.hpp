#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ne/netcore.hpp"

namespace ne {

inline constexpr const char* kMetricsHeader =
    "step,eval_return,actor_act_ratio,critic_act_ratio,actor_density,"
    "critic_density,grow_count,prune_count,epsilon,task_index,wall_ms";

struct MetricsRow {
  long step = 0;
  double eval_return = 0.0;
  double actor_act_ratio = 0.0;
  double critic_act_ratio = 0.0;
  double actor_density = 0.0;
  double critic_density = 0.0;
  long grow_count = 0;
  long prune_count = 0;
  double epsilon = 0.0;
  int task_index = 0;
  long wall_ms = 0;
};

struct ActivatedRatio {
  std::vector<double> per_layer;  // hidden layers only
  double aggregate = 0.0;         // neuron-count weighted
};

/// Eq.-style activated-neuron ratio: a hidden neuron counts as activated when
/// its post-activation exceeds tau for at least one probe input.
inline ActivatedRatio activated_ratio(const MaskedNetwork& net,
                                      const Matrix& probe_batch, double tau) {
  if (probe_batch.rows() == 0)
    throw std::invalid_argument("activated_ratio: empty probe batch");
  const auto [out, cache] = forward(net, probe_batch);
  ActivatedRatio result;
  long activated = 0, total = 0;
  for (std::size_t li = 0; li + 1 < net.layer_count(); ++li) {
    const Matrix& post = cache.post[li];
    long layer_active = 0;
    for (int i = 0; i < post.cols(); ++i)
      if (post.col(i).maxCoeff() > tau) layer_active++;
    result.per_layer.push_back(static_cast<double>(layer_active) /
                               static_cast<double>(post.cols()));
    activated += layer_active;
    total += post.cols();
  }
  result.aggregate =
      total == 0 ? 0.0 : static_cast<double>(activated) / static_cast<double>(total);
  return result;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::invalid_argument("bad number in CSV: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline std::string to_csv_line(const MetricsRow& r) {
  using detail::format_double;
  std::string line;
  line += std::to_string(r.step);
  line += ',' + format_double(r.eval_return);
  line += ',' + format_double(r.actor_act_ratio);
  line += ',' + format_double(r.critic_act_ratio);
  line += ',' + format_double(r.actor_density);
  line += ',' + format_double(r.critic_density);
  line += ',' + std::to_string(r.grow_count);
  line += ',' + std::to_string(r.prune_count);
  line += ',' + format_double(r.epsilon);
  line += ',' + std::to_string(r.task_index);
  line += ',' + std::to_string(r.wall_ms);
  return line;
}

inline void write_csv(const std::vector<MetricsRow>& rows,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // '\n' endings everywhere
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
  if (!out) throw std::runtime_error("write_csv: write failed for " + path.string());
}

inline std::vector<MetricsRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader)
    throw std::runtime_error("read_csv: header mismatch in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 11)
      throw std::runtime_error("read_csv: bad row in " + path.string());
    MetricsRow r;
    r.step = std::stol(f[0]);
    r.eval_return = detail::parse_double(f[1]);
    r.actor_act_ratio = detail::parse_double(f[2]);
    r.critic_act_ratio = detail::parse_double(f[3]);
    r.actor_density = detail::parse_double(f[4]);
    r.critic_density = detail::parse_double(f[5]);
    r.grow_count = std::stol(f[6]);
    r.prune_count = std::stol(f[7]);
    r.epsilon = detail::parse_double(f[8]);
    r.task_index = std::stoi(f[9]);
    r.wall_ms = std::stol(f[10]);
    rows.push_back(r);
  }
  return rows;
}

struct ModeSummary {
  std::string mode;
  int runs = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double critic_ratio_mean = 0.0;
  double critic_ratio_std = 0.0;
};

struct AggregateReport {
  std::vector<ModeSummary> modes;
};

namespace detail {

/// Mean over the final window (last 10% of rows, at least one).
inline std::pair<double, double> final_window_means(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw std::runtime_error("final_window_means: no rows");
  const std::size_t n = rows.size();
  const std::size_t w = std::max<std::size_t>(1, (n + 9) / 10);
  double ret = 0.0, ratio = 0.0;
  for (std::size_t i = n - w; i < n; ++i) {
    ret += rows[i].eval_return;
    ratio += rows[i].critic_act_ratio;
  }
  return {ret / static_cast<double>(w), ratio / static_cast<double>(w)};
}

inline std::pair<double, double> mean_and_sample_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

/// Pulls the mode out of a run directory's resolved_config.
inline std::string run_mode(const std::filesystem::path& dir) {
  std::ifstream in(dir / "resolved_config");
  if (!in)
    throw std::runtime_error("aggregate_report: missing resolved_config in " +
                             dir.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find('=');
    if (pos == std::string::npos) continue;
    std::string key = line.substr(0, pos);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    if (key == "mode") {
      std::string val = line.substr(pos + 1);
      val.erase(0, val.find_first_not_of(" \t"));
      val.erase(val.find_last_not_of(" \t\r") + 1);
      return val;
    }
  }
  throw std::runtime_error("aggregate_report: no mode in resolved_config of " +
                           dir.string());
}

}  // namespace detail

/// Per mode: final-window mean +- sample standard deviation of eval_return
/// and critic activated ratio across runs.
inline AggregateReport aggregate_report(
    const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty())
    throw std::runtime_error("aggregate_report: no run directories");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_mode;
  for (const auto& dir : run_dirs) {
    const auto rows = read_csv(dir / "metrics.csv");
    const auto [ret, ratio] = detail::final_window_means(rows);
    auto& bucket = by_mode[detail::run_mode(dir)];
    bucket.first.push_back(ret);
    bucket.second.push_back(ratio);
  }
  AggregateReport report;
  for (const auto& [mode, vals] : by_mode) {
    ModeSummary s;
    s.mode = mode;
    s.runs = static_cast<int>(vals.first.size());
    std::tie(s.return_mean, s.return_std) = detail::mean_and_sample_std(vals.first);
    std::tie(s.critic_ratio_mean, s.critic_ratio_std) =
        detail::mean_and_sample_std(vals.second);
    report.modes.push_back(s);
  }
  return report;
}

inline void write_report(const AggregateReport& report,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "report.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("write_report: cannot open report.csv");
    csv << "mode,runs,return_mean,return_std,critic_ratio_mean,critic_ratio_std\n";
    for (const auto& m : report.modes)
      csv << m.mode << ',' << m.runs << ',' << detail::format_double(m.return_mean)
          << ',' << detail::format_double(m.return_std) << ','
          << detail::format_double(m.critic_ratio_mean) << ','
          << detail::format_double(m.critic_ratio_std) << '\n';
  }
  {
    std::ofstream txt(dir / "report.txt", std::ios::binary);
    if (!txt) throw std::runtime_error("write_report: cannot open report.txt");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-14s %5s %14s %12s %14s %12s\n", "mode",
                  "runs", "return_mean", "return_std", "ratio_mean", "ratio_std");
    txt << buf;
    for (const auto& m : report.modes) {
      std::snprintf(buf, sizeof(buf), "%-14s %5d %14.3f %12.3f %14.4f %12.4f\n",
                    m.mode.c_str(), m.runs, m.return_mean, m.return_std,
                    m.critic_ratio_mean, m.critic_ratio_std);
      txt << buf;
    }
  }
}

}  // namespace ne
