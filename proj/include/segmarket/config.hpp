#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "segmarket/errors.hpp"
#include "segmarket/market_sim.hpp"
#include "segmarket/text.hpp"

namespace segmarket {

// Experiment configuration. File grammar:
//
//   # comment            (also after a value)
//   [section]
//   key = value
//   key = v1, v2, v3     (lists)
//
// Unknown sections or keys are errors so typos do not silently fall back to
// defaults.
struct ExperimentConfig {
  // network
  std::string network_source = "grid";  // grid | file
  long grid_rows = 20;
  long grid_cols = 20;
  double block_length_m = 200.0;
  double speed_mps = 10.0;
  std::string network_file;

  // trips
  std::string trip_source = "synthetic";  // synthetic | file
  std::size_t trip_count = 1000;
  double time_window_s = 1800.0;
  std::uint64_t trip_seed = 1;
  std::string trip_file;
  double max_snap_m = 100.0;

  double delta_cap_s = 600.0;

  SweepGrid grid{{0.2, 0.4, 0.6, 0.8, 1.0},
                 {0, 30, 60, 120, 240, 480, 600},
                 {0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0},
                 {0, 0.5, 1}};
  std::size_t replications = 5;
  std::uint64_t base_seed = 42;

  double fit_sigma = 0.5;
  double fit_rho = 1.0;
  std::size_t fit_starts = 32;

  std::vector<double> frontier_nu{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  std::string output_dir = "out";

  // Effective configuration, one `section.key=value` per line, defaults
  // resolved. Embedded in output headers.
  std::vector<std::string> effective_lines() const;
  void validate() const;
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + text::fmt_double(v[i]);
  return out;
}

}  // namespace detail

inline std::vector<std::string> ExperimentConfig::effective_lines() const {
  using text::fmt_double;
  std::vector<std::string> out;
  out.push_back("network.source=" + network_source);
  if (network_source == "grid") {
    out.push_back("network.rows=" + std::to_string(grid_rows));
    out.push_back("network.cols=" + std::to_string(grid_cols));
    out.push_back("network.block_length_m=" + fmt_double(block_length_m));
    out.push_back("network.speed_mps=" + fmt_double(speed_mps));
  } else {
    out.push_back("network.file=" + network_file);
  }
  out.push_back("trips.source=" + trip_source);
  if (trip_source == "synthetic") {
    out.push_back("trips.count=" + std::to_string(trip_count));
    out.push_back("trips.window_s=" + fmt_double(time_window_s));
    out.push_back("trips.seed=" + std::to_string(trip_seed));
  } else {
    out.push_back("trips.file=" + trip_file);
    out.push_back("trips.max_snap_m=" + fmt_double(max_snap_m));
  }
  out.push_back("shareability.delta_cap_s=" + fmt_double(delta_cap_s));
  out.push_back("sweep.nu=" + detail::join_doubles(grid.nu));
  out.push_back("sweep.delta_s=" + detail::join_doubles(grid.delta));
  out.push_back("sweep.sigma=" + detail::join_doubles(grid.sigma));
  out.push_back("sweep.rho=" + detail::join_doubles(grid.rho));
  out.push_back("sweep.replications=" + std::to_string(replications));
  out.push_back("sweep.base_seed=" + std::to_string(base_seed));
  out.push_back("fit.sigma=" + fmt_double(fit_sigma));
  out.push_back("fit.rho=" + fmt_double(fit_rho));
  out.push_back("fit.starts=" + std::to_string(fit_starts));
  out.push_back("frontier.nu=" + detail::join_doubles(frontier_nu));
  return out;
}

inline void ExperimentConfig::validate() const {
  auto unit_list = [](const std::vector<double>& v, const std::string& name) {
    if (v.empty()) throw ConfigError(name + " must not be empty");
    for (double x : v)
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(name + " values must lie in [0, 1]");
  };
  if (network_source == "grid") {
    if (!network_file.empty()) throw ConfigError("network: give either source = grid or a file, not both");
    if (grid_rows < 2 || grid_cols < 2) throw ConfigError("network: rows and cols must be at least 2");
    if (!(block_length_m > 0) || !(speed_mps > 0)) throw ConfigError("network: block_length_m and speed_mps must be positive");
  } else if (network_source == "file") {
    if (network_file.empty()) throw ConfigError("network: source = file needs file = PATH");
  } else {
    throw ConfigError("network.source must be grid or file");
  }
  if (trip_source == "synthetic") {
    if (!trip_file.empty()) throw ConfigError("trips: give either source = synthetic or a file, not both");
    if (trip_count < 1) throw ConfigError("trips.count must be at least 1");
    if (!(time_window_s > 0)) throw ConfigError("trips.window_s must be positive");
  } else if (trip_source == "file") {
    if (trip_file.empty()) throw ConfigError("trips: source = file needs file = PATH");
    if (!(max_snap_m > 0)) throw ConfigError("trips.max_snap_m must be positive");
  } else {
    throw ConfigError("trips.source must be synthetic or file");
  }
  if (!(delta_cap_s > 0)) throw ConfigError("shareability.delta_cap_s must be positive");
  unit_list(grid.nu, "sweep.nu");
  unit_list(grid.sigma, "sweep.sigma");
  unit_list(grid.rho, "sweep.rho");
  unit_list(frontier_nu, "frontier.nu");
  if (grid.delta.empty()) throw ConfigError("sweep.delta_s must not be empty");
  for (double d : grid.delta)
    if (!(d >= 0 && d <= delta_cap_s)) throw ConfigError("sweep.delta_s values must lie in [0, delta_cap_s]");
  if (replications < 1) throw ConfigError("sweep.replications must be at least 1");
  if (!(fit_sigma >= 0 && fit_sigma <= 1) || !(fit_rho >= 0 && fit_rho <= 1))
    throw ConfigError("fit.sigma and fit.rho must lie in [0, 1]");
  if (fit_starts < 1) throw ConfigError("fit.starts must be at least 1");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "config") {
  ExperimentConfig c;
  std::string line, section;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) { throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto s = text::trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("malformed section header");
      section = text::trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const auto key = text::trim(s.substr(0, eq));
    const auto value = text::trim(s.substr(eq + 1));
    const auto full = section + "." + key;
    try {
      auto num = [&] { return text::parse_double(value); };
      auto count = [&] {
        const auto v = text::parse_int(value);
        if (v < 0) throw std::invalid_argument("negative count");
        return static_cast<std::size_t>(v);
      };
      auto list = [&] {
        std::vector<double> out;
        for (const auto& f : text::split(value, ',')) out.push_back(text::parse_double(f));
        return out;
      };
      if (full == "network.source") c.network_source = value;
      else if (full == "network.rows") c.grid_rows = static_cast<long>(text::parse_int(value));
      else if (full == "network.cols") c.grid_cols = static_cast<long>(text::parse_int(value));
      else if (full == "network.block_length_m") c.block_length_m = num();
      else if (full == "network.speed_mps") c.speed_mps = num();
      else if (full == "network.file") c.network_file = value;
      else if (full == "trips.source") c.trip_source = value;
      else if (full == "trips.count") c.trip_count = count();
      else if (full == "trips.window_s") c.time_window_s = num();
      else if (full == "trips.seed") c.trip_seed = count();
      else if (full == "trips.file") c.trip_file = value;
      else if (full == "trips.max_snap_m") c.max_snap_m = num();
      else if (full == "shareability.delta_cap_s") c.delta_cap_s = num();
      else if (full == "sweep.nu") c.grid.nu = list();
      else if (full == "sweep.delta_s") c.grid.delta = list();
      else if (full == "sweep.sigma") c.grid.sigma = list();
      else if (full == "sweep.rho") c.grid.rho = list();
      else if (full == "sweep.replications") c.replications = count();
      else if (full == "sweep.base_seed") c.base_seed = count();
      else if (full == "fit.sigma") c.fit_sigma = num();
      else if (full == "fit.rho") c.fit_rho = num();
      else if (full == "fit.starts") c.fit_starts = count();
      else if (full == "frontier.nu") c.frontier_nu = list();
      else if (full == "output.dir") c.output_dir = value;
      else fail("unknown key '" + full + "'");
    } catch (const std::invalid_argument& ex) {
      fail("bad value for " + full + ": " + ex.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  auto c = parse_config(in, path);
  // data paths are relative to the config file
  const auto base = std::filesystem::path(path).parent_path();
  for (auto* p : {&c.network_file, &c.trip_file})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  return c;
}

}  // namespace segmarket
