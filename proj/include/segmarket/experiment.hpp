#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segmarket/config.hpp"
#include "segmarket/market_sim.hpp"
#include "segmarket/model_fit.hpp"
#include "segmarket/shareability.hpp"
#include "segmarket/street_network.hpp"
#include "segmarket/trip_data.hpp"

namespace segmarket {

namespace fs = std::filesystem;

namespace files {
inline constexpr const char* kTrips = "trips.csv";
inline constexpr const char* kNetwork = "shareability.jsonl";
inline constexpr const char* kBuildReport = "build_report.json";
inline constexpr const char* kResults = "results.csv";
inline constexpr const char* kFitPower = "fits_power.json";
inline constexpr const char* kFitAlpha = "fits_alpha.json";
inline constexpr const char* kFitBeta = "fits_beta.json";
inline constexpr const char* kFitQuartic = "fits_quartic.json";
inline constexpr const char* kFrontier = "frontier.csv";
inline constexpr const char* kPlotVmtNu = "plot_vmt_nu.csv";
inline constexpr const char* kPlotAlphaBeta = "plot_alpha_beta_delta.csv";
inline constexpr const char* kPlotLossSigma = "plot_loss_sigma.csv";
inline constexpr const char* kPlotLossRho = "plot_loss_rho.csv";
inline constexpr const char* kPlotMatchDelta = "plot_match_delta.csv";
inline constexpr const char* kPlotLossSurface = "plot_loss_surface.csv";
inline constexpr const char* kSummary = "summary.json";
}  // namespace files

struct RunOptions {
  unsigned threads = 1;
  bool resume = false;
  std::ostream* log = &std::cerr;
};

enum class FitMode { Power, Alpha, Beta, Quartic, All };

inline FitMode parse_fit_mode(const std::string& s) {
  if (s == "power") return FitMode::Power;
  if (s == "alpha") return FitMode::Alpha;
  if (s == "beta") return FitMode::Beta;
  if (s == "quartic") return FitMode::Quartic;
  if (s == "all") return FitMode::All;
  throw ConfigError("fit mode must be power, alpha, beta, quartic or all");
}

namespace detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline fs::path out_path(const ExperimentConfig& c, const char* name) { return fs::path(c.output_dir) / name; }

inline void write_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string() + "; is the output directory writable?");
    out << content;
    if (!out) throw ConfigError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::ordered_json read_json(const fs::path& path) {
  try {
    return nlohmann::ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path.string() + ": " + ex.what());
  }
}

inline std::string csv_header(const ExperimentConfig& c, const std::string& created_at) {
  std::string out = "# created_at=" + created_at + "\n";
  for (const auto& l : c.effective_lines()) out += "# config: " + l + "\n";
  return out;
}

inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& l : c.effective_lines()) j.push_back(l);
  return j;
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Reads a CSV written by this module: comment header, column header, rows.
inline std::vector<std::vector<std::string>> read_table(const fs::path& path, const std::string& header) {
  std::istringstream in(read_file(path));
  std::string line;
  bool seen = false;
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!seen) {
      if (line != header) throw ParseError(path.string() + ": unexpected header", lineno);
      seen = true;
      continue;
    }
    rows.push_back(text::split(line, ','));
  }
  if (!seen) throw ParseError(path.string() + ": missing header");
  return rows;
}

}  // namespace detail

// ------------------------------------------------------------------ inputs

inline StreetNetwork load_street_network(const ExperimentConfig& c) {
  if (c.network_source == "grid") return generate_grid(c.grid_rows, c.grid_cols, c.block_length_m, c.speed_mps);
  return load_network(c.network_file);
}

struct BuildReport {
  std::size_t trips = 0;
  std::size_t edges = 0;
  double wall_time_s = 0.0;
};

inline BuildReport cmd_build(const ExperimentConfig& c, const RunOptions& opt = {}) {
  c.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto net = load_street_network(c);
  nlohmann::ordered_json report;
  report["config"] = detail::config_json(c);
  report["street_network"] = {{"nodes", net.node_count()},
                              {"edges", net.edge_count()},
                              {"dropped_nodes", net.dropped_nodes()},
                              {"fingerprint", network_fingerprint(net)}};
  TripSet trips;
  if (c.trip_source == "synthetic") {
    trips = generate_trips(net, c.trip_count, c.time_window_s, std::nullopt, c.trip_seed);
  } else {
    auto [set, ingest] = ingest_trips(c.trip_file, net, c.max_snap_m);
    report["ingest"] = ingest.to_json();
    trips = std::move(set);
  }
  const auto shared = std::make_shared<const TripSet>(std::move(trips));
  const PathCache paths(net);
  const auto g = build_network(shared, paths, c.delta_cap_s, opt.threads);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ostringstream t, n;
  save_trips(*shared, t);
  save_shareability(g, n);
  detail::write_atomic(detail::out_path(c, files::kTrips), t.str());
  detail::write_atomic(detail::out_path(c, files::kNetwork), n.str());
  report["shareability"] = {{"trips", g.node_count()}, {"edges", g.edge_count()}, {"delta_cap_s", g.delta_cap}};
  report["wall_time_s"] = wall;
  detail::write_atomic(detail::out_path(c, files::kBuildReport), detail::dump(report));

  // outputs must read back
  const auto reread = std::make_shared<const TripSet>(load_trips(detail::out_path(c, files::kTrips).string()));
  const auto regraph = load_shareability(detail::out_path(c, files::kNetwork).string(), reread);
  if (regraph.edge_count() != g.edge_count()) throw StructuralError("shareability artifact did not read back");
  *opt.log << "build: " << g.node_count() << " trips, " << g.edge_count() << " shareable pairs, "
           << text::fmt_fixed(wall, 2) << " s\n";
  return {g.node_count(), g.edge_count(), wall};
}

struct LoadedBuild {
  StreetNetwork net;
  ShareabilityNetwork graph;
};

inline LoadedBuild load_build(const ExperimentConfig& c) {
  const auto trips_path = detail::out_path(c, files::kTrips);
  const auto net_path = detail::out_path(c, files::kNetwork);
  if (!fs::exists(trips_path) || !fs::exists(net_path))
    throw ParseError("no built network in " + c.output_dir + "; run the build command first");
  auto net = load_street_network(c);
  auto trips = std::make_shared<const TripSet>(load_trips(trips_path.string()));
  if (trips->network_ref != network_fingerprint(net))
    throw ParseError("trip table was built for a different street network; rerun build");
  auto g = load_shareability(net_path.string(), trips);
  if (g.delta_cap != c.delta_cap_s) throw ParseError("network artifact was built with a different delta cap; rerun build");
  return {std::move(net), std::move(g)};
}

// ----------------------------------------------------------------- results

struct ResultsFile {
  std::string created_at;
  std::vector<std::string> config;
  std::vector<ResultRow> rows;
  bool dropped_partial_tail = false;
};

// A final line without a newline is an interrupted write; it is dropped when
// allow_partial_tail is set and rejected otherwise.
inline ResultsFile read_results(const fs::path& path, bool allow_partial_tail = false) {
  const auto content = detail::read_file(path);
  ResultsFile out;
  std::size_t pos = 0, lineno = 0;
  bool header = false;
  std::set<RowKey> keys;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = content.substr(pos, complete ? nl - pos : std::string::npos);
    pos = complete ? nl + 1 : content.size();
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# created_at=", 0) == 0) {
      out.created_at = line.substr(13);
      continue;
    }
    if (line.rfind("# config: ", 0) == 0) {
      out.config.push_back(line.substr(10));
      continue;
    }
    if (line[0] == '#') continue;
    if (!header) {
      if (line != kResultHeader) throw ParseError(path.string() + ": unexpected results header", lineno);
      header = true;
      continue;
    }
    try {
      auto row = parse_row(line);
      if (!complete) throw std::invalid_argument("truncated row");
      if (!keys.insert(key_of(row)).second) throw ParseError(path.string() + ": duplicate row", lineno);
      out.rows.push_back(row);
    } catch (const std::invalid_argument& ex) {
      if (!complete && allow_partial_tail) {
        out.dropped_partial_tail = true;
        break;
      }
      throw ParseError(path.string() + ": " + ex.what(), lineno);
    }
  }
  if (!header) throw ParseError(path.string() + ": missing results header");
  return out;
}

inline std::size_t cmd_sweep(const ExperimentConfig& c, const RunOptions& opt = {}) {
  c.validate();
  const auto path = detail::out_path(c, files::kResults);
  std::vector<ResultRow> existing;
  std::string created_at = detail::utc_now();
  if (opt.resume && fs::exists(path)) {
    ResultsFile prev;
    try {
      prev = read_results(path, true);
    } catch (const ParseError& ex) {
      throw ParseError(std::string(ex.what()) + " (repair: delete " + path.string() +
                       " or rerun without --resume to start over)");
    }
    if (prev.config != c.effective_lines())
      throw ConfigError(path.string() + " was produced with a different configuration; rerun without --resume");
    if (!prev.created_at.empty()) created_at = prev.created_at;
    existing = std::move(prev.rows);
    if (prev.dropped_partial_tail) *opt.log << "sweep: discarded a truncated final row\n";
  }
  const auto build = load_build(c);
  const auto zones = zones_by_latitude(build.net);
  std::size_t base1 = 0;
  for (const auto& [id, z] : zones.zone_of) base1 += z == Zone::Base1;
  if (base1 == 0 || base1 == zones.zone_of.size()) throw StructuralError("both base zones must be non-empty");

  const std::size_t total = c.grid.cells() * c.replications;
  // rewrite what we keep, then append as rows finish
  {
    std::string head = detail::csv_header(c, created_at) + kResultHeader + "\n";
    for (const auto& r : existing) head += format_row(r) + "\n";
    detail::write_atomic(path, head);
  }
  std::ofstream append(path, std::ios::app);
  std::size_t done = existing.size();
  const std::size_t every = std::max<std::size_t>(1, total / 20);
  SweepOptions so;
  so.threads = opt.threads;
  so.existing = existing;
  so.on_row = [&](const ResultRow& r) {
    append << format_row(r) << '\n';
    append.flush();
    if (++done % every == 0 || done == total) *opt.log << "sweep: " << done << "/" << total << " rows\n";
  };
  *opt.log << "sweep: " << existing.size() << " rows already present, " << (total - existing.size()) << " to compute\n";
  const auto rows = run_sweep(build.graph, c.grid, c.replications, c.base_seed, zones, so);
  append.close();

  std::string body = detail::csv_header(c, created_at) + kResultHeader + "\n";
  for (const auto& r : rows) body += format_row(r) + "\n";
  detail::write_atomic(path, body);
  if (read_results(path).rows.size() != total) throw StructuralError("results table did not read back");
  return rows.size();
}

// Replication means per grid point.
struct CellMean {
  std::size_t n = 0;
  double vmt0 = 0, vmt1 = 0, vmt2 = 0, loss = 0;  // meters
  double rate_mono = 0, detour_mono = 0, rate_duo = 0, detour_duo = 0;
};

using CellKey = std::tuple<double, double, double, double>;  // nu, delta, sigma, rho

inline std::map<CellKey, CellMean> cell_means(const std::vector<ResultRow>& rows) {
  std::map<CellKey, CellMean> acc;
  for (const auto& r : rows) {
    auto& m = acc[{r.nu, r.delta, r.sigma, r.rho}];
    ++m.n;
    m.vmt0 += static_cast<double>(r.result.vmt0_mm) / 1000.0;
    m.vmt1 += static_cast<double>(r.result.vmt1_mm) / 1000.0;
    m.vmt2 += static_cast<double>(r.result.vmt2_mm) / 1000.0;
    m.loss += static_cast<double>(r.result.loss_mm) / 1000.0;
    m.rate_mono += r.result.match_rate_mono;
    m.detour_mono += r.result.avg_detour_mono;
    m.rate_duo += r.result.match_rate_duo;
    m.detour_duo += r.result.avg_detour_duo;
  }
  for (auto& [k, m] : acc) {
    const double n = static_cast<double>(m.n);
    for (double* v : {&m.vmt0, &m.vmt1, &m.vmt2, &m.loss, &m.rate_mono, &m.detour_mono, &m.rate_duo, &m.detour_duo})
      *v /= n;
  }
  return acc;
}

// --------------------------------------------------------------------- fit

inline const char* market_name(bool duopoly) { return duopoly ? "duopoly" : "monopoly"; }

// Per-delta power fits of replication-averaged VMT against nu. The monopoly
// curve does not depend on (sigma, rho); the duopoly curve is taken at the
// configured (fit.sigma, fit.rho).
struct PowerFits {
  std::map<double, PowerFit> market[2];
  std::map<double, FitPoints> points[2];
  nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
};

inline PowerFits power_fits(const ExperimentConfig& c, const std::map<CellKey, CellMean>& means) {
  PowerFits out;
  bool any = false;
  for (const auto& [k, m] : means) {
    const auto [nu, delta, sigma, rho] = k;
    if (sigma != c.fit_sigma || rho != c.fit_rho) continue;
    any = true;
    out.points[0][delta].emplace_back(nu, m.vmt1);
    out.points[1][delta].emplace_back(nu, m.vmt2);
  }
  if (!any)
    throw ParseError("results contain no rows at sigma=" + text::fmt_double(c.fit_sigma) +
                     ", rho=" + text::fmt_double(c.fit_rho));
  for (int mk = 0; mk < 2; ++mk)
    for (const auto& [delta, pts] : out.points[mk]) {
      try {
        out.market[mk][delta] = fit_power(pts);
      } catch (const ArgumentError& ex) {
        out.skipped.push_back({{"market", market_name(mk)}, {"delta_s", delta}, {"reason", ex.what()}});
      }
    }
  return out;
}

inline nlohmann::ordered_json points_json(const FitPoints& pts) {
  auto j = nlohmann::ordered_json::array();
  for (auto [x, y] : pts) j.push_back({x, y});
  return j;
}

struct CurveFits {
  std::optional<AlphaDeltaFit> alpha[2];
  std::optional<BetaDeltaFit> beta[2];
  nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
};

inline CurveFits curve_fits(const ExperimentConfig& c, const PowerFits& p, bool alpha, bool beta, unsigned threads) {
  CurveFits out;
  FitOptions fo;
  fo.starts = c.fit_starts;
  fo.threads = threads;
  for (int mk = 0; mk < 2; ++mk) {
    FitPoints ap, bp;
    for (const auto& [d, f] : p.market[mk]) {
      ap.emplace_back(d, f.alpha);
      bp.emplace_back(d, f.beta);
    }
    auto attempt = [&](const char* family, auto&& fn) {
      try {
        fn();
      } catch (const ArgumentError& ex) {
        out.skipped.push_back({{"market", market_name(mk)}, {"family", family}, {"reason", ex.what()}});
      } catch (const FitFailure& ex) {
        out.skipped.push_back({{"market", market_name(mk)},
                               {"family", family},
                               {"reason", ex.what()},
                               {"diagnostics", nlohmann::ordered_json::parse(ex.diagnostics())}});
      }
    };
    if (alpha) attempt("alpha_delta", [&] { out.alpha[mk] = fit_alpha_delta(ap, fo); });
    if (beta) attempt("beta_delta", [&] { out.beta[mk] = fit_beta_delta(bp, fo); });
  }
  return out;
}

struct QuarticCell {
  double nu = 0, delta = 0, rho = 0;
  double loss_max = 0, argmax_sigma = 0;
  QuarticFit fit;
};

inline std::vector<QuarticCell> quartic_fits(const ExperimentConfig& c, const std::map<CellKey, CellMean>& means,
                                             nlohmann::ordered_json& skipped) {
  std::map<std::pair<double, double>, FitPoints> groups;
  for (const auto& [k, m] : means) {
    const auto [nu, delta, sigma, rho] = k;
    if (rho == c.fit_rho) groups[{nu, delta}].emplace_back(sigma, m.loss);
  }
  std::vector<QuarticCell> out;
  for (const auto& [key, pts] : groups) {
    QuarticCell cell{key.first, key.second, c.fit_rho};
    cell.loss_max = -std::numeric_limits<double>::infinity();
    for (auto [s, l] : pts)
      if (l > cell.loss_max) cell.loss_max = l, cell.argmax_sigma = s;
    try {
      cell.fit = fit_quartic(pts);
      out.push_back(cell);
    } catch (const ArgumentError& ex) {
      skipped.push_back({{"nu", key.first}, {"delta_s", key.second}, {"reason", ex.what()}});
    }
  }
  return out;
}

struct FitSummary {
  std::size_t fitted = 0;
  std::size_t skipped = 0;
};

inline FitSummary cmd_fit(const ExperimentConfig& c, FitMode mode, const RunOptions& opt = {}) {
  c.validate();
  const auto path = detail::out_path(c, files::kResults);
  if (!fs::exists(path)) throw ParseError("no results table in " + c.output_dir + "; run the sweep command first");
  const auto results = read_results(path);
  const auto means = cell_means(results.rows);
  FitSummary summary;
  auto warn = [&](const nlohmann::ordered_json& skipped) {
    for (const auto& s : skipped) *opt.log << "fit: skipped " << s.dump() << "\n";
    summary.skipped += skipped.size();
  };
  const bool all = mode == FitMode::All;

  const auto power = power_fits(c, means);
  if (all || mode == FitMode::Power) {
    nlohmann::ordered_json j;
    j["config"] = detail::config_json(c);
    j["sigma"] = c.fit_sigma;
    j["rho"] = c.fit_rho;
    for (int mk = 0; mk < 2; ++mk) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& [d, f] : power.market[mk]) {
        auto e = to_json(f);
        e["delta_s"] = d;
        e["points"] = points_json(power.points[mk].at(d));
        arr.push_back(e);
        ++summary.fitted;
      }
      j["markets"][market_name(mk)] = arr;
    }
    j["skipped"] = power.skipped;
    warn(power.skipped);
    detail::write_atomic(detail::out_path(c, files::kFitPower), detail::dump(j));
  }

  const bool want_alpha = all || mode == FitMode::Alpha, want_beta = all || mode == FitMode::Beta;
  if (want_alpha || want_beta) {
    const auto curves = curve_fits(c, power, want_alpha, want_beta, opt.threads);
    auto write = [&](const char* file, const char* family, auto& fits) {
      nlohmann::ordered_json j;
      j["config"] = detail::config_json(c);
      j["markets"] = nlohmann::ordered_json::object();
      for (int mk = 0; mk < 2; ++mk) {
        if (!fits[mk]) continue;
        auto e = to_json(*fits[mk]);
        FitPoints pts;
        for (const auto& [d, f] : power.market[mk]) pts.emplace_back(d, std::string(family) == "alpha" ? f.alpha : f.beta);
        e["points"] = points_json(pts);
        j["markets"][market_name(mk)] = e;
        ++summary.fitted;
      }
      auto sk = nlohmann::ordered_json::array();
      for (const auto& s : curves.skipped)
        if (s["family"] == std::string(family) + "_delta") sk.push_back(s);
      j["skipped"] = sk;
      warn(sk);
      detail::write_atomic(detail::out_path(c, file), detail::dump(j));
    };
    if (want_alpha) write(files::kFitAlpha, "alpha", curves.alpha);
    if (want_beta) write(files::kFitBeta, "beta", curves.beta);
  }

  if (all || mode == FitMode::Quartic) {
    auto skipped = nlohmann::ordered_json::array();
    const auto cells = quartic_fits(c, means, skipped);
    nlohmann::ordered_json j;
    j["config"] = detail::config_json(c);
    j["rho"] = c.fit_rho;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& q : cells) {
      nlohmann::ordered_json e;
      e["nu"] = q.nu;
      e["delta_s"] = q.delta;
      e["loss_max_m"] = q.loss_max;
      e["argmax_sigma"] = q.argmax_sigma;
      const auto fj = to_json(q.fit);
      for (const auto& [k, v] : fj.items()) e[k] = v;
      arr.push_back(e);
      ++summary.fitted;
    }
    j["cells"] = arr;
    j["skipped"] = skipped;
    warn(skipped);
    detail::write_atomic(detail::out_path(c, files::kFitQuartic), detail::dump(j));
  }

  if (summary.fitted == 0) throw FitFailure("no group could be fitted", "{}");
  *opt.log << "fit: " << summary.fitted << " fits written, " << summary.skipped << " groups skipped\n";
  return summary;
}

// ---------------------------------------------------------------- frontier

struct LoadedFits {
  std::map<double, PowerFit> power[2];
  MarketFits curves[2];
};

inline LoadedFits load_fits(const ExperimentConfig& c) {
  LoadedFits out;
  for (const char* f : {files::kFitPower, files::kFitAlpha, files::kFitBeta})
    if (!fs::exists(detail::out_path(c, f)))
      throw ParseError(std::string(f) + " not found in " + c.output_dir + "; run the fit command first");
  const auto power = detail::read_json(detail::out_path(c, files::kFitPower));
  const auto alpha = detail::read_json(detail::out_path(c, files::kFitAlpha));
  const auto beta = detail::read_json(detail::out_path(c, files::kFitBeta));
  try {
    for (int mk = 0; mk < 2; ++mk) {
      const std::string name = market_name(mk);
      for (const auto& e : power.at("markets").at(name)) {
        PowerFit f;
        f.alpha = e.at("coefficients").at("alpha").get<double>();
        f.beta = e.at("coefficients").at("beta").get<double>();
        f.r_squared = e.at("r_squared").get<double>();
        out.power[mk][e.at("delta_s").get<double>()] = f;
      }
      if (out.power[mk].empty()) throw ArgumentError("no power fits for the " + name + " market");
      if (!alpha.at("markets").contains(name)) throw ArgumentError("no alpha(delta) fit for the " + name + " market");
      if (!beta.at("markets").contains(name)) throw ArgumentError("no beta(delta) fit for the " + name + " market");
      out.curves[mk].alpha = alpha_from_json(alpha["markets"][name]);
      out.curves[mk].beta = beta_from_json(beta["markets"][name]);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed fit report: ") + ex.what());
  }
  return out;
}

inline std::vector<FrontierPoint> frontier_points(const LossSurface& s, const std::vector<double>& nus) {
  std::vector<FrontierPoint> out;
  for (double nu : nus)
    if (auto p = worst_tightness(s, nu, {s.delta_lo(), s.delta_hi()})) out.push_back(*p);
  return out;
}

inline std::size_t cmd_frontier(const ExperimentConfig& c, const RunOptions& opt = {}) {
  c.validate();
  const auto fits = load_fits(c);
  const auto surface = loss_surface(fits.power[0], fits.power[1], fits.curves[0], fits.curves[1]);
  const auto points = frontier_points(surface, c.frontier_nu);
  const auto results_path = detail::out_path(c, files::kResults);
  if (!fs::exists(results_path)) throw ParseError("no results table in " + c.output_dir + "; run the sweep command first");
  const auto results = read_results(results_path);
  const std::string head = detail::csv_header(c, results.created_at);
  using text::fmt_double;

  std::string frontier = head + "nu,delta_star_s,loss_at_star_m\n";
  for (const auto& p : points)
    frontier += fmt_double(p.nu) + "," + fmt_double(p.delta_star) + "," + fmt_double(p.loss_at_star) + "\n";
  detail::write_atomic(detail::out_path(c, files::kFrontier), frontier);

  const auto means = cell_means(results.rows);

  std::string vmt = head + "market,delta_s,nu,vmt_m,fitted_m\n";
  for (const auto& [k, m] : means) {
    const auto [nu, delta, sigma, rho] = k;
    if (sigma != c.fit_sigma || rho != c.fit_rho) continue;
    vmt += "none," + fmt_double(delta) + "," + fmt_double(nu) + "," + fmt_double(m.vmt0) + ",\n";
    const double v[2] = {m.vmt1, m.vmt2};
    for (int mk = 0; mk < 2; ++mk) {
      auto it = fits.power[mk].find(delta);
      vmt += std::string(market_name(mk)) + "," + fmt_double(delta) + "," + fmt_double(nu) + "," + fmt_double(v[mk]) +
             "," + (it != fits.power[mk].end() ? fmt_double(it->second(nu)) : "") + "\n";
    }
  }
  detail::write_atomic(detail::out_path(c, files::kPlotVmtNu), vmt);

  std::string ab = head + "market,kind,delta_s,alpha_m,beta\n";
  for (int mk = 0; mk < 2; ++mk) {
    for (const auto& [d, f] : fits.power[mk])
      ab += std::string(market_name(mk)) + ",power_fit," + fmt_double(d) + "," + fmt_double(f.alpha) + "," +
            fmt_double(f.beta) + "\n";
    for (double d = surface.delta_lo(); d <= surface.delta_hi() + 1e-9; d += 5.0)
      ab += std::string(market_name(mk)) + ",curve," + fmt_double(d) + "," + fmt_double(fits.curves[mk].alpha(d)) +
            "," + fmt_double(fits.curves[mk].beta(d)) + "\n";
  }
  detail::write_atomic(detail::out_path(c, files::kPlotAlphaBeta), ab);

  auto skipped = nlohmann::ordered_json::array();
  std::map<std::pair<double, double>, QuarticFit> quartic;
  for (const auto& q : quartic_fits(c, means, skipped)) quartic[{q.nu, q.delta}] = q.fit;
  std::string ls = head + "nu,delta_s,rho,sigma,loss_m,loss_fit_m\n";
  std::string lr = head + "nu,delta_s,sigma,rho,loss_m\n";
  for (const auto& [k, m] : means) {
    const auto [nu, delta, sigma, rho] = k;
    std::string fit;
    if (rho == c.fit_rho)
      if (auto it = quartic.find({nu, delta}); it != quartic.end()) fit = fmt_double(it->second(sigma));
    ls += fmt_double(nu) + "," + fmt_double(delta) + "," + fmt_double(rho) + "," + fmt_double(sigma) + "," +
          fmt_double(m.loss) + "," + fit + "\n";
    lr += fmt_double(nu) + "," + fmt_double(delta) + "," + fmt_double(sigma) + "," + fmt_double(rho) + "," +
          fmt_double(m.loss) + "\n";
  }
  detail::write_atomic(detail::out_path(c, files::kPlotLossSigma), ls);
  detail::write_atomic(detail::out_path(c, files::kPlotLossRho), lr);

  std::string md = head + "market,nu,delta_s,match_rate,avg_detour_s\n";
  for (const auto& [k, m] : means) {
    const auto [nu, delta, sigma, rho] = k;
    if (sigma != c.fit_sigma || rho != c.fit_rho) continue;
    md += "monopoly," + fmt_double(nu) + "," + fmt_double(delta) + "," + fmt_double(m.rate_mono) + "," +
          fmt_double(m.detour_mono) + "\n";
    md += "duopoly," + fmt_double(nu) + "," + fmt_double(delta) + "," + fmt_double(m.rate_duo) + "," +
          fmt_double(m.detour_duo) + "\n";
  }
  detail::write_atomic(detail::out_path(c, files::kPlotMatchDelta), md);

  std::string surf = head + "nu,delta_s,loss_m\n";
  for (double nu : c.frontier_nu)
    for (double d = surface.delta_lo(); d <= surface.delta_hi() + 1e-9; d += 5.0)
      surf += fmt_double(nu) + "," + fmt_double(d) + "," + fmt_double(surface(nu, std::min(d, surface.delta_hi()))) + "\n";
  detail::write_atomic(detail::out_path(c, files::kPlotLossSurface), surf);

  // outputs must read back
  detail::read_table(detail::out_path(c, files::kFrontier), "nu,delta_star_s,loss_at_star_m");
  detail::read_table(detail::out_path(c, files::kPlotVmtNu), "market,delta_s,nu,vmt_m,fitted_m");
  detail::read_table(detail::out_path(c, files::kPlotAlphaBeta), "market,kind,delta_s,alpha_m,beta");
  detail::read_table(detail::out_path(c, files::kPlotLossSigma), "nu,delta_s,rho,sigma,loss_m,loss_fit_m");
  detail::read_table(detail::out_path(c, files::kPlotLossRho), "nu,delta_s,sigma,rho,loss_m");
  detail::read_table(detail::out_path(c, files::kPlotMatchDelta), "market,nu,delta_s,match_rate,avg_detour_s");
  detail::read_table(detail::out_path(c, files::kPlotLossSurface), "nu,delta_s,loss_m");
  *opt.log << "frontier: " << points.size() << " interior worst-tightness points over " << c.frontier_nu.size()
           << " thickness values\n";
  return points.size();
}

// ------------------------------------------------------------------ report

inline void cmd_report(const ExperimentConfig& c, const RunOptions& opt = {}) {
  const auto build = cmd_build(c, opt);
  const auto rows = cmd_sweep(c, opt);
  const auto fit = cmd_fit(c, FitMode::All, opt);
  const auto frontier = cmd_frontier(c, opt);
  const auto fits = load_fits(c);

  nlohmann::ordered_json j;
  j["config"] = detail::config_json(c);
  j["trips"] = build.trips;
  j["shareable_pairs"] = build.edges;
  j["result_rows"] = rows;
  j["fits_written"] = fit.fitted;
  j["fit_groups_skipped"] = fit.skipped;
  for (int mk = 0; mk < 2; ++mk) {
    auto& m = j["markets"][market_name(mk)];
    for (const auto& [d, f] : fits.power[mk]) m["beta_by_delta"].push_back({{"delta_s", d}, {"beta", f.beta}});
    m["alpha_delta_r_squared"] = fits.curves[mk].alpha.r_squared;
    m["beta_delta_r_squared"] = fits.curves[mk].beta.r_squared;
  }
  j["frontier_points"] = frontier;
  detail::write_atomic(detail::out_path(c, files::kSummary), detail::dump(j));
  detail::read_json(detail::out_path(c, files::kSummary));
}

}  // namespace segmarket
