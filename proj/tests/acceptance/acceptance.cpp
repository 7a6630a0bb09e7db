// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "segmarket/experiment.hpp"
#include "segmarket/matching.hpp"
#include "segmarket/model_fit.hpp"
#include "segmarket/rng.hpp"

namespace fs = std::filesystem;
using namespace segmarket;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int n, const std::string& title, const Outcome& o, double seconds) {
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << title << "  [" << o.detail << "; "
            << text::fmt_fixed(seconds, 1) << " s]" << std::endl;
  failures += !o.pass;
}

template <class F>
void run(int n, const std::string& title, F&& body) {
  const auto t = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(n, title, o, since(t));
}

std::string fmt(double x) { return text::fmt_double(x); }

// ------------------------------------------------------------- criterion 1

Outcome matching_oracle() {
  const auto t = Clock::now();
  Rng rng(20240611);
  std::size_t mismatches = 0, edges = 0;
  for (int k = 0; k < 200; ++k) {
    const auto n = 4 + rng.below(11);
    const double density = rng.uniform(0.2, 0.8);
    WeightedGraph g;
    for (std::size_t i = 0; i < n; ++i) g.node_ids.push_back(static_cast<std::int64_t>(100 + 7 * i));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < density)
          g.edges.push_back({g.node_ids[i], g.node_ids[j], static_cast<std::int64_t>(1 + rng.below(2'000'000))});
    edges += g.edges.size();
    const auto fast = max_weight_matching(g), slow = brute_force_matching(g);
    mismatches += fast.total_weight != slow.total_weight || !is_valid_matching(g, fast);
  }
  const double secs = since(t);
  return {mismatches == 0 && secs < 30.0,
          "200 graphs, " + std::to_string(edges) + " edges, " + std::to_string(mismatches) + " mismatches"};
}

// ------------------------------------------------------------- criterion 7

Outcome fit_recovery() {
  const auto t = Clock::now();
  auto dense = [](double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
    return out;
  };
  auto rel = [](const std::function<double(double)>& truth, const std::function<double(double)>& fit,
                const std::vector<double>& xs) {
    double scale = 0, err = 0;
    for (double x : xs) scale = std::max(scale, std::abs(truth(x)));
    for (double x : xs) err = std::max(err, std::abs(truth(x) - fit(x)));
    return err / scale;
  };

  const auto power_truth = [](double nu) { return 2.4e6 * std::pow(nu, 0.83); };
  FitPoints pp;
  for (double nu : {0.2, 0.4, 0.6, 0.8, 1.0}) pp.emplace_back(nu, power_truth(nu));
  const auto pf = fit_power(pp);
  const double e_power = rel(power_truth, pf, dense(0.05, 1.0, 200));

  const auto alpha_truth = [](double d) { return 2e6 / (std::exp(0.01 * d) + 1.5) + 1e6; };
  FitPoints ap;
  for (double d : dense(0, 600, 13)) ap.emplace_back(d, alpha_truth(d));
  const auto af = fit_alpha_delta(ap);
  const double e_alpha = rel(alpha_truth, af, dense(0, 600, 601));

  const auto beta_truth = [](double d) {
    return 1 / std::pow(0.05 * d + 1, 2.0) - 0.6 / std::pow(0.01 * d + 1, 1.0) + 0.6;
  };
  FitPoints bp;
  for (double d : dense(0, 600, 25)) bp.emplace_back(d, beta_truth(d));
  const auto bf = fit_beta_delta(bp);
  const double e_beta = rel(beta_truth, bf, dense(0, 600, 601));

  const auto quartic_truth = [](double s) { return 3.7e5 * QuarticFit::basis_a(s) - 1.9e5 * QuarticFit::basis_c(s); };
  FitPoints qp;
  for (double s : dense(0, 1, 11)) qp.emplace_back(s, quartic_truth(s));
  const auto qf = fit_quartic(qp);
  const double e_quartic = rel(quartic_truth, qf, dense(0, 1, 1001));

  const double secs = since(t);
  return {e_power < 1e-4 && e_alpha < 1e-4 && e_beta < 1e-4 && e_quartic < 1e-9 && secs < 60.0,
          "max rel error power " + fmt(e_power) + ", alpha " + fmt(e_alpha) + ", beta " + fmt(e_beta) + ", quartic " +
              fmt(e_quartic)};
}

// ------------------------------------------------------------- criterion 8

// Both markets share a constant scale; the monopoly exponent is 1 and the
// duopoly exponent dips. With equal rates b in both exponent terms the dip,
// and so the loss maximum for any 0 < nu < 1, sits at
// ((m / (b2 n))^(1 / (m - n)) - 1) / b.
Outcome frontier_oracle() {
  const double b = 0.01, b2 = 0.6, m = 2.0, n = 1.0, scale = 2.5e6;
  const double oracle = (std::pow(m / (b2 * n), 1.0 / (m - n)) - 1.0) / b;
  const auto alpha = [=](double) { return scale; };
  const auto beta_mono = [](double) { return 1.0; };
  const auto beta_duo = [=](double d) { return std::pow(b * d + 1, -m) + b2 * (1 - std::pow(b * d + 1, -n)); };
  const LossSurface s(alpha, beta_mono, alpha, beta_duo, 0.0, 600.0);
  bool ok = true;
  double worst_gap = 0, worst_slope = 0;
  for (double nu : {0.2, 0.5, 0.8}) {
    const auto p = worst_tightness(s, nu, {0.0, 600.0});
    if (!p) {
      ok = false;
      continue;
    }
    double peak = 0;
    for (double d = 0; d <= 600; d += 0.5) peak = std::max(peak, std::abs(s(nu, d)));
    const double gap = std::abs(p->delta_star - oracle);
    const double slope = std::abs(loss_slope(s, nu, p->delta_star, 1e-3)) / peak;
    worst_gap = std::max(worst_gap, gap);
    worst_slope = std::max(worst_slope, slope);
    ok = ok && gap <= 1.0 && slope < 1e-6;
  }
  return {ok, "oracle " + text::fmt_fixed(oracle, 3) + " s, max gap " + fmt(worst_gap) + " s, max relative slope " +
                  fmt(worst_slope)};
}

// ---------------------------------------------------------- desk pipeline

struct DeskRun {
  ExperimentConfig cfg;
  double build_sweep_s = 0;
  std::vector<ResultRow> rows;
  std::map<CellKey, CellMean> means;
};

DeskRun desk_pipeline(const ExperimentConfig& base, const fs::path& out, unsigned threads) {
  DeskRun r;
  r.cfg = base;
  r.cfg.output_dir = out.string();
  fs::create_directories(out);
  std::ostringstream log;
  RunOptions opt;
  opt.threads = threads;
  opt.log = &log;
  const auto t = Clock::now();
  cmd_build(r.cfg, opt);
  cmd_sweep(r.cfg, opt);
  r.build_sweep_s = since(t);
  cmd_fit(r.cfg, FitMode::All, opt);
  r.rows = read_results(out / files::kResults).rows;
  r.means = cell_means(r.rows);
  return r;
}

Outcome ordering(const DeskRun& r) {
  const auto& c = r.cfg;
  const std::size_t expected = c.grid.cells() * c.replications;
  std::size_t bad_order = 0, bad_edge = 0;
  for (const auto& row : r.rows) {
    const auto& v = row.result;
    bad_order += !(v.vmt1_mm <= v.vmt2_mm && v.vmt2_mm <= v.vmt0_mm && v.loss_mm >= 0 &&
                   v.loss_mm == v.vmt2_mm - v.vmt1_mm);
    if (row.sigma == 0.0 || row.sigma == 1.0) bad_edge += v.loss_mm != 0;
  }
  const bool desk = c.grid_rows == 20 && c.grid_cols == 20 && c.trip_count == 1000 && c.replications == 5;
  return {desk && r.rows.size() == expected && bad_order == 0 && bad_edge == 0 && r.build_sweep_s < 900.0,
          std::to_string(r.rows.size()) + "/" + std::to_string(expected) + " rows, " + std::to_string(bad_order) +
              " ordering violations, " + std::to_string(bad_edge) + " nonzero losses at undivided shares, build+sweep " +
              text::fmt_fixed(r.build_sweep_s, 1) + " s"};
}

std::vector<std::pair<double, double>> monopoly_beta(const DeskRun& r) {
  const auto j = detail::read_json(fs::path(r.cfg.output_dir) / files::kFitPower);
  std::vector<std::pair<double, double>> out;
  for (const auto& e : j["markets"]["monopoly"])
    out.emplace_back(e["delta_s"].get<double>(), e["coefficients"]["beta"].get<double>());
  return out;
}

std::string beta_list(const std::vector<std::pair<double, double>>& b) {
  std::string s;
  for (auto [d, v] : b) s += (s.empty() ? "" : " ") + fmt(d) + ":" + text::fmt_fixed(v, 4);
  return s;
}

Outcome economies_of_scale(const DeskRun& r) {
  const auto b = monopoly_beta(r);
  if (b.size() != r.cfg.grid.delta.size() || b.front().first != 0.0) return {false, "missing power fits"};
  bool ok = std::abs(b.front().second - 1.0) <= 0.02;
  for (auto [d, v] : b)
    if (d > 0) ok = ok && v <= 1.0;
  // strictly falling up to mid-range tightness, one tenth of the cap
  const double mid = r.cfg.delta_cap_s / 10;
  for (std::size_t i = 1; i < b.size() && b[i].first <= mid; ++i) ok = ok && b[i].second < b[i - 1].second;
  return {ok, "monopoly beta " + beta_list(b)};
}

// Count of adjacent decreases along a curve.
std::size_t decreases(const std::vector<double>& v) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < v.size(); ++i) n += v[i] < v[i - 1];
  return n;
}

Outcome fall_and_rise(const DeskRun& r) {
  const auto b = monopoly_beta(r);
  const auto argmin =
      std::min_element(b.begin(), b.end(), [](auto& x, auto& y) { return x.second < y.second; }) - b.begin();
  const bool interior = argmin > 0 && static_cast<std::size_t>(argmin) + 1 < b.size();
  std::size_t worst_rate = 0, worst_detour = 0;
  for (double nu : r.cfg.grid.nu) {
    std::vector<double> rate, detour;
    for (double d : r.cfg.grid.delta) {
      const auto& m = r.means.at({nu, d, r.cfg.fit_sigma, r.cfg.fit_rho});
      rate.push_back(m.rate_mono);
      detour.push_back(m.detour_mono);
    }
    worst_rate = std::max(worst_rate, decreases(rate));
    worst_detour = std::max(worst_detour, decreases(detour));
  }
  return {interior && worst_rate <= 1 && worst_detour <= 1,
          "beta minimum at delta " + fmt(b[argmin].first) + " s; worst per-curve decreases: match rate " +
              std::to_string(worst_rate) + ", detour " + std::to_string(worst_detour)};
}

Outcome unevenness_peak(const DeskRun& r) {
  const auto j = detail::read_json(fs::path(r.cfg.output_dir) / files::kFitQuartic);
  std::size_t cells = 0, bad = 0;
  double min_r2 = 1.0, worst_offset = 0.0;
  for (const auto& e : j["cells"]) {
    if (!(e["loss_max_m"].get<double>() > 0)) continue;
    ++cells;
    QuarticFit f;
    f.a = e["coefficients"]["a"].get<double>();
    f.c = e["coefficients"]["c"].get<double>();
    const double r2 = e["r_squared"].get<double>();
    bool peak = f(0.5) > 0;
    for (int i = 0; i <= 1000; ++i) peak = peak && f(i / 1000.0) <= f(0.5);
    const double offset = std::abs(e["argmax_sigma"].get<double>() - 0.5);
    min_r2 = std::min(min_r2, r2);
    worst_offset = std::max(worst_offset, offset);
    bad += !(r2 >= 0.9 && peak && offset <= 0.1 + 1e-9);
  }
  return {cells > 0 && bad == 0, std::to_string(cells) + " cells with loss, " + std::to_string(bad) +
                                     " failing; min r2 " + text::fmt_fixed(min_r2, 4) + ", max argmax offset " +
                                     fmt(worst_offset)};
}

Outcome dissolvedness(const DeskRun& r) {
  std::size_t cells = 0, exempt = 0;
  for (double nu : r.cfg.grid.nu)
    for (double d : r.cfg.grid.delta) {
      const auto& lo = r.means.at({nu, d, 0.5, 0.0});
      const auto& hi = r.means.at({nu, d, 0.5, 1.0});
      if (lo.loss == 0 && hi.loss == 0) continue;
      ++cells;
      exempt += lo.loss > hi.loss;
    }
  return {cells > 0 && exempt * 10 <= cells,
          std::to_string(exempt) + " of " + std::to_string(cells) + " cells with loss have rho=0 above rho=1"};
}

std::string without_timestamp(const std::string& s) {
  std::istringstream in(s);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("# created_at=", 0) != 0) out += line + "\n";
  return out;
}

Outcome determinism(const DeskRun& a, const DeskRun& b) {
  const fs::path pa = a.cfg.output_dir, pb = b.cfg.output_dir;
  std::vector<std::string> differ;
  if (without_timestamp(detail::read_file(pa / files::kResults)) !=
      without_timestamp(detail::read_file(pb / files::kResults)))
    differ.push_back(files::kResults);
  for (const char* f : {files::kFitPower, files::kFitAlpha, files::kFitBeta, files::kFitQuartic})
    if (detail::read_file(pa / f) != detail::read_file(pb / f)) differ.push_back(f);
  std::string d = differ.empty() ? "results table and 4 fit reports identical" : "differ:";
  for (const auto& f : differ) d += " " + f;
  return {differ.empty(), d};
}

}  // namespace

int main() {
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const fs::path work = fs::temp_directory_path() / ("segmarket_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);

  run(1, "matching oracle equivalence", matching_oracle);
  run(7, "fit recovery", fit_recovery);
  run(8, "frontier oracle", frontier_oracle);

  ExperimentConfig desk;
  std::optional<DeskRun> first, second;
  try {
    desk = load_config(SEGMARKET_DESK_CONFIG);
    first = desk_pipeline(desk, work / "first", cores);
  } catch (const std::exception& e) {
    std::cout << "desk pipeline failed: " << e.what() << std::endl;
  }
  auto with_run = [&](int n, const std::string& title, auto check) {
    run(n, title, [&] { return first ? check(*first) : Outcome{false, "no desk run"}; });
  };
  with_run(2, "market-structure ordering", ordering);
  with_run(3, "economies of scale", economies_of_scale);
  with_run(4, "non-monotonic beta(delta)", fall_and_rise);
  with_run(5, "unevenness peak", unevenness_peak);
  with_run(6, "dissolvedness effect", dissolvedness);
  run(9, "determinism", [&] {
    if (!first) return Outcome{false, "no desk run"};
    second = desk_pipeline(desk, work / "second", cores + 1);
    return determinism(*first, *second);
  });

  fs::remove_all(work);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
