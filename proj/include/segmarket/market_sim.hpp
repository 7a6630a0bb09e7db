#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "segmarket/errors.hpp"
#include "segmarket/matching.hpp"
#include "segmarket/parallel.hpp"
#include "segmarket/rng.hpp"
#include "segmarket/shareability.hpp"
#include "segmarket/text.hpp"

namespace segmarket {

// Half-up rounding of a share of n items.
inline std::size_t share_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5 + 1e-9));
}

struct MarketScenario {
  double thickness = 1.0;   // nu, fraction of trips present
  double tightness = 0.0;   // delta, seconds
  double unevenness = 0.5;  // sigma, market share of platform 1
  double dissolvedness = 1.0;  // rho, share of platform 1 drawn ignoring zones
  std::uint64_t seed = 0;   // drives the duopoly split
  std::uint64_t thickness_seed = 0;  // drives the node sample; shared across a replication
  std::size_t replication = 0;
};

inline void validate(const MarketScenario& s, double delta_cap) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(s.thickness) || !unit(s.unevenness) || !unit(s.dissolvedness))
    throw ArgumentError("nu, sigma and rho must lie in [0, 1]");
  if (!(s.tightness >= 0.0) || s.tightness > delta_cap + kDelayEpsilon)
    throw ArgumentError("delta must lie in [0, delta_cap]");
}

enum class Zone : std::uint8_t { Base1, Base2 };

struct ZoneAssignment {
  std::unordered_map<NodeId, Zone> zone_of;  // street node -> base zone

  Zone of(NodeId node) const {
    auto it = zone_of.find(node);
    if (it == zone_of.end()) throw ArgumentError("node " + std::to_string(node) + " has no zone");
    return it->second;
  }
};

// Northern half of the nodes (by y, ties by id) is base 1, the rest base 2.
// On a grid with an even row count this splits exactly between rows.
inline ZoneAssignment zones_by_latitude(const StreetNetwork& net) {
  std::vector<NodeIndex> order(net.node_count());
  for (NodeIndex i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](NodeIndex a, NodeIndex b) {
    if (net.position(a).y != net.position(b).y) return net.position(a).y > net.position(b).y;
    return net.id(a) < net.id(b);
  });
  ZoneAssignment z;
  for (std::size_t k = 0; k < order.size(); ++k)
    z.zone_of[net.id(order[k])] = k < order.size() / 2 ? Zone::Base1 : Zone::Base2;
  return z;
}

namespace detail {

inline ShareabilityNetwork induced(const ShareabilityNetwork& g, std::vector<std::uint32_t> keep) {
  std::sort(keep.begin(), keep.end());
  ShareabilityNetwork out;
  out.trips = g.trips;
  out.delta_cap = g.delta_cap;
  std::vector<char> in(g.trips->size(), 0);
  for (auto v : keep) in[v] = 1;
  out.nodes = std::move(keep);
  for (const auto& e : g.edges)
    if (in[e.index_a] && in[e.index_b]) out.edges.push_back(e);
  return out;
}

}  // namespace detail

// Keeps round(nu * n) nodes: the prefix of a seeded permutation, so samples
// for a fixed seed are nested across nu.
inline ShareabilityNetwork sample_thickness(const ShareabilityNetwork& g, double nu, std::uint64_t seed) {
  if (!(nu >= 0.0 && nu <= 1.0)) throw ArgumentError("nu must lie in [0, 1]");
  Rng rng(seed);
  const auto perm = rng.permutation(g.node_count());
  const std::size_t k = share_count(nu, g.node_count());
  std::vector<std::uint32_t> keep;
  keep.reserve(k);
  for (std::size_t i = 0; i < k; ++i) keep.push_back(g.nodes[perm[i]]);
  return detail::induced(g, std::move(keep));
}

// Matching view at tightness delta: each edge weighs its best saving among
// options whose max delay is within delta; edges with none are dropped.
inline WeightedGraph filter_tightness(const ShareabilityNetwork& g, double delta) {
  if (!(delta >= 0.0) || delta > g.delta_cap + kDelayEpsilon) throw ArgumentError("delta must lie in [0, delta_cap]");
  WeightedGraph w;
  w.node_ids.reserve(g.node_count());
  for (auto v : g.nodes) w.node_ids.push_back(g.trip(v).trip_id);
  for (const auto& e : g.edges)
    if (const auto* o = e.best_within(delta)) w.edges.push_back({e.trip_a, e.trip_b, o->saving_mm});
  return w;
}

struct DuopolySplit {
  ShareabilityNetwork platform1;
  ShareabilityNetwork platform2;
  std::size_t zone_drawn = 0;
  std::size_t uniform_drawn = 0;
  std::size_t fallback_drawn = 0;  // zone share that base 1 could not supply
};

// Platform 1 takes round(sigma * n) trips: round(rho * k) uniformly from the
// whole market, the rest from trips originating in base 1 (topped up
// uniformly when base 1 runs out). Platform 2 takes everything else.
inline DuopolySplit split_duopoly(const ShareabilityNetwork& g, double sigma, double rho, const ZoneAssignment& zones,
                                  std::uint64_t seed) {
  if (!(sigma >= 0.0 && sigma <= 1.0) || !(rho >= 0.0 && rho <= 1.0))
    throw ArgumentError("sigma and rho must lie in [0, 1]");
  const std::size_t n = g.node_count();
  const std::size_t k = share_count(sigma, n);
  const std::size_t k_uniform = share_count(rho, k);
  const std::size_t k_zone = k - k_uniform;

  Rng rng(seed);
  const auto perm = rng.permutation(n);
  std::vector<char> taken(n, 0);
  DuopolySplit out;
  std::vector<std::uint32_t> p1, p2;
  for (std::size_t i = 0; i < n && out.zone_drawn < k_zone; ++i) {
    const auto v = g.nodes[perm[i]];
    if (zones.of(g.trip(v).origin) != Zone::Base1) continue;
    taken[perm[i]] = 1;
    p1.push_back(v);
    ++out.zone_drawn;
  }
  out.fallback_drawn = k_zone - out.zone_drawn;
  std::size_t need = k_uniform + out.fallback_drawn;
  std::size_t uniform = 0;
  for (std::size_t i = 0; i < n && uniform < need; ++i) {
    if (taken[perm[i]]) continue;
    taken[perm[i]] = 1;
    p1.push_back(g.nodes[perm[i]]);
    ++uniform;
  }
  out.uniform_drawn = uniform - out.fallback_drawn;
  for (std::size_t i = 0; i < n; ++i)
    if (!taken[i]) p2.push_back(g.nodes[i]);
  out.platform1 = detail::induced(g, std::move(p1));
  out.platform2 = detail::induced(g, std::move(p2));
  return out;
}

// Distances are carried as integer millimeters so the market ordering
// vmt_1 <= vmt_2 <= vmt_0 holds exactly.
struct VmtResult {
  std::int64_t vmt0_mm = 0;
  std::int64_t vmt1_mm = 0;
  std::int64_t vmt2_mm = 0;
  std::int64_t loss_mm = 0;
  double match_rate_mono = 0.0;
  double avg_detour_mono = 0.0;
  double match_rate_duo = 0.0;
  double avg_detour_duo = 0.0;
  std::size_t fallback_count = 0;
  std::size_t trips = 0;
  std::size_t platform1_trips = 0;
};

inline std::int64_t total_direct_mm(const ShareabilityNetwork& g) {
  std::int64_t s = 0;
  for (auto v : g.nodes) s += detail::to_mm(g.trip(v).direct_distance);
  return s;
}

struct MonopolyOutcome {
  std::int64_t vmt0_mm = 0;
  std::int64_t saving_mm = 0;
  MatchingStats stats;
};

inline MonopolyOutcome evaluate_monopoly(const ShareabilityNetwork& sampled, double delta) {
  MonopolyOutcome out;
  out.vmt0_mm = total_direct_mm(sampled);
  const auto m = max_weight_matching(filter_tightness(sampled, delta));
  out.saving_mm = m.total_weight;
  out.stats = matching_stats(sampled, m, delta);
  return out;
}

// Duopoly half of a scenario on an already thickness-sampled network.
inline VmtResult evaluate_duopoly(const ShareabilityNetwork& sampled, const MonopolyOutcome& mono,
                                  const MarketScenario& s, const ZoneAssignment& zones) {
  VmtResult r;
  r.trips = sampled.node_count();
  r.vmt0_mm = mono.vmt0_mm;
  r.vmt1_mm = mono.vmt0_mm - mono.saving_mm;
  r.match_rate_mono = mono.stats.matching_rate;
  r.avg_detour_mono = mono.stats.avg_detour;

  const auto split = split_duopoly(sampled, s.unevenness, s.dissolvedness, zones, s.seed);
  r.fallback_count = split.fallback_drawn;
  r.platform1_trips = split.platform1.node_count();
  std::int64_t duo_saving = 0;
  std::size_t matched = 0;
  double detour = 0.0;
  for (const auto* p : {&split.platform1, &split.platform2}) {
    if (p->edges.empty()) continue;
    const auto m = max_weight_matching(filter_tightness(*p, s.tightness));
    duo_saving += m.total_weight;
    const auto st = matching_stats(*p, m, s.tightness);
    matched += st.matched_passengers;
    detour += st.detour_sum;
  }
  r.vmt2_mm = mono.vmt0_mm - duo_saving;
  r.loss_mm = r.vmt2_mm - r.vmt1_mm;
  if (r.trips > 0) r.match_rate_duo = static_cast<double>(matched) / static_cast<double>(r.trips);
  if (matched > 0) r.avg_detour_duo = detour / static_cast<double>(matched);
  return r;
}

// Full pipeline for one configuration: thickness sample, then a monopoly
// branch and a duopoly branch on the same sampled trips.
inline VmtResult evaluate_scenario(const ShareabilityNetwork& g, const MarketScenario& s, const ZoneAssignment& zones) {
  validate(s, g.delta_cap);
  const auto sampled = sample_thickness(g, s.thickness, s.thickness_seed);
  return evaluate_duopoly(sampled, evaluate_monopoly(sampled, s.tightness), s, zones);
}

struct SweepGrid {
  std::vector<double> nu;
  std::vector<double> delta;
  std::vector<double> sigma;
  std::vector<double> rho;

  std::size_t cells() const { return nu.size() * delta.size() * sigma.size() * rho.size(); }
};

struct ResultRow {
  double nu = 0.0;
  double delta = 0.0;
  double sigma = 0.0;
  double rho = 0.0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  VmtResult result;
};

using RowKey = std::tuple<double, double, double, double, std::size_t>;

inline RowKey key_of(const ResultRow& r) { return {r.nu, r.delta, r.sigma, r.rho, r.replication}; }

inline std::uint64_t thickness_seed(std::uint64_t base_seed, std::size_t replication) {
  return derive_seed({base_seed, 0x7468696e6bULL, replication});
}

inline std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t cell, std::size_t replication) {
  return derive_seed({base_seed, cell, replication});
}

struct SweepOptions {
  unsigned threads = 1;
  // rows already computed; matching (grid point, replication) pairs are skipped
  std::vector<ResultRow> existing;
  // called once per newly computed row, serialized by the sweep
  std::function<void(const ResultRow&)> on_row;
};

// Canonical row order: nu, delta, sigma, rho (grid order), then replication.
inline std::vector<ResultRow> run_sweep(const ShareabilityNetwork& g, const SweepGrid& grid, std::size_t replications,
                                        std::uint64_t base_seed, const ZoneAssignment& zones,
                                        const SweepOptions& options = {}) {
  if (grid.cells() == 0) throw ArgumentError("sweep grid must be non-empty in every dimension");
  if (replications < 1) throw ArgumentError("replications must be at least 1");
  for (double d : grid.delta) validate(MarketScenario{1.0, d, 0.0, 0.0}, g.delta_cap);
  for (double v : grid.nu) validate(MarketScenario{v, 0.0, 0.0, 0.0}, g.delta_cap);
  for (double v : grid.sigma) validate(MarketScenario{1.0, 0.0, v, 0.0}, g.delta_cap);
  for (double v : grid.rho) validate(MarketScenario{1.0, 0.0, 0.0, v}, g.delta_cap);

  std::set<RowKey> done;
  for (const auto& r : options.existing) done.insert(key_of(r));

  const std::size_t nd = grid.delta.size(), ns = grid.sigma.size(), nr = grid.rho.size();
  // one unit = (replication, nu, delta); it owns every (sigma, rho) row
  const std::size_t units = replications * grid.nu.size() * nd;
  std::vector<std::vector<ResultRow>> produced(units);
  std::mutex emit;
  parallel_for(units, options.threads, [&](std::size_t u) {
    const std::size_t rep = u / (grid.nu.size() * nd);
    const std::size_t inu = (u / nd) % grid.nu.size();
    const std::size_t idl = u % nd;
    std::vector<std::pair<std::size_t, std::size_t>> todo;
    for (std::size_t is = 0; is < ns; ++is)
      for (std::size_t ir = 0; ir < nr; ++ir)
        if (!done.count({grid.nu[inu], grid.delta[idl], grid.sigma[is], grid.rho[ir], rep})) todo.emplace_back(is, ir);
    if (todo.empty()) return;
    const auto sampled = sample_thickness(g, grid.nu[inu], thickness_seed(base_seed, rep));
    const auto mono = evaluate_monopoly(sampled, grid.delta[idl]);
    for (auto [is, ir] : todo) {
      const std::size_t cell = ((inu * nd + idl) * ns + is) * nr + ir;
      MarketScenario s{grid.nu[inu], grid.delta[idl], grid.sigma[is], grid.rho[ir], cell_seed(base_seed, cell, rep),
                       thickness_seed(base_seed, rep), rep};
      ResultRow row{s.thickness, s.tightness, s.unevenness, s.dissolvedness, rep, s.seed,
                    evaluate_duopoly(sampled, mono, s, zones)};
      if (options.on_row) {
        std::lock_guard lock(emit);
        options.on_row(row);
      }
      produced[u].push_back(row);
    }
  });

  std::map<RowKey, ResultRow> all;
  for (const auto& r : options.existing) all.emplace(key_of(r), r);
  for (auto& rows : produced)
    for (auto& r : rows) all.emplace(key_of(r), r);
  std::vector<ResultRow> out;
  out.reserve(grid.cells() * replications);
  for (double nu : grid.nu)
    for (double d : grid.delta)
      for (double sg : grid.sigma)
        for (double rh : grid.rho)
          for (std::size_t rep = 0; rep < replications; ++rep) {
            auto it = all.find({nu, d, sg, rh, rep});
            if (it != all.end()) out.push_back(it->second);
          }
  return out;
}

inline constexpr const char* kResultHeader =
    "nu,delta_s,sigma,rho,replication,seed,vmt0_m,vmt1_m,vmt2_m,loss_m,match_rate_mono,avg_detour_mono_s,"
    "match_rate_duo,avg_detour_duo_s,fallback_count";

inline std::string format_row(const ResultRow& r) {
  using text::fmt_double;
  using text::fmt_mm;
  const auto& v = r.result;
  return fmt_double(r.nu) + ',' + fmt_double(r.delta) + ',' + fmt_double(r.sigma) + ',' + fmt_double(r.rho) + ',' +
         std::to_string(r.replication) + ',' + std::to_string(r.seed) + ',' + fmt_mm(v.vmt0_mm) + ',' +
         fmt_mm(v.vmt1_mm) + ',' + fmt_mm(v.vmt2_mm) + ',' + fmt_mm(v.loss_mm) + ',' + fmt_double(v.match_rate_mono) +
         ',' + fmt_double(v.avg_detour_mono) + ',' + fmt_double(v.match_rate_duo) + ',' +
         fmt_double(v.avg_detour_duo) + ',' + std::to_string(v.fallback_count);
}

namespace detail {

inline std::int64_t parse_mm(const std::string& s) {
  const auto dot = s.find('.');
  if (dot == std::string::npos || s.size() - dot != 4) throw std::invalid_argument("bad meters value '" + s + "'");
  const bool neg = !s.empty() && s[0] == '-';
  const auto whole = text::parse_int(s.substr(neg ? 1 : 0, dot - (neg ? 1 : 0)));
  const auto frac = text::parse_int(s.substr(dot + 1));
  return (neg ? -1 : 1) * (whole * 1000 + frac);
}

}  // namespace detail

inline ResultRow parse_row(const std::string& line) {
  const auto f = text::split(line, ',');
  if (f.size() != 15) throw std::invalid_argument("expected 15 fields, got " + std::to_string(f.size()));
  ResultRow r;
  r.nu = text::parse_double(f[0]);
  r.delta = text::parse_double(f[1]);
  r.sigma = text::parse_double(f[2]);
  r.rho = text::parse_double(f[3]);
  r.replication = static_cast<std::size_t>(text::parse_int(f[4]));
  r.seed = std::stoull(f[5]);
  r.result.vmt0_mm = detail::parse_mm(f[6]);
  r.result.vmt1_mm = detail::parse_mm(f[7]);
  r.result.vmt2_mm = detail::parse_mm(f[8]);
  r.result.loss_mm = detail::parse_mm(f[9]);
  r.result.match_rate_mono = text::parse_double(f[10]);
  r.result.avg_detour_mono = text::parse_double(f[11]);
  r.result.match_rate_duo = text::parse_double(f[12]);
  r.result.avg_detour_duo = text::parse_double(f[13]);
  r.result.fallback_count = static_cast<std::size_t>(text::parse_int(f[14]));
  return r;
}

}  // namespace segmarket
