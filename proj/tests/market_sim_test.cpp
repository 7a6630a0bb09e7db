#include "segmarket/market_sim.hpp"

#include <gtest/gtest.h>

#include <set>

#include "segmarket/trip_data.hpp"

namespace segmarket {
namespace {

struct Fixture {
  StreetNetwork net;
  std::shared_ptr<const TripSet> trips;
  ShareabilityNetwork g;
  ZoneAssignment zones;
};

Fixture make_fixture(std::size_t count, double window, std::uint64_t seed, long side = 6) {
  Fixture f{generate_grid(side, side, 200, 10), nullptr, {}, {}};
  f.trips = std::make_shared<const TripSet>(generate_trips(f.net, count, window, std::nullopt, seed));
  f.g = build_network(f.trips, f.net, 600);
  f.zones = zones_by_latitude(f.net);
  return f;
}

std::set<std::int64_t> ids_of(const ShareabilityNetwork& g) {
  std::set<std::int64_t> out;
  for (auto v : g.nodes) out.insert(g.trip(v).trip_id);
  return out;
}

// Brute-force weight of the best option within delta, scanning all options.
std::int64_t oracle_weight(const ShareEdge& e, double delta) {
  std::int64_t best = 0;
  for (const auto& o : e.options)
    if (std::max(o.delay_1, o.delay_2) <= delta + 1e-6) best = std::max(best, o.saving_mm);
  return best;
}

// Optimal saving over a set of trips, from scratch via exhaustive matching.
std::int64_t oracle_saving(const ShareabilityNetwork& full, const std::set<std::int64_t>& members, double delta) {
  WeightedGraph w;
  w.node_ids.assign(members.begin(), members.end());
  for (const auto& e : full.edges)
    if (members.count(e.trip_a) && members.count(e.trip_b))
      if (auto wt = oracle_weight(e, delta); wt > 0) w.edges.push_back({e.trip_a, e.trip_b, wt});
  return brute_force_matching(w).total_weight;
}

std::int64_t oracle_direct(const TripSet& trips, const std::set<std::int64_t>& members) {
  std::int64_t s = 0;
  for (const auto& t : trips.trips)
    if (members.count(t.trip_id)) s += std::llround(t.direct_distance * 1000.0);
  return s;
}

TEST(ShareCount, RoundsHalfUp) {
  EXPECT_EQ(share_count(0.5, 5), 3u);
  EXPECT_EQ(share_count(0.25, 10), 3u);
  EXPECT_EQ(share_count(0.3, 10), 3u);
  EXPECT_EQ(share_count(0.1, 5), 1u);
  EXPECT_EQ(share_count(0.0, 7), 0u);
  EXPECT_EQ(share_count(1.0, 7), 7u);
}

TEST(Zones, NorthernRowsAreBaseOne) {
  const auto net = generate_grid(4, 3, 100, 10);
  const auto z = zones_by_latitude(net);
  ASSERT_EQ(z.zone_of.size(), 12u);
  for (NodeIndex i = 0; i < net.node_count(); ++i)
    EXPECT_EQ(z.of(net.id(i)), net.position(i).y >= 200 ? Zone::Base1 : Zone::Base2);
  EXPECT_THROW(z.of(99), ArgumentError);
}

TEST(SampleThickness, Examples) {
  const auto f = make_fixture(10, 300, 3);
  const auto full = sample_thickness(f.g, 1.0, 5);
  EXPECT_EQ(full.nodes, f.g.nodes);
  EXPECT_EQ(full.edge_count(), f.g.edge_count());
  const auto none = sample_thickness(f.g, 0.0, 5);
  EXPECT_EQ(none.node_count(), 0u);
  EXPECT_EQ(none.edge_count(), 0u);

  const auto half = sample_thickness(f.g, 0.5, 5);
  Rng rng(5);
  const auto perm = rng.permutation(10);
  std::set<std::uint32_t> expect(perm.begin(), perm.begin() + 5);
  EXPECT_EQ(std::set<std::uint32_t>(half.nodes.begin(), half.nodes.end()), expect);
  std::size_t induced = 0;
  for (const auto& e : f.g.edges)
    if (expect.count(e.index_a) && expect.count(e.index_b)) ++induced;
  EXPECT_EQ(half.edge_count(), induced);
  for (const auto& e : half.edges) EXPECT_TRUE(expect.count(e.index_a) && expect.count(e.index_b));
  EXPECT_THROW(sample_thickness(f.g, 1.5, 5), ArgumentError);
}

TEST(SampleThickness, NestedAcrossThickness) {
  const auto f = make_fixture(80, 900, 4);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::set<std::int64_t> prev;
    for (double nu : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      const auto s = ids_of(sample_thickness(f.g, nu, seed));
      EXPECT_TRUE(std::includes(s.begin(), s.end(), prev.begin(), prev.end()));
      EXPECT_EQ(s.size(), share_count(nu, 80));
      prev = s;
    }
  }
}

TripSet three_trips() {
  TripSet t;
  t.trips = {{1, 0, 1, 0, 1000, 100}, {2, 0, 1, 0, 1000, 100}, {3, 0, 1, 0, 1000, 100}};
  return t;
}

ShareOption option(std::int64_t saving_mm, double delay) {
  ShareOption o;
  o.saving_mm = saving_mm;
  o.saving = static_cast<double>(saving_mm) / 1000.0;
  o.delay_1 = delay;
  return o;
}

TEST(FilterTightness, HandBuiltEdge) {
  ShareabilityNetwork g;
  g.trips = std::make_shared<const TripSet>(three_trips());
  g.nodes = {0, 1, 2};
  ShareEdge e{1, 2, 0, 1, pareto_prune({option(300000, 100), option(500000, 200)})};
  ShareEdge z{2, 3, 1, 2, pareto_prune({option(900, 0)})};
  g.edges = {e, z};

  const auto at120 = filter_tightness(g, 120);
  EXPECT_EQ(at120.node_ids, (std::vector<std::int64_t>{1, 2, 3}));
  ASSERT_EQ(at120.edges.size(), 2u);
  EXPECT_EQ(at120.edges[0].weight, 300000);

  const auto at0 = filter_tightness(g, 0);
  ASSERT_EQ(at0.edges.size(), 1u);
  EXPECT_EQ(at0.edges[0].u, 2);

  const auto cap = filter_tightness(g, 600);
  EXPECT_EQ(cap.edges[0].weight, 500000);
  EXPECT_EQ(at120.node_ids.size(), 3u);
  EXPECT_THROW(filter_tightness(g, 601), ArgumentError);
  EXPECT_THROW(filter_tightness(g, -1), ArgumentError);
}

TEST(FilterTightness, AgreesWithOptionScan) {
  const auto f = make_fixture(120, 900, 8);
  for (double d : {0.0, 30.0, 60.0, 120.0, 333.0, 600.0}) {
    const auto w = filter_tightness(f.g, d);
    std::size_t k = 0;
    for (const auto& e : f.g.edges) {
      const auto expect = oracle_weight(e, d);
      if (expect == 0) continue;
      ASSERT_LT(k, w.edges.size());
      EXPECT_EQ(w.edges[k].u, e.trip_a);
      EXPECT_EQ(w.edges[k].v, e.trip_b);
      EXPECT_EQ(w.edges[k].weight, expect);
      ++k;
    }
    EXPECT_EQ(k, w.edges.size());
  }
}

TEST(SplitDuopoly, DegenerateShares) {
  const auto f = make_fixture(30, 600, 9);
  const auto none = split_duopoly(f.g, 0.0, 0.5, f.zones, 1);
  EXPECT_EQ(none.platform1.node_count(), 0u);
  EXPECT_EQ(none.platform2.nodes, f.g.nodes);
  EXPECT_EQ(none.platform2.edge_count(), f.g.edge_count());
  const auto all = split_duopoly(f.g, 1.0, 0.5, f.zones, 1);
  EXPECT_EQ(all.platform1.nodes, f.g.nodes);
  EXPECT_EQ(all.platform2.node_count(), 0u);
  EXPECT_THROW(split_duopoly(f.g, 1.2, 0.5, f.zones, 1), ArgumentError);
}

TEST(SplitDuopoly, FullySegregatedTakesBaseOne) {
  const auto f = make_fixture(50, 600, 10);
  std::set<std::int64_t> base1;
  for (const auto& t : f.trips->trips)
    if (f.net.position(f.net.require_index(t.origin)).y >= 600) base1.insert(t.trip_id);
  ASSERT_GT(base1.size(), 0u);
  const double sigma = static_cast<double>(base1.size()) / 50.0;
  const auto s = split_duopoly(f.g, sigma, 0.0, f.zones, 77);
  EXPECT_EQ(ids_of(s.platform1), base1);
  EXPECT_EQ(s.fallback_drawn, 0u);
  EXPECT_EQ(s.uniform_drawn, 0u);
}

TEST(SplitDuopoly, PartitionAndAccounting) {
  const auto f = make_fixture(60, 600, 11);
  Rng rng(12);
  for (int it = 0; it < 200; ++it) {
    const double sigma = rng.uniform(), rho = rng.uniform();
    const auto sub = sample_thickness(f.g, rng.uniform(), rng.next());
    const auto s = split_duopoly(sub, sigma, rho, f.zones, rng.next());
    const auto a = ids_of(s.platform1), b = ids_of(s.platform2), all = ids_of(sub);
    std::set<std::int64_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(both, both.end()));
    EXPECT_TRUE(both.empty());
    std::set<std::int64_t> cover(a);
    cover.insert(b.begin(), b.end());
    EXPECT_EQ(cover, all);
    EXPECT_EQ(a.size(), share_count(sigma, sub.node_count()));
    EXPECT_EQ(s.zone_drawn + s.uniform_drawn + s.fallback_drawn, a.size());
    EXPECT_EQ(s.uniform_drawn, share_count(rho, a.size()));
    std::size_t base1_in_p1 = 0;
    for (auto v : s.platform1.nodes) base1_in_p1 += f.zones.of(sub.trip(v).origin) == Zone::Base1;
    EXPECT_GE(base1_in_p1, s.zone_drawn);
  }
}

TEST(SplitDuopoly, FallbackWhenZoneExhausted) {
  const auto f = make_fixture(40, 600, 13);
  std::size_t base1 = 0;
  for (const auto& t : f.trips->trips) base1 += f.zones.of(t.origin) == Zone::Base1;
  const auto s = split_duopoly(f.g, 1.0, 0.0, f.zones, 3);
  EXPECT_EQ(s.zone_drawn, base1);
  EXPECT_EQ(s.fallback_drawn, 40 - base1);
  EXPECT_EQ(s.platform1.node_count(), 40u);
}

TEST(EvaluateScenario, ZeroTightnessWithoutIdenticalTrips) {
  const auto f = make_fixture(60, 600, 14);
  const auto r = evaluate_scenario(f.g, {1.0, 0.0, 0.5, 1.0, 1, 2, 0}, f.zones);
  EXPECT_EQ(r.vmt1_mm, r.vmt0_mm);
  EXPECT_EQ(r.vmt2_mm, r.vmt0_mm);
  EXPECT_EQ(r.loss_mm, 0);
  EXPECT_EQ(r.match_rate_mono, 0.0);
}

TEST(EvaluateScenario, DegenerateSplitHasNoLoss) {
  const auto f = make_fixture(80, 600, 15);
  for (double sigma : {0.0, 1.0}) {
    const auto r = evaluate_scenario(f.g, {0.7, 300.0, sigma, 0.3, 5, 6, 0}, f.zones);
    EXPECT_EQ(r.loss_mm, 0);
    EXPECT_EQ(r.vmt1_mm, r.vmt2_mm);
    EXPECT_EQ(r.match_rate_mono, r.match_rate_duo);
  }
}

TEST(EvaluateScenario, RejectsInvalidScenario) {
  const auto f = make_fixture(10, 600, 16);
  EXPECT_THROW(evaluate_scenario(f.g, {1.1, 0, 0.5, 0.5, 0, 0, 0}, f.zones), ArgumentError);
  EXPECT_THROW(evaluate_scenario(f.g, {1, 700, 0.5, 0.5, 0, 0, 0}, f.zones), ArgumentError);
  EXPECT_THROW(evaluate_scenario(f.g, {1, 0, -0.1, 0.5, 0, 0, 0}, f.zones), ArgumentError);
}

TEST(EvaluateScenario, TwelveTripsMatchExhaustiveRecomputation) {
  const auto f = make_fixture(12, 240, 17, 4);
  ASSERT_GT(f.g.edge_count(), 10u);
  Rng rng(18);
  for (int it = 0; it < 60; ++it) {
    MarketScenario s{rng.uniform() < 0.3 ? 1.0 : 0.5 + 0.5 * rng.uniform(), 600 * rng.uniform(), rng.uniform(),
                     rng.uniform(), rng.next(), rng.next(), 0};
    const auto r = evaluate_scenario(f.g, s, f.zones);
    const auto sampled = sample_thickness(f.g, s.thickness, s.thickness_seed);
    const auto members = ids_of(sampled);
    const auto split = split_duopoly(sampled, s.unevenness, s.dissolvedness, f.zones, s.seed);

    const auto vmt0 = oracle_direct(*f.trips, members);
    EXPECT_EQ(r.vmt0_mm, vmt0);
    EXPECT_EQ(r.vmt1_mm, vmt0 - oracle_saving(f.g, members, s.tightness));
    EXPECT_EQ(r.vmt2_mm, vmt0 - oracle_saving(f.g, ids_of(split.platform1), s.tightness) -
                             oracle_saving(f.g, ids_of(split.platform2), s.tightness));
    EXPECT_EQ(r.loss_mm, r.vmt2_mm - r.vmt1_mm);
  }
}

TEST(EvaluateScenario, MarketOrderingHolds) {
  const auto f = make_fixture(150, 1200, 19);
  Rng rng(20);
  for (int it = 0; it < 150; ++it) {
    MarketScenario s{rng.uniform(), 600 * rng.uniform(), rng.uniform(), rng.uniform(), rng.next(), rng.next(), 0};
    const auto r = evaluate_scenario(f.g, s, f.zones);
    EXPECT_LE(r.vmt1_mm, r.vmt2_mm);
    EXPECT_LE(r.vmt2_mm, r.vmt0_mm);
    EXPECT_GE(r.loss_mm, 0);
    EXPECT_GE(r.match_rate_mono, 0.0);
    EXPECT_LE(r.match_rate_mono, 1.0);
    EXPECT_LE(r.avg_detour_mono, s.tightness + 1e-6);
    EXPECT_LE(r.avg_detour_duo, s.tightness + 1e-6);
  }
}

TEST(EvaluateScenario, MonopolyMonotoneInTightness) {
  const auto f = make_fixture(150, 1200, 21);
  std::int64_t prev = std::numeric_limits<std::int64_t>::max();
  for (double d : {0.0, 15.0, 30.0, 60.0, 90.0, 120.0, 240.0, 360.0, 480.0, 600.0}) {
    const auto r = evaluate_scenario(f.g, {0.8, d, 0.5, 1.0, 1, 2, 0}, f.zones);
    EXPECT_LE(r.vmt1_mm, prev);
    prev = r.vmt1_mm;
  }
}

SweepGrid small_grid() { return {{0.2, 0.6, 1.0}, {0, 120, 600}, {0, 0.5, 1}, {0, 1}}; }

TEST(RunSweep, SingleCellEqualsScenario) {
  const auto f = make_fixture(60, 600, 22);
  const auto rows = run_sweep(f.g, {{0.8}, {240}, {0.4}, {0.5}}, 1, 99, f.zones);
  ASSERT_EQ(rows.size(), 1u);
  const auto r = evaluate_scenario(f.g, {0.8, 240, 0.4, 0.5, cell_seed(99, 0, 0), thickness_seed(99, 0), 0}, f.zones);
  EXPECT_EQ(rows[0].seed, cell_seed(99, 0, 0));
  EXPECT_EQ(format_row(rows[0]), format_row({0.8, 240, 0.4, 0.5, 0, cell_seed(99, 0, 0), r}));
}

TEST(RunSweep, RowsCoverGridInCanonicalOrder) {
  const auto f = make_fixture(60, 600, 23);
  const auto grid = small_grid();
  const auto rows = run_sweep(f.g, grid, 2, 5, f.zones);
  ASSERT_EQ(rows.size(), grid.cells() * 2);
  std::size_t k = 0;
  for (double nu : grid.nu)
    for (double d : grid.delta)
      for (double s : grid.sigma)
        for (double r : grid.rho)
          for (std::size_t rep = 0; rep < 2; ++rep, ++k)
            EXPECT_EQ(key_of(rows[k]), RowKey(nu, d, s, r, rep));
}

TEST(RunSweep, ThreadCountDoesNotChangeRows) {
  const auto f = make_fixture(80, 900, 24);
  const auto one = run_sweep(f.g, small_grid(), 2, 5, f.zones);
  SweepOptions opt;
  opt.threads = 4;
  const auto four = run_sweep(f.g, small_grid(), 2, 5, f.zones, opt);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(format_row(one[i]), format_row(four[i]));
}

TEST(RunSweep, ResumeComputesOnlyMissingRows) {
  const auto f = make_fixture(80, 900, 25);
  const auto full = run_sweep(f.g, small_grid(), 2, 5, f.zones);
  SweepOptions opt;
  for (std::size_t i = 0; i < full.size(); i += 2) opt.existing.push_back(full[i]);
  std::size_t computed = 0;
  opt.on_row = [&](const ResultRow&) { ++computed; };
  const auto resumed = run_sweep(f.g, small_grid(), 2, 5, f.zones, opt);
  EXPECT_EQ(computed, full.size() - opt.existing.size());
  ASSERT_EQ(resumed.size(), full.size());
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_EQ(format_row(resumed[i]), format_row(full[i]));
}

TEST(RunSweep, SweepInvariants) {
  const auto f = make_fixture(200, 1800, 26, 8);
  const SweepGrid grid{{0.2, 0.4, 0.6, 0.8, 1.0}, {0, 60, 240, 600}, {0, 0.3, 0.5, 1}, {0, 0.5, 1}};
  const auto rows = run_sweep(f.g, grid, 2, 31, f.zones);
  std::map<std::tuple<double, double, double, std::size_t>, std::vector<const ResultRow*>> by_nu;
  for (const auto& r : rows) {
    const auto& v = r.result;
    EXPECT_LE(v.vmt1_mm, v.vmt2_mm);
    EXPECT_LE(v.vmt2_mm, v.vmt0_mm);
    EXPECT_EQ(v.loss_mm, v.vmt2_mm - v.vmt1_mm);
    if (r.sigma == 0.0 || r.sigma == 1.0) EXPECT_EQ(v.loss_mm, 0);
    by_nu[{r.delta, r.sigma, r.rho, r.replication}].push_back(&r);
  }
  for (const auto& [key, series] : by_nu) {
    ASSERT_EQ(series.size(), grid.nu.size());
    for (std::size_t i = 1; i < series.size(); ++i) {
      EXPECT_LT(series[i - 1]->result.vmt0_mm, series[i]->result.vmt0_mm);
      EXPECT_LE(series[i - 1]->result.vmt1_mm, series[i]->result.vmt1_mm);
      EXPECT_LE(series[i - 1]->result.vmt2_mm, series[i]->result.vmt2_mm);
    }
  }
}

TEST(RunSweep, Preconditions) {
  const auto f = make_fixture(20, 600, 27);
  EXPECT_THROW(run_sweep(f.g, {{}, {0}, {0}, {0}}, 1, 1, f.zones), ArgumentError);
  EXPECT_THROW(run_sweep(f.g, small_grid(), 0, 1, f.zones), ArgumentError);
  EXPECT_THROW(run_sweep(f.g, {{1}, {900}, {0}, {0}}, 1, 1, f.zones), ArgumentError);
}

TEST(ResultRows, FormatParseRoundTrip) {
  const auto f = make_fixture(60, 600, 28);
  for (const auto& r : run_sweep(f.g, small_grid(), 1, 8, f.zones)) {
    const auto line = format_row(r);
    EXPECT_EQ(format_row(parse_row(line)), line);
  }
  EXPECT_THROW(parse_row("1,2,3"), std::invalid_argument);
  const std::string header = kResultHeader;
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 14);
}

}  // namespace
}  // namespace segmarket
