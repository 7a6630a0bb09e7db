#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "segmarket/errors.hpp"
#include "segmarket/parallel.hpp"
#include "segmarket/street_network.hpp"
#include "segmarket/text.hpp"
#include "segmarket/trip_data.hpp"

namespace segmarket {

inline constexpr double kDefaultDeltaCap = 600.0;

// Slack for comparing accumulated float travel times against integer caps.
inline constexpr double kDelayEpsilon = 1e-6;

// Pickup/dropoff sequence for a pair (a, b) with a the lower trip id.
// Numbering follows the canonical orientation: 1 = trip a, 2 = trip b.
enum class ShareOrder : std::uint8_t { O1O2D1D2, O1O2D2D1, O2O1D2D1, O2O1D1D2 };

inline constexpr std::array<ShareOrder, 4> kAllOrders{ShareOrder::O1O2D1D2, ShareOrder::O1O2D2D1,
                                                      ShareOrder::O2O1D2D1, ShareOrder::O2O1D1D2};

inline std::string_view to_string(ShareOrder o) {
  switch (o) {
    case ShareOrder::O1O2D1D2: return "o1o2d1d2";
    case ShareOrder::O1O2D2D1: return "o1o2d2d1";
    case ShareOrder::O2O1D2D1: return "o2o1d2d1";
    case ShareOrder::O2O1D1D2: return "o2o1d1d2";
  }
  return "?";
}

inline ShareOrder parse_share_order(std::string_view s) {
  for (auto o : kAllOrders)
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown share order '" + std::string(s) + "'");
}

struct ShareOption {
  ShareOrder order{};
  double shared_distance = 0.0;  // meters
  double delay_1 = 0.0;          // seconds, trip a
  double delay_2 = 0.0;          // seconds, trip b
  double saving = 0.0;           // meters
  std::int64_t saving_mm = 0;    // saving rounded to millimeters; matching weight

  double max_delay() const { return std::max(delay_1, delay_2); }
};

// At most one option per order survives, so four slots suffice.
class OptionList {
 public:
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  const ShareOption* begin() const { return items_.data(); }
  const ShareOption* end() const { return items_.data() + size_; }
  const ShareOption& operator[](std::size_t i) const { return items_[i]; }
  const ShareOption& front() const { return items_[0]; }
  const ShareOption& back() const { return items_[size_ - 1]; }
  void push_back(const ShareOption& o) { items_[size_++] = o; }

 private:
  std::array<ShareOption, 4> items_{};
  std::uint8_t size_ = 0;
};

// Undirected edge between two trips. Options are Pareto-pruned on
// (max delay, saving) and sorted by max delay ascending, so savings are
// strictly increasing along the list.
struct ShareEdge {
  std::int64_t trip_a = 0;
  std::int64_t trip_b = 0;
  std::uint32_t index_a = 0;  // positions in the owning TripSet
  std::uint32_t index_b = 0;
  OptionList options;

  // Best option usable under tightness delta, if any.
  const ShareOption* best_within(double delta) const {
    const ShareOption* best = nullptr;
    for (const auto& o : options)
      if (o.max_delay() <= delta + kDelayEpsilon) best = &o;
    return best;
  }
};

// Keeps options that are not dominated by another with <= max delay and
// >= saving; one representative of exact duplicates survives.
inline OptionList pareto_prune(std::vector<ShareOption> opts) {
  std::sort(opts.begin(), opts.end(), [](const ShareOption& x, const ShareOption& y) {
    if (x.max_delay() != y.max_delay()) return x.max_delay() < y.max_delay();
    if (x.saving_mm != y.saving_mm) return x.saving_mm > y.saving_mm;
    return x.order < y.order;
  });
  OptionList out;
  for (const auto& o : opts)
    if (out.empty() || o.saving_mm > out.back().saving_mm) out.push_back(o);
  return out;
}

namespace detail {

inline std::int64_t to_mm(double meters) { return std::llround(meters * 1000.0); }

// Drives one vehicle through the stop sequence of `order`. The vehicle
// appears at the first pickup at that passenger's request time and waits at
// the second pickup when early.
inline ShareOption simulate_order(ShareOrder order, const Trip& a, NodeIndex oa, NodeIndex da, const Trip& b,
                                  NodeIndex ob, NodeIndex db, const PathCache& paths) {
  struct Stop {
    NodeIndex node;
    bool first_trip;
    bool pickup;
  };
  std::array<Stop, 4> stops{};
  switch (order) {
    case ShareOrder::O1O2D1D2: stops = {{{oa, true, true}, {ob, false, true}, {da, true, false}, {db, false, false}}}; break;
    case ShareOrder::O1O2D2D1: stops = {{{oa, true, true}, {ob, false, true}, {db, false, false}, {da, true, false}}}; break;
    case ShareOrder::O2O1D2D1: stops = {{{ob, false, true}, {oa, true, true}, {db, false, false}, {da, true, false}}}; break;
    case ShareOrder::O2O1D1D2: stops = {{{ob, false, true}, {oa, true, true}, {da, true, false}, {db, false, false}}}; break;
  }
  ShareOption opt;
  opt.order = order;
  double t = stops[0].first_trip ? a.request_time : b.request_time;
  for (std::size_t k = 1; k < stops.size(); ++k) {
    const auto leg = stops[k - 1].node == stops[k].node ? PathMetric{} : paths.metric(stops[k - 1].node, stops[k].node);
    t += leg.duration;
    opt.shared_distance += leg.distance;
    const Trip& who = stops[k].first_trip ? a : b;
    if (stops[k].pickup) {
      t = std::max(t, who.request_time);
    } else {
      const double delay = std::max(0.0, t - (who.request_time + who.direct_duration));
      (stops[k].first_trip ? opt.delay_1 : opt.delay_2) = delay;
    }
  }
  opt.saving = a.direct_distance + b.direct_distance - opt.shared_distance;
  opt.saving_mm = to_mm(a.direct_distance) + to_mm(b.direct_distance) - to_mm(opt.shared_distance);
  return opt;
}

}  // namespace detail

// Shareability of two trips under a delay cap; empty when no order is
// feasible with positive saving or the request times are more than
// delta_cap apart.
inline std::optional<ShareEdge> evaluate_pair(const Trip& first, const Trip& second, const PathCache& paths,
                                              double delta_cap) {
  if (first.trip_id == second.trip_id) throw ArgumentError("cannot pair a trip with itself");
  if (std::abs(first.request_time - second.request_time) > delta_cap) return std::nullopt;
  const bool swap = second.trip_id < first.trip_id;
  const Trip& a = swap ? second : first;
  const Trip& b = swap ? first : second;
  const auto& net = paths.network();
  const NodeIndex oa = net.require_index(a.origin), da = net.require_index(a.destination);
  const NodeIndex ob = net.require_index(b.origin), db = net.require_index(b.destination);
  std::vector<ShareOption> feasible;
  for (auto order : kAllOrders) {
    auto opt = detail::simulate_order(order, a, oa, da, b, ob, db, paths);
    if (opt.max_delay() <= delta_cap + kDelayEpsilon && opt.saving_mm > 0 && opt.shared_distance > 0.0)
      feasible.push_back(opt);
  }
  if (feasible.empty()) return std::nullopt;
  ShareEdge e;
  e.trip_a = a.trip_id;
  e.trip_b = b.trip_id;
  e.options = pareto_prune(std::move(feasible));
  return e;
}

inline std::optional<ShareEdge> evaluate_pair(const Trip& first, const Trip& second, const StreetNetwork& net,
                                              double delta_cap) {
  PathCache paths(net);
  return evaluate_pair(first, second, paths, delta_cap);
}

// Trips as nodes, share edges as weighted alternatives. Sub-networks
// produced by sampling keep the full trip set and list the surviving trip
// positions in `nodes`.
struct ShareabilityNetwork {
  std::shared_ptr<const TripSet> trips;
  std::vector<std::uint32_t> nodes;  // ascending positions into *trips
  std::vector<ShareEdge> edges;      // sorted by (trip_a, trip_b)
  double delta_cap = kDefaultDeltaCap;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const { return edges.size(); }
  const Trip& trip(std::uint32_t index) const { return (*trips)[index]; }
};

// All shareable pairs whose request times lie within delta_cap of each
// other. Output is independent of the worker count.
inline ShareabilityNetwork build_network(std::shared_ptr<const TripSet> trips, const PathCache& paths,
                                         double delta_cap = kDefaultDeltaCap, unsigned threads = 1) {
  if (!(delta_cap > 0.0)) throw ArgumentError("delta_cap must be positive");
  ShareabilityNetwork g;
  g.delta_cap = delta_cap;
  g.trips = trips;
  const auto& ts = *trips;
  const auto n = static_cast<std::uint32_t>(ts.size());
  g.nodes.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) g.nodes[i] = i;

  std::vector<std::uint32_t> by_time(g.nodes);
  std::stable_sort(by_time.begin(), by_time.end(),
                   [&](std::uint32_t x, std::uint32_t y) { return ts[x].request_time < ts[y].request_time; });
  // warm the cache for every trip endpoint so workers mostly read
  const auto& net = paths.network();
  for (const auto& t : ts.trips) {
    paths.tree(net.require_index(t.origin));
    paths.tree(net.require_index(t.destination));
  }
  std::vector<std::vector<ShareEdge>> found(n);
  parallel_for(n, threads, [&](std::size_t k) {
    const std::uint32_t i = by_time[k];
    for (std::size_t l = k + 1; l < n; ++l) {
      const std::uint32_t j = by_time[l];
      if (ts[j].request_time - ts[i].request_time > delta_cap) break;
      if (auto e = evaluate_pair(ts[i], ts[j], paths, delta_cap)) {
        const bool i_is_a = ts[i].trip_id == e->trip_a;
        e->index_a = i_is_a ? i : j;
        e->index_b = i_is_a ? j : i;
        found[k].push_back(*e);
      }
    }
  });
  for (auto& f : found) g.edges.insert(g.edges.end(), f.begin(), f.end());
  std::sort(g.edges.begin(), g.edges.end(), [](const ShareEdge& x, const ShareEdge& y) {
    return std::pair(x.trip_a, x.trip_b) < std::pair(y.trip_a, y.trip_b);
  });
  return g;
}

inline ShareabilityNetwork build_network(std::shared_ptr<const TripSet> trips, const StreetNetwork& net,
                                         double delta_cap = kDefaultDeltaCap, unsigned threads = 1) {
  PathCache paths(net);
  return build_network(std::move(trips), paths, delta_cap, threads);
}

// JSON lines: a header object, then one object per edge.
inline void save_shareability(const ShareabilityNetwork& g, std::ostream& out) {
  nlohmann::ordered_json header;
  header["format"] = "shareability-network";
  header["trips"] = g.node_count();
  header["edges"] = g.edge_count();
  header["delta_cap_s"] = g.delta_cap;
  header["network_ref"] = g.trips->network_ref;
  out << header.dump() << '\n';
  for (const auto& e : g.edges) {
    nlohmann::ordered_json j;
    j["a"] = e.trip_a;
    j["b"] = e.trip_b;
    auto& opts = j["options"] = nlohmann::ordered_json::array();
    for (const auto& o : e.options) {
      nlohmann::ordered_json oj;
      oj["order"] = to_string(o.order);
      oj["saving_m"] = o.saving;
      oj["max_delay_s"] = o.max_delay();
      oj["shared_m"] = o.shared_distance;
      oj["delay_a_s"] = o.delay_1;
      oj["delay_b_s"] = o.delay_2;
      oj["saving_mm"] = o.saving_mm;
      opts.push_back(oj);
    }
    out << j.dump() << '\n';
  }
}

// Reads a file written by save_shareability. `trips` must be the trip set the
// network was built from.
inline ShareabilityNetwork load_shareability(const std::string& path, std::shared_ptr<const TripSet> trips) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open shareability file " + path);
  std::string line;
  std::size_t lineno = 0;
  ShareabilityNetwork g;
  g.trips = trips;
  std::unordered_map<std::int64_t, std::uint32_t> index;
  for (std::uint32_t i = 0; i < trips->size(); ++i) index.emplace((*trips)[i].trip_id, i);
  try {
    if (!std::getline(in, line)) throw ParseError("empty shareability file", 1);
    ++lineno;
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "shareability-network") throw ParseError("not a shareability network file", 1);
    if (header.at("trips").get<std::size_t>() != trips->size())
      throw ParseError("trip count does not match the supplied trip set", 1);
    g.delta_cap = header.at("delta_cap_s").get<double>();
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line);
      ShareEdge e;
      e.trip_a = j.at("a").get<std::int64_t>();
      e.trip_b = j.at("b").get<std::int64_t>();
      if (!index.count(e.trip_a) || !index.count(e.trip_b)) throw ParseError("edge references unknown trip", lineno);
      e.index_a = index[e.trip_a];
      e.index_b = index[e.trip_b];
      for (const auto& oj : j.at("options")) {
        ShareOption o;
        o.order = parse_share_order(oj.at("order").get<std::string>());
        o.saving = oj.at("saving_m").get<double>();
        o.shared_distance = oj.at("shared_m").get<double>();
        o.delay_1 = oj.at("delay_a_s").get<double>();
        o.delay_2 = oj.at("delay_b_s").get<double>();
        o.saving_mm = oj.at("saving_mm").get<std::int64_t>();
        if (e.options.size() == 4) throw ParseError("more than four options on one edge", lineno);
        e.options.push_back(o);
      }
      if (e.options.empty()) throw ParseError("edge without options", lineno);
      g.edges.push_back(e);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(ex.what(), lineno);
  } catch (const std::invalid_argument& ex) {
    throw ParseError(ex.what(), lineno);
  }
  g.nodes.resize(trips->size());
  for (std::uint32_t i = 0; i < trips->size(); ++i) g.nodes[i] = i;
  return g;
}

}  // namespace segmarket
