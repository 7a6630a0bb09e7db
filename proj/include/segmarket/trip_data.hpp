#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "segmarket/errors.hpp"
#include "segmarket/rng.hpp"
#include "segmarket/street_network.hpp"
#include "segmarket/text.hpp"

namespace segmarket {

// Trips shorter than this (network distance) are excluded.
inline constexpr double kMinTripDistance = 100.0;

struct Trip {
  std::int64_t trip_id = 0;
  NodeId origin = 0;
  NodeId destination = 0;
  double request_time = 0.0;     // seconds since experiment start
  double direct_distance = 0.0;  // meters
  double direct_duration = 0.0;  // seconds
};

struct TripSet {
  std::vector<Trip> trips;
  std::string network_ref;

  std::size_t size() const { return trips.size(); }
  bool empty() const { return trips.empty(); }
  const Trip& operator[](std::size_t i) const { return trips[i]; }
};

// Stable fingerprint of a network's topology and weights.
inline std::string network_fingerprint(const StreetNetwork& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  auto bits = [](double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, sizeof u);
    return u;
  };
  for (NodeIndex i = 0; i < net.node_count(); ++i) feed(static_cast<std::uint64_t>(net.id(i)));
  for (const auto& e : net.edges()) {
    feed(static_cast<std::uint64_t>(e.from));
    feed(static_cast<std::uint64_t>(e.to));
    feed(bits(e.length));
    feed(bits(e.travel_time));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct IngestReport {
  std::size_t rows = 0;
  std::size_t accepted = 0;
  std::size_t malformed = 0;
  std::size_t no_snap = 0;
  std::size_t too_short = 0;
  std::size_t same_node = 0;
  std::vector<std::string> malformed_details;  // "line N: reason"

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["rows"] = rows;
    j["accepted"] = accepted;
    j["dropped"] = {{"malformed", malformed}, {"no_snap", no_snap}, {"too_short", too_short}, {"same_node", same_node}};
    j["malformed_details"] = malformed_details;
    return j;
  }
};

namespace detail {

inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace detail

// Seconds since the Unix epoch for "YYYY-MM-DD[T| ]HH:MM:SS[.fff][Z]".
inline double parse_iso8601(std::string_view s) {
  auto num = [&](std::size_t pos, std::size_t len) -> std::int64_t {
    if (pos + len > s.size()) throw std::invalid_argument("truncated datetime '" + std::string(s) + "'");
    return text::parse_int(s.substr(pos, len));
  };
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
    throw std::invalid_argument("bad datetime '" + std::string(s) + "'");
  const auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2), se = num(17, 2);
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60)
    throw std::invalid_argument("datetime field out of range '" + std::string(s) + "'");
  double frac = 0.0;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    std::size_t end = pos + 1;
    while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    frac = text::parse_double(std::string("0") + std::string(s.substr(pos, end - pos)));
    pos = end;
  }
  if (pos < s.size() && s.substr(pos) != "Z") throw std::invalid_argument("unsupported datetime suffix '" + std::string(s) + "'");
  const auto days = detail::days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return static_cast<double>(days * 86400 + h * 3600 + mi * 60 + se) + frac;
}

// Reads the trip CSV, snaps endpoints and applies the cleaning rules.
// Coordinates are lon/lat when the network carries a projection anchor and
// planar meters otherwise.
inline std::pair<TripSet, IngestReport> ingest_trips(const std::string& path, const StreetNetwork& net,
                                                     double max_snap_distance = 100.0) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trip file " + path);
  std::string line;
  std::size_t lineno = 0;
  // header (comment lines allowed before it)
  while (std::getline(in, line)) {
    ++lineno;
    if (!text::trim(line).empty() && text::trim(line)[0] != '#') break;
  }
  const std::vector<std::string> expected{"trip_id",    "pickup_datetime", "dropoff_datetime", "pickup_lon",
                                          "pickup_lat", "dropoff_lon",     "dropoff_lat"};
  if (text::split(text::trim(line), ',') != expected)
    throw ParseError("trip file header must be " + std::string("trip_id,pickup_datetime,dropoff_datetime,"
                                                               "pickup_lon,pickup_lat,dropoff_lon,dropoff_lat"),
                     lineno);

  struct Row {
    std::int64_t id;
    double pickup;
    Point from, to;
  };
  IngestReport report;
  std::vector<Row> rows;
  std::unordered_set<std::int64_t> ids;
  auto place = [&net](double a, double b) { return net.anchor() ? net.anchor()->project(a, b) : Point{a, b}; };
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = text::trim(line);
    if (s.empty() || s[0] == '#') continue;
    ++report.rows;
    const auto f = text::split(s, ',');
    try {
      if (f.size() != 7) throw std::invalid_argument("expected 7 fields, got " + std::to_string(f.size()));
      Row r{text::parse_int(f[0]), parse_iso8601(f[1]), place(text::parse_double(f[3]), text::parse_double(f[4])),
            place(text::parse_double(f[5]), text::parse_double(f[6]))};
      parse_iso8601(f[2]);
      if (!ids.insert(r.id).second) throw std::invalid_argument("duplicate trip_id " + f[0]);
      rows.push_back(r);
    } catch (const std::invalid_argument& ex) {
      ++report.malformed;
      report.malformed_details.push_back("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }

  TripSet set;
  set.network_ref = network_fingerprint(net);
  if (rows.empty()) return {std::move(set), report};
  double t0 = rows.front().pickup;
  for (const auto& r : rows) t0 = std::min(t0, r.pickup);

  NodeLocator locator(net, max_snap_distance);
  PathCache paths(net);
  for (const auto& r : rows) {
    const auto o = locator.nearest(r.from), d = locator.nearest(r.to);
    if (!o || !d) {
      ++report.no_snap;
      continue;
    }
    if (*o == *d) {
      ++report.same_node;
      continue;
    }
    const auto m = paths.metric(net.require_index(*o), net.require_index(*d));
    if (m.distance < kMinTripDistance) {
      ++report.too_short;
      continue;
    }
    set.trips.push_back({r.id, *o, *d, r.pickup - t0, m.distance, m.duration});
  }
  report.accepted = set.trips.size();
  return {std::move(set), report};
}

// Synthetic demand: endpoints drawn uniformly (or by per-node weight, in
// node-index order), pairs closer than kMinTripDistance rejected, request
// times uniform on [0, time_window). Trip ids are 0..count-1.
inline TripSet generate_trips(const StreetNetwork& net, std::size_t count, double time_window,
                              const std::optional<std::vector<double>>& zone_weights, std::uint64_t seed) {
  if (count < 1) throw ArgumentError("trip count must be at least 1");
  if (!(time_window > 0.0)) throw ArgumentError("time window must be positive");
  std::vector<double> cumulative;
  if (zone_weights) {
    if (zone_weights->size() != net.node_count()) throw ArgumentError("zone weights must cover every node");
    double acc = 0.0;
    for (double w : *zone_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("zone weights must be finite and non-negative");
      acc += w;
      cumulative.push_back(acc);
    }
    if (!(acc > 0.0)) throw ArgumentError("zone weights sum to zero");
  }
  Rng rng(seed);
  auto draw = [&]() -> NodeIndex {
    if (cumulative.empty()) return static_cast<NodeIndex>(rng.below(net.node_count()));
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    auto idx = static_cast<NodeIndex>(std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1));
    while (zone_weights->at(idx) == 0.0) ++idx;  // u landed on a zero-width slot boundary
    return idx;
  };

  PathCache paths(net);
  auto admissible_pair_exists = [&]() {
    std::vector<NodeIndex> support;
    for (NodeIndex i = 0; i < net.node_count(); ++i)
      if (cumulative.empty() || (*zone_weights)[i] > 0.0) support.push_back(i);
    for (NodeIndex o : support) {
      const auto& tree = paths.tree(o);
      for (NodeIndex d : support)
        if (d != o && tree[d].distance >= kMinTripDistance) return true;
    }
    return false;
  };

  TripSet set;
  set.network_ref = network_fingerprint(net);
  set.trips.reserve(count);
  std::size_t rejections = 0;
  bool feasibility_checked = false;
  while (set.trips.size() < count) {
    const NodeIndex o = draw(), d = draw();
    const auto m = o == d ? PathMetric{} : paths.metric(o, d);
    if (o == d || m.distance < kMinTripDistance) {
      if (++rejections >= 1000 && !feasibility_checked) {
        if (!admissible_pair_exists())
          throw StructuralError("network admits no origin/destination pair at least 100 m apart");
        feasibility_checked = true;
      }
      continue;
    }
    rejections = 0;
    const double t = rng.uniform() * time_window;
    set.trips.push_back({static_cast<std::int64_t>(set.trips.size()), net.id(o), net.id(d), t, m.distance, m.duration});
  }
  return set;
}

inline void save_trips(const TripSet& set, std::ostream& out) {
  out << "# network_ref=" << set.network_ref << "\n";
  out << "trip_id,origin,destination,request_time_s,direct_distance_m,direct_duration_s\n";
  for (const auto& t : set.trips)
    out << t.trip_id << ',' << t.origin << ',' << t.destination << ',' << text::fmt_double(t.request_time) << ','
        << text::fmt_double(t.direct_distance) << ',' << text::fmt_double(t.direct_duration) << '\n';
}

// Reads a file written by save_trips.
inline TripSet load_trips(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trip table " + path);
  TripSet set;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = text::trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      if (s.rfind("# network_ref=", 0) == 0) set.network_ref = s.substr(14);
      continue;
    }
    if (!header) {
      if (s != "trip_id,origin,destination,request_time_s,direct_distance_m,direct_duration_s")
        throw ParseError("unexpected trip table header", lineno);
      header = true;
      continue;
    }
    const auto f = text::split(s, ',');
    if (f.size() != 6) throw ParseError("expected 6 fields", lineno);
    try {
      set.trips.push_back({text::parse_int(f[0]), text::parse_int(f[1]), text::parse_int(f[2]), text::parse_double(f[3]),
                           text::parse_double(f[4]), text::parse_double(f[5])});
    } catch (const std::invalid_argument& ex) {
      throw ParseError(ex.what(), lineno);
    }
  }
  if (!header) throw ParseError("trip table has no header", lineno);
  return set;
}

}  // namespace segmarket
