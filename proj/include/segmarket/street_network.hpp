#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <queue>
#include <sstream>
#include <tuple>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "segmarket/errors.hpp"
#include "segmarket/text.hpp"

namespace segmarket {

using NodeId = std::int64_t;
using NodeIndex = std::uint32_t;

struct Point {
  double x = 0.0;  // meters, east
  double y = 0.0;  // meters, north
};

struct PathMetric {
  double distance = 0.0;  // meters
  double duration = 0.0;  // seconds

  friend bool operator==(const PathMetric&, const PathMetric&) = default;
};

struct RawNode {
  NodeId id;
  Point pos;
};

struct RawEdge {
  NodeId from;
  NodeId to;
  double length;       // meters
  double travel_time;  // seconds
};

// Anchor of the local equirectangular projection used for lon/lat inputs.
struct GeoAnchor {
  double lon0 = 0.0;
  double lat0 = 0.0;

  static constexpr double kEarthRadius = 6371008.8;

  Point project(double lon, double lat) const {
    constexpr double deg = std::numbers::pi / 180.0;
    return {kEarthRadius * (lon - lon0) * deg * std::cos(lat0 * deg), kEarthRadius * (lat - lat0) * deg};
  }
};

// Directed road graph restricted to its largest strongly connected component.
// Immutable after construction.
class StreetNetwork {
 public:
  struct Arc {
    NodeIndex to;
    double length;
    double travel_time;
  };

  // Validates the raw lists, keeps the largest strongly connected component
  // (ties: the one holding the smallest node id) and records how many nodes
  // were dropped.
  static StreetNetwork from_raw(std::vector<RawNode> nodes, std::vector<RawEdge> edges,
                                std::optional<GeoAnchor> anchor = std::nullopt);

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return arcs_.size(); }
  std::size_t dropped_nodes() const { return dropped_; }

  NodeId id(NodeIndex i) const { return ids_[i]; }
  const Point& position(NodeIndex i) const { return pos_[i]; }
  const std::vector<NodeId>& ids() const { return ids_; }

  std::optional<NodeIndex> index_of(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  NodeIndex require_index(NodeId id) const {
    auto idx = index_of(id);
    if (!idx) throw ArgumentError("unknown node id " + std::to_string(id));
    return *idx;
  }

  // Outgoing arcs of node i.
  std::pair<const Arc*, const Arc*> out_arcs(NodeIndex i) const {
    return {arcs_.data() + offsets_[i], arcs_.data() + offsets_[i + 1]};
  }

  // All edges in construction order, as (from id, to id, length, time).
  std::vector<RawEdge> edges() const {
    std::vector<RawEdge> out;
    out.reserve(arcs_.size());
    for (NodeIndex u = 0; u < node_count(); ++u)
      for (auto [a, e] = out_arcs(u); a != e; ++a) out.push_back({ids_[u], ids_[a->to], a->length, a->travel_time});
    return out;
  }

  const std::optional<GeoAnchor>& anchor() const { return anchor_; }

 private:
  std::vector<NodeId> ids_;
  std::vector<Point> pos_;
  std::vector<std::size_t> offsets_;
  std::vector<Arc> arcs_;
  std::unordered_map<NodeId, NodeIndex> index_;
  std::size_t dropped_ = 0;
  std::optional<GeoAnchor> anchor_;
};

namespace detail {

// Iterative Tarjan; returns the component id of every vertex.
inline std::vector<std::uint32_t> strongly_connected_components(
    std::size_t n, const std::vector<std::vector<std::uint32_t>>& adj, std::uint32_t& count) {
  constexpr std::uint32_t unvisited = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> index(n, unvisited), low(n, 0), comp(n, unvisited);
  std::vector<std::uint32_t> stack;
  std::vector<bool> on_stack(n, false);
  std::vector<std::pair<std::uint32_t, std::size_t>> call;
  std::uint32_t next_index = 0;
  count = 0;
  for (std::uint32_t root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      if (pos < adj[v].size()) {
        const std::uint32_t w = adj[v][pos++];
        if (index[w] == unvisited) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        std::uint32_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = count;
        } while (w != v);
        ++count;
      }
      const std::uint32_t done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
    }
  }
  return comp;
}

}  // namespace detail

inline StreetNetwork StreetNetwork::from_raw(std::vector<RawNode> nodes, std::vector<RawEdge> edges,
                                             std::optional<GeoAnchor> anchor) {
  std::unordered_map<NodeId, std::uint32_t> pos_of;
  pos_of.reserve(nodes.size());
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    if (!std::isfinite(nodes[i].pos.x) || !std::isfinite(nodes[i].pos.y))
      throw ArgumentError("node " + std::to_string(nodes[i].id) + " has non-finite coordinates");
    if (!pos_of.emplace(nodes[i].id, i).second)
      throw ArgumentError("duplicate node id " + std::to_string(nodes[i].id));
  }
  std::vector<std::vector<std::uint32_t>> adj(nodes.size());
  for (const auto& e : edges) {
    if (!(e.length > 0.0) || !std::isfinite(e.length) || !(e.travel_time > 0.0) || !std::isfinite(e.travel_time))
      throw ArgumentError("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                          " must have positive finite length and travel time");
    auto f = pos_of.find(e.from), t = pos_of.find(e.to);
    if (f == pos_of.end() || t == pos_of.end())
      throw ArgumentError("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) + " references unknown node");
    adj[f->second].push_back(t->second);
  }

  std::uint32_t ncomp = 0;
  const auto comp = detail::strongly_connected_components(nodes.size(), adj, ncomp);
  std::vector<std::size_t> size(ncomp, 0);
  std::vector<NodeId> min_id(ncomp, std::numeric_limits<NodeId>::max());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    ++size[comp[i]];
    min_id[comp[i]] = std::min(min_id[comp[i]], nodes[i].id);
  }
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < ncomp; ++c)
    if (size[c] > size[best] || (size[c] == size[best] && min_id[c] < min_id[best])) best = c;
  if (ncomp == 0 || size[best] < 2) throw StructuralError("street network has no strongly connected part with 2+ nodes");

  StreetNetwork net;
  net.anchor_ = anchor;
  std::vector<NodeIndex> remap(nodes.size(), std::numeric_limits<NodeIndex>::max());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (comp[i] != best) continue;
    remap[i] = static_cast<NodeIndex>(net.ids_.size());
    net.index_.emplace(nodes[i].id, remap[i]);
    net.ids_.push_back(nodes[i].id);
    net.pos_.push_back(nodes[i].pos);
  }
  net.dropped_ = nodes.size() - net.ids_.size();

  std::vector<std::vector<Arc>> out(net.ids_.size());
  for (const auto& e : edges) {
    const auto f = remap[pos_of[e.from]], t = remap[pos_of[e.to]];
    if (f == std::numeric_limits<NodeIndex>::max() || t == std::numeric_limits<NodeIndex>::max()) continue;
    out[f].push_back({t, e.length, e.travel_time});
  }
  net.offsets_.assign(net.ids_.size() + 1, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    net.offsets_[i + 1] = net.offsets_[i] + out[i].size();
    net.arcs_.insert(net.arcs_.end(), out[i].begin(), out[i].end());
  }
  return net;
}

// Reads the NODES/EDGES text format. `coords=lonlat` (on its own line or on
// the NODES line) switches node coordinates to degrees, projected around the
// node centroid.
inline StreetNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path);
  enum class Section { None, Nodes, Edges } section = Section::None;
  bool lonlat = false;
  std::vector<RawNode> nodes;
  std::vector<RawEdge> edges;
  std::vector<std::size_t> node_lines;
  std::string line;
  std::size_t lineno = 0;
  std::unordered_map<NodeId, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = text::trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.rfind("NODES", 0) == 0) {
      section = Section::Nodes;
      if (s.find("coords=lonlat") != std::string::npos) lonlat = true;
      continue;
    }
    if (s == "EDGES") {
      section = Section::Edges;
      continue;
    }
    if (s == "coords=lonlat") {
      lonlat = true;
      continue;
    }
    const auto f = text::split(s, ',');
    try {
      if (section == Section::Nodes) {
        if (f.size() != 3) throw ParseError("expected node_id,x,y", lineno);
        RawNode n{text::parse_int(f[0]), {text::parse_double(f[1]), text::parse_double(f[2])}};
        if (!seen.emplace(n.id, lineno).second) throw ParseError("duplicate node id " + f[0], lineno);
        nodes.push_back(n);
      } else if (section == Section::Edges) {
        if (f.size() != 4) throw ParseError("expected from_id,to_id,length_m,travel_time_s", lineno);
        RawEdge e{text::parse_int(f[0]), text::parse_int(f[1]), text::parse_double(f[2]), text::parse_double(f[3])};
        if (!(e.length > 0.0) || !std::isfinite(e.length)) throw ParseError("edge length must be positive", lineno);
        if (!(e.travel_time > 0.0) || !std::isfinite(e.travel_time))
          throw ParseError("edge travel time must be positive", lineno);
        if (!seen.count(e.from) || !seen.count(e.to)) throw ParseError("edge references unknown node", lineno);
        edges.push_back(e);
      } else {
        throw ParseError("data line outside NODES/EDGES section", lineno);
      }
    } catch (const std::invalid_argument& ex) {
      throw ParseError(ex.what(), lineno);
    }
  }
  std::optional<GeoAnchor> anchor;
  if (lonlat && !nodes.empty()) {
    GeoAnchor a;
    for (const auto& n : nodes) {
      a.lon0 += n.pos.x;
      a.lat0 += n.pos.y;
    }
    a.lon0 /= static_cast<double>(nodes.size());
    a.lat0 /= static_cast<double>(nodes.size());
    for (auto& n : nodes) n.pos = a.project(n.pos.x, n.pos.y);
    anchor = a;
  }
  if (nodes.empty()) throw StructuralError("network file " + path + " has no nodes");
  return StreetNetwork::from_raw(std::move(nodes), std::move(edges), anchor);
}

inline void save_network(const StreetNetwork& net, std::ostream& out) {
  out << "NODES\n";
  for (NodeIndex i = 0; i < net.node_count(); ++i)
    out << net.id(i) << ',' << text::fmt_double(net.position(i).x) << ',' << text::fmt_double(net.position(i).y)
        << '\n';
  out << "EDGES\n";
  for (const auto& e : net.edges())
    out << e.from << ',' << e.to << ',' << text::fmt_double(e.length) << ',' << text::fmt_double(e.travel_time)
        << '\n';
}

// Bidirectional lattice. Node (r, c) has id r*cols + c and sits at
// (c*block_length, r*block_length); row index grows northwards.
inline StreetNetwork generate_grid(long rows, long cols, double block_length, double speed) {
  if (rows < 2 || cols < 2) throw ArgumentError("grid needs at least 2 rows and 2 columns");
  if (!(block_length > 0.0) || !(speed > 0.0)) throw ArgumentError("block length and speed must be positive");
  std::vector<RawNode> nodes;
  std::vector<RawEdge> edges;
  const double t = block_length / speed;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      nodes.push_back({r * cols + c, {static_cast<double>(c) * block_length, static_cast<double>(r) * block_length}});
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      const NodeId u = r * cols + c;
      if (c + 1 < cols) {
        edges.push_back({u, u + 1, block_length, t});
        edges.push_back({u + 1, u, block_length, t});
      }
      if (r + 1 < rows) {
        edges.push_back({u, u + cols, block_length, t});
        edges.push_back({u + cols, u, block_length, t});
      }
    }
  return StreetNetwork::from_raw(std::move(nodes), std::move(edges));
}

// Single-source search minimizing duration, ties broken by distance.
inline std::vector<PathMetric> shortest_paths_from(const StreetNetwork& net, NodeIndex source) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<PathMetric> best(net.node_count(), PathMetric{inf, inf});
  using Entry = std::tuple<double, double, NodeIndex>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  best[source] = {0.0, 0.0};
  heap.emplace(0.0, 0.0, source);
  while (!heap.empty()) {
    auto [dur, dist, u] = heap.top();
    heap.pop();
    if (dur != best[u].duration || dist != best[u].distance) continue;
    for (auto [a, e] = net.out_arcs(u); a != e; ++a) {
      const double nd = dur + a->travel_time, nl = dist + a->length;
      auto& b = best[a->to];
      if (nd < b.duration || (nd == b.duration && nl < b.distance)) {
        b = {nl, nd};
        heap.emplace(nd, nl, a->to);
      }
    }
  }
  return best;
}

inline PathMetric shortest_path(const StreetNetwork& net, NodeId from, NodeId to) {
  const NodeIndex s = net.require_index(from), t = net.require_index(to);
  if (s == t) return {};
  return shortest_paths_from(net, s)[t];
}

// Memoizes single-source trees per source. Safe for concurrent readers.
class PathCache {
 public:
  explicit PathCache(const StreetNetwork& net) : net_(&net), trees_(net.node_count()) {}

  const StreetNetwork& network() const { return *net_; }

  PathMetric metric(NodeIndex from, NodeIndex to) const { return tree(from)[to]; }

  const std::vector<PathMetric>& tree(NodeIndex from) const {
    {
      std::lock_guard lock(mutex_);
      if (trees_[from]) return *trees_[from];
    }
    auto computed = std::make_unique<std::vector<PathMetric>>(shortest_paths_from(*net_, from));
    std::lock_guard lock(mutex_);
    if (!trees_[from]) trees_[from] = std::move(computed);
    return *trees_[from];
  }

 private:
  const StreetNetwork* net_;
  mutable std::mutex mutex_;
  mutable std::vector<std::unique_ptr<std::vector<PathMetric>>> trees_;
};

// Linear scan. Returns the closest node strictly within max_distance; ties go
// to the lowest node id.
inline std::optional<NodeId> nearest_node(const StreetNetwork& net, Point p, double max_distance = 100.0) {
  std::optional<NodeId> best;
  double best_d2 = max_distance * max_distance;
  for (NodeIndex i = 0; i < net.node_count(); ++i) {
    const double dx = net.position(i).x - p.x, dy = net.position(i).y - p.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2 || (best && d2 == best_d2 && net.id(i) < *best)) {
      best_d2 = d2;
      best = net.id(i);
    }
  }
  return best;
}

// Bucket index with cell size max_distance; agrees with nearest_node.
class NodeLocator {
 public:
  NodeLocator(const StreetNetwork& net, double max_distance) : net_(&net), cell_(max_distance) {
    if (!(max_distance > 0.0)) throw ArgumentError("max snap distance must be positive");
    for (NodeIndex i = 0; i < net.node_count(); ++i) buckets_[key(net.position(i))].push_back(i);
  }

  std::optional<NodeId> nearest(Point p) const {
    const auto [cx, cy] = key(p);
    std::optional<NodeId> best;
    double best_d2 = cell_ * cell_;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = buckets_.find({cx + dx, cy + dy});
        if (it == buckets_.end()) continue;
        for (NodeIndex i : it->second) {
          const double ex = net_->position(i).x - p.x, ey = net_->position(i).y - p.y;
          const double d2 = ex * ex + ey * ey;
          if (d2 < best_d2 || (best && d2 == best_d2 && net_->id(i) < *best)) {
            best_d2 = d2;
            best = net_->id(i);
          }
        }
      }
    return best;
  }

 private:
  using Key = std::pair<std::int64_t, std::int64_t>;
  Key key(Point p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / cell_)), static_cast<std::int64_t>(std::floor(p.y / cell_))};
  }

  const StreetNetwork* net_;
  double cell_;
  std::map<Key, std::vector<NodeIndex>> buckets_;
};

}  // namespace segmarket
