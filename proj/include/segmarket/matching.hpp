#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segmarket/blossom.hpp"
#include "segmarket/errors.hpp"
#include "segmarket/shareability.hpp"
#include "segmarket/text.hpp"

namespace segmarket {

struct WeightedEdge {
  std::int64_t u;
  std::int64_t v;
  std::int64_t weight;  // millimeters of saving
};

struct WeightedGraph {
  std::vector<std::int64_t> node_ids;
  std::vector<WeightedEdge> edges;
};

struct Matching {
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;  // (lower id, higher id), sorted
  std::int64_t total_weight = 0;                             // millimeters

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pairs"] = pairs;
    j["total_weight_m"] = text::fmt_mm(total_weight);
    return j;
  }
};

// Throws ArgumentError unless the graph has no loops, no duplicate pairs,
// positive weights and endpoints drawn from node_ids.
inline void validate_graph(const WeightedGraph& g) {
  std::vector<std::int64_t> ids(g.node_ids);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ArgumentError("duplicate node id");
  std::vector<std::pair<std::int64_t, std::int64_t>> keys;
  keys.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    if (e.u == e.v) throw ArgumentError("self loop on node " + std::to_string(e.u));
    if (e.weight <= 0) throw ArgumentError("edge weights must be positive");
    if (!std::binary_search(ids.begin(), ids.end(), e.u) || !std::binary_search(ids.begin(), ids.end(), e.v))
      throw ArgumentError("edge endpoint is not a graph node");
    keys.emplace_back(std::min(e.u, e.v), std::max(e.u, e.v));
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) throw ArgumentError("duplicate edge");
}

// Independently checks that m is a matching of g with the stated weight.
inline bool is_valid_matching(const WeightedGraph& g, const Matching& m) {
  std::unordered_map<std::int64_t, int> used;
  std::int64_t total = 0;
  for (auto [u, v] : m.pairs) {
    if (++used[u] > 1 || ++used[v] > 1) return false;
    auto it = std::find_if(g.edges.begin(), g.edges.end(), [&](const WeightedEdge& e) {
      return (e.u == u && e.v == v) || (e.u == v && e.v == u);
    });
    if (it == g.edges.end()) return false;
    total += it->weight;
  }
  return total == m.total_weight;
}

// Exact maximum-weight matching (not necessarily maximum cardinality).
inline Matching max_weight_matching(const WeightedGraph& g) {
  std::unordered_map<std::int64_t, int> local;
  local.reserve(g.node_ids.size());
  for (std::size_t i = 0; i < g.node_ids.size(); ++i) local.emplace(g.node_ids[i], static_cast<int>(i));
  std::vector<blossom::Edge> edges;
  edges.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    if (e.u == e.v || e.weight <= 0) throw ArgumentError("matching input needs positive weights and no loops");
    auto iu = local.find(e.u), iv = local.find(e.v);
    if (iu == local.end() || iv == local.end()) throw ArgumentError("edge endpoint is not a graph node");
    edges.push_back({iu->second, iv->second, e.weight});
  }
  const auto mate = blossom::max_weight_mates(static_cast<int>(g.node_ids.size()), edges);
  Matching m;
  for (const auto& e : edges)
    if (mate[e.u] == e.v) {
      const auto a = g.node_ids[e.u], b = g.node_ids[e.v];
      m.pairs.emplace_back(std::min(a, b), std::max(a, b));
      m.total_weight += e.weight;
    }
  std::sort(m.pairs.begin(), m.pairs.end());
  return m;
}

// Exact optimum by memoized search over vertex subsets. Test oracle only.
inline Matching brute_force_matching(const WeightedGraph& g) {
  constexpr std::size_t kMaxNodes = 14;
  const std::size_t n = g.node_ids.size();
  if (n > kMaxNodes) throw ArgumentError("brute force matching supports at most 14 nodes");
  validate_graph(g);
  std::unordered_map<std::int64_t, std::size_t> local;
  for (std::size_t i = 0; i < n; ++i) local.emplace(g.node_ids[i], i);
  std::vector<std::vector<std::int64_t>> w(n, std::vector<std::int64_t>(n, 0));
  for (const auto& e : g.edges) w[local[e.u]][local[e.v]] = w[local[e.v]][local[e.u]] = e.weight;

  const std::size_t full = std::size_t{1} << n;
  std::vector<std::int64_t> best(full, -1);
  best[0] = 0;
  // best[mask] = optimum restricted to vertices in mask
  auto solve = [&](auto&& self, std::size_t mask) -> std::int64_t {
    if (best[mask] >= 0) return best[mask];
    std::size_t i = 0;
    while (!(mask >> i & 1U)) ++i;
    const std::size_t rest = mask & ~(std::size_t{1} << i);
    std::int64_t value = self(self, rest);
    for (std::size_t j = i + 1; j < n; ++j)
      if ((rest >> j & 1U) && w[i][j] > 0) value = std::max(value, w[i][j] + self(self, rest & ~(std::size_t{1} << j)));
    return best[mask] = value;
  };
  Matching m;
  std::size_t mask = full - 1;
  m.total_weight = solve(solve, mask);
  while (mask) {
    std::size_t i = 0;
    while (!(mask >> i & 1U)) ++i;
    const std::size_t rest = mask & ~(std::size_t{1} << i);
    if (solve(solve, rest) == best[mask]) {
      mask = rest;
      continue;
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!(rest >> j & 1U) || w[i][j] <= 0) continue;
      const std::size_t next = rest & ~(std::size_t{1} << j);
      if (w[i][j] + solve(solve, next) == best[mask]) {
        m.pairs.emplace_back(std::min(g.node_ids[i], g.node_ids[j]), std::max(g.node_ids[i], g.node_ids[j]));
        mask = next;
        break;
      }
    }
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  return m;
}

struct MatchingStats {
  double matching_rate = 0.0;  // matched passengers / passengers
  double avg_detour = 0.0;     // seconds, mean realized delay of matched passengers
  std::size_t matched_passengers = 0;
  double detour_sum = 0.0;
};

// Rate and mean delay of a matching on the tightness-filtered view of g.
// Each pair contributes the delays of its best option within delta.
inline MatchingStats matching_stats(const ShareabilityNetwork& g, const Matching& m, double delta) {
  MatchingStats s;
  for (auto [u, v] : m.pairs) {
    auto it = std::lower_bound(g.edges.begin(), g.edges.end(), std::pair(u, v), [](const ShareEdge& e, const auto& key) {
      return std::pair(e.trip_a, e.trip_b) < key;
    });
    if (it == g.edges.end() || it->trip_a != u || it->trip_b != v) throw ArgumentError("matched pair is not an edge");
    const ShareOption* opt = it->best_within(delta);
    if (!opt) throw ArgumentError("matched pair has no option within the tightness");
    s.detour_sum += opt->delay_1 + opt->delay_2;
    s.matched_passengers += 2;
  }
  if (g.node_count() > 0) s.matching_rate = static_cast<double>(s.matched_passengers) / static_cast<double>(g.node_count());
  if (s.matched_passengers > 0) s.avg_detour = s.detour_sum / static_cast<double>(s.matched_passengers);
  return s;
}

}  // namespace segmarket
