#include "segmarket/street_network.hpp"

#include <unistd.h>

#include <gtest/gtest.h>

#include "segmarket/rng.hpp"
#include "test_util.hpp"

namespace segmarket {
namespace {

using testing::TempDir;

TEST(LoadNetwork, FourCycle) {
  TempDir dir;
  const auto path = dir.write("cycle.txt",
                              "# four node cycle\nNODES\n1,0,0\n2,100,0\n3,100,100\n4,0,100\n"
                              "EDGES\n1,2,100,10\n2,3,100,10\n3,4,100,10\n4,1,100,10\n");
  const auto net = load_network(path);
  EXPECT_EQ(net.node_count(), 4u);
  EXPECT_EQ(net.edge_count(), 4u);
  EXPECT_EQ(net.dropped_nodes(), 0u);
  EXPECT_EQ(shortest_path(net, 1, 4), (PathMetric{300, 30}));
}

TEST(LoadNetwork, DropsNodesOutsideLargestComponent) {
  TempDir dir;
  const auto path = dir.write("tri.txt",
                              "NODES\n1,0,0\n2,100,0\n3,50,80\n9,500,500\n"
                              "EDGES\n1,2,100,10\n2,3,100,10\n3,1,100,10\n");
  const auto net = load_network(path);
  EXPECT_EQ(net.node_count(), 3u);
  EXPECT_EQ(net.dropped_nodes(), 1u);
  EXPECT_FALSE(net.index_of(9).has_value());
}

TEST(LoadNetwork, OneWayAppendixIsDropped) {
  TempDir dir;
  // node 4 is reachable from the triangle but cannot return
  const auto path = dir.write("tail.txt",
                              "NODES\n1,0,0\n2,100,0\n3,50,80\n4,200,0\n"
                              "EDGES\n1,2,100,10\n2,3,100,10\n3,1,100,10\n2,4,100,10\n");
  const auto net = load_network(path);
  EXPECT_EQ(net.node_count(), 3u);
  EXPECT_EQ(net.edge_count(), 3u);
}

TEST(LoadNetwork, NegativeTravelTimeIsParseErrorWithLine) {
  TempDir dir;
  const auto path = dir.write("neg.txt", "NODES\n1,0,0\n2,100,0\nEDGES\n1,2,100,-3\n2,1,100,10\n");
  try {
    load_network(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(LoadNetwork, MalformedLinesAndStructuralErrors) {
  TempDir dir;
  EXPECT_THROW(load_network(dir.write("a.txt", "NODES\n1,0\n")), ParseError);
  EXPECT_THROW(load_network(dir.write("b.txt", "NODES\n1,0,0\n2,0,x\n")), ParseError);
  EXPECT_THROW(load_network(dir.write("c.txt", "NODES\n1,0,0\n2,1,1\nEDGES\n1,7,10,1\n")), ParseError);
  EXPECT_THROW(load_network(dir.write("d.txt", "1,0,0\n")), ParseError);
  EXPECT_THROW(load_network(dir.write("e.txt", "NODES\n1,0,0\n2,10,0\nEDGES\n1,2,10,1\n")), StructuralError);
  EXPECT_THROW(load_network(dir.write("f.txt", "# nothing\n")), StructuralError);
  EXPECT_THROW(load_network((dir / "missing.txt").string()), ParseError);
}

TEST(LoadNetwork, LonLatIsProjectedAroundCentroid) {
  TempDir dir;
  // ~0.001 deg of latitude is ~111 m
  const auto path = dir.write("geo.txt",
                              "NODES coords=lonlat\n1,-73.98,40.75\n2,-73.98,40.751\n"
                              "EDGES\n1,2,111,11\n2,1,111,11\n");
  const auto net = load_network(path);
  ASSERT_TRUE(net.anchor().has_value());
  const double dy = net.position(1).y - net.position(0).y;
  EXPECT_NEAR(dy, 111.2, 0.1);
  EXPECT_NEAR(net.position(0).x, 0.0, 1e-6);
  EXPECT_NEAR(net.position(0).y + net.position(1).y, 0.0, 1e-6);
}

TEST(GenerateGrid, Counts) {
  const auto g = generate_grid(3, 3, 100, 10);
  EXPECT_EQ(g.node_count(), 9u);
  EXPECT_EQ(g.edge_count(), 24u);
  for (const auto& e : g.edges()) {
    EXPECT_EQ(e.length, 100.0);
    EXPECT_EQ(e.travel_time, 10.0);
  }
  const auto h = generate_grid(2, 2, 50, 5);
  EXPECT_EQ(h.node_count(), 4u);
  EXPECT_EQ(h.edge_count(), 8u);
  for (const auto& e : h.edges()) {
    EXPECT_EQ(e.length, 50.0);
    EXPECT_EQ(e.travel_time, 10.0);
  }
}

TEST(GenerateGrid, RejectsBadArguments) {
  EXPECT_THROW(generate_grid(1, 5, 100, 10), ArgumentError);
  EXPECT_THROW(generate_grid(3, 3, 0, 10), ArgumentError);
  EXPECT_THROW(generate_grid(3, 3, 100, -1), ArgumentError);
}

TEST(ShortestPath, GridExamples) {
  const auto g = generate_grid(3, 3, 100, 10);
  EXPECT_EQ(shortest_path(g, 0, 8), (PathMetric{400, 40}));
  EXPECT_EQ(shortest_path(g, 4, 4), (PathMetric{0, 0}));
  EXPECT_EQ(shortest_path(g, 0, 1), (PathMetric{100, 10}));
  EXPECT_THROW(shortest_path(g, 0, 99), ArgumentError);
}

TEST(ShortestPath, MinimizesDurationThenDistance) {
  // 1->2 direct is short but slow; 1->3->2 is longer but faster.
  // 1->4->2 ties 1->3->2 on duration but is shorter.
  const auto net = StreetNetwork::from_raw(
      {{1, {0, 0}}, {2, {100, 0}}, {3, {50, 50}}, {4, {50, -50}}},
      {{1, 2, 100, 60}, {1, 3, 80, 10}, {3, 2, 80, 10}, {1, 4, 70, 10}, {4, 2, 70, 10}, {2, 1, 100, 10}});
  EXPECT_EQ(shortest_path(net, 1, 2), (PathMetric{140, 20}));
}

TEST(ShortestPath, GridClosedFormAndSymmetry) {
  const long rows = 6, cols = 7;
  const auto g = generate_grid(rows, cols, 80, 8);
  PathCache cache(g);
  for (long a = 0; a < rows * cols; ++a)
    for (long b = 0; b < rows * cols; ++b) {
      const auto m = cache.metric(g.require_index(a), g.require_index(b));
      const double blocks = std::abs(a / cols - b / cols) + std::abs(a % cols - b % cols);
      EXPECT_EQ(m.duration, blocks * 10.0);
      EXPECT_EQ(m.distance, blocks * 80.0);
      EXPECT_EQ(m, cache.metric(g.require_index(b), g.require_index(a)));
    }
}

TEST(ShortestPath, TriangleInequalityAndDeterminismOnRandomNetwork) {
  Rng rng(11);
  std::vector<RawNode> nodes;
  std::vector<RawEdge> edges;
  const int n = 40;
  for (int i = 0; i < n; ++i) nodes.push_back({i, {rng.uniform(0, 1000), rng.uniform(0, 1000)}});
  for (int i = 0; i < n; ++i) {
    edges.push_back({i, (i + 1) % n, rng.uniform(10, 200), rng.uniform(1, 30)});
    for (int k = 0; k < 3; ++k) {
      const auto j = static_cast<int>(rng.below(n));
      if (j != i) edges.push_back({i, j, rng.uniform(10, 200), rng.uniform(1, 30)});
    }
  }
  const auto net = StreetNetwork::from_raw(nodes, edges);
  PathCache cache(net);
  for (NodeIndex u = 0; u < n; ++u)
    for (NodeIndex v = 0; v < n; ++v)
      for (NodeIndex w = 0; w < n; ++w)
        EXPECT_LE(cache.metric(u, w).duration, cache.metric(u, v).duration + cache.metric(v, w).duration + 1e-9);
  for (NodeIndex u = 0; u < n; u += 7)
    for (NodeIndex v = 0; v < n; ++v) {
      const auto a = shortest_path(net, net.id(u), net.id(v));
      const auto b = shortest_path(net, net.id(u), net.id(v));
      EXPECT_EQ(a, b);
      EXPECT_EQ(a, cache.metric(u, v));
    }
}

TEST(NearestNode, Examples) {
  // nodes 3 and 7 are 100 m apart; the midpoint is 50 m from both
  const auto net = StreetNetwork::from_raw({{7, {100, 0}}, {3, {0, 0}}, {5, {0, 300}}},
                                           {{3, 7, 100, 10}, {7, 3, 100, 10}, {3, 5, 300, 30}, {5, 3, 300, 30}});
  EXPECT_EQ(nearest_node(net, {0, 300}), 5);
  EXPECT_EQ(nearest_node(net, {50, 0}), 3);
  EXPECT_FALSE(nearest_node(net, {-150, 150}, 100).has_value());
  EXPECT_FALSE(nearest_node(net, {0, -100}, 100).has_value());  // not strictly within
  EXPECT_EQ(nearest_node(net, {0, -99.9}, 100), 3);
}

TEST(NearestNode, LocatorAgreesWithLinearScan) {
  const auto g = generate_grid(10, 10, 100, 10);
  NodeLocator locator(g, 100);
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Point p{rng.uniform(-200, 1100), rng.uniform(-200, 1100)};
    EXPECT_EQ(locator.nearest(p), nearest_node(g, p, 100));
  }
  // exact lattice midpoints hit the tie-break
  for (int r = 0; r < 9; ++r) EXPECT_EQ(locator.nearest({50.0, r * 100.0}), nearest_node(g, {50.0, r * 100.0}));
}

}  // namespace
}  // namespace segmarket
