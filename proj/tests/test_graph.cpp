#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "unilp/errors.hpp"
#include "unilp/graph.hpp"

using namespace unilp;

namespace {

LoadedGraph parse(const std::string& text) {
  std::istringstream in(text);
  return parse_edge_list(in);
}

}  // namespace

TEST_CASE("edge list parsing") {
  SUBCASE("triangle") {
    auto lg = parse("0 1\n1 2\n2 0\n");
    CHECK(lg.graph.node_count() == 3);
    CHECK(lg.graph.edge_count() == 3);
  }
  SUBCASE("duplicate collapses") {
    auto lg = parse("0 1\n1 0\n");
    CHECK(lg.graph.edge_count() == 1);
  }
  SUBCASE("self loop dropped and counted") {
    auto lg = parse("0 0\n0 1\n");
    CHECK(lg.graph.edge_count() == 1);
    CHECK(lg.self_loops_dropped == 1);
  }
  SUBCASE("comments, blanks and sparse ids") {
    auto lg = parse("# header\n\n10 30  # trailing\n30\t20\n");
    CHECK(lg.graph.node_count() == 3);
    CHECK(lg.id_map == std::vector<std::int64_t>{10, 20, 30});
    CHECK(lg.graph.has_edge(0, 2));
    CHECK(lg.graph.has_edge(1, 2));
    CHECK_FALSE(lg.graph.has_edge(0, 1));
  }
  SUBCASE("malformed line names its number") {
    try {
      parse("0 1\n1 x\n");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse("0 1 2\n"), DataError);
    CHECK_THROWS_AS(parse("-1 2\n"), DataError);
    CHECK_THROWS_AS(parse("7\n"), DataError);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(parse(""), DataError);
    CHECK_THROWS_AS(parse("# only a comment\n"), DataError);
  }
}

TEST_CASE("edge list round trip") {
  const Graph g = testing::random_graph(12, 0.3, 5);
  std::ostringstream out;
  write_edge_list(g, out);
  auto lg = parse(out.str());
  CHECK(lg.graph.edges() == g.edges());
}

TEST_CASE("lattice edge counts") {
  CHECK_THROWS_AS(generate_lattice({LatticeKind::Grid, 2, 2, false}), ConfigError);
  CHECK_THROWS_AS(generate_lattice({LatticeKind::Triangular, 3, 2, true}), ConfigError);

  const Graph grid = generate_lattice({LatticeKind::Grid, 3, 3, false});
  CHECK(grid.node_count() == 9);
  CHECK(grid.edge_count() == 12);
  CHECK(generate_lattice({LatticeKind::Triangular, 3, 3, false}).edge_count() == 16);

  for (std::size_t r : {3, 4, 7}) {
    for (std::size_t c : {3, 5, 8}) {
      CAPTURE(r);
      CAPTURE(c);
      CHECK(generate_lattice({LatticeKind::Grid, r, c, false}).edge_count() == r * (c - 1) + c * (r - 1));
      CHECK(generate_lattice({LatticeKind::Grid, r, c, true}).edge_count() == 2 * r * c);
      CHECK(generate_lattice({LatticeKind::Triangular, r, c, false}).edge_count() ==
            r * (c - 1) + c * (r - 1) + (r - 1) * (c - 1));
      CHECK(generate_lattice({LatticeKind::Triangular, r, c, true}).edge_count() == 3 * r * c);
    }
  }
  const Graph tri = generate_lattice({LatticeKind::Triangular, 4, 4, false});
  CHECK(tri.has_edge(0, 5));  // (0,0)-(1,1)
  CHECK_FALSE(tri.has_edge(1, 4));
}

TEST_CASE("bipartite lattices") {
  CHECK(is_bipartite(generate_lattice({LatticeKind::Grid, 5, 7, false})));
  CHECK(is_bipartite(generate_lattice({LatticeKind::Grid, 8, 8, true})));
  CHECK_FALSE(is_bipartite(generate_lattice({LatticeKind::Triangular, 5, 7, false})));
  CHECK_FALSE(is_bipartite(generate_lattice({LatticeKind::Triangular, 8, 8, true})));
  CHECK_FALSE(is_bipartite(testing::triangle()));
}

TEST_CASE("stochastic block model") {
  SUBCASE("extreme probabilities") {
    const Graph g = generate_sbm({{4, 4}, 1.0, 0.0, 3});
    CHECK(g.edge_count() == 12);
    for (NodeId u = 0; u < 8; ++u) {
      for (NodeId v = u + 1; v < 8; ++v) CHECK(g.has_edge(u, v) == ((u < 4) == (v < 4)));
    }
    CHECK(generate_sbm({{5}, 0.0, 0.0, 3}).edge_count() == 0);
  }
  SUBCASE("binomial expectation") {
    const double pairs_in = 2 * 50 * 49 / 2.0;
    const double pairs_out = 50 * 50;
    const double mean = 0.3 * pairs_in + 0.01 * pairs_out;
    const double sd = std::sqrt(pairs_in * 0.3 * 0.7 + pairs_out * 0.01 * 0.99);
    for (std::uint64_t seed : {1, 2, 3}) {
      const double m = static_cast<double>(generate_sbm({{50, 50}, 0.3, 0.01, seed}).edge_count());
      CHECK(std::abs(m - mean) < 4 * sd);
    }
  }
  SUBCASE("determinism and validation") {
    const SbmSpec spec{{20, 30}, 0.4, 0.05, 11};
    CHECK(generate_sbm(spec).edges() == generate_sbm(spec).edges());
    CHECK_THROWS_AS(generate_sbm({{4}, 0.1, 0.2, 0}), ConfigError);
    CHECK_THROWS_AS(generate_sbm({{4, 0}, 0.5, 0.1, 0}), ConfigError);
    CHECK_THROWS_AS(generate_sbm({{}, 0.5, 0.1, 0}), ConfigError);
  }
}

TEST_CASE("graph invariants after every constructor") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Graph g = testing::random_graph(15, 0.3, seed);
    CHECK(g.check_invariants());
    auto edges = g.edges();
    edges.resize(edges.size() / 2);
    CHECK(g.without_edges(edges).check_invariants());
    CHECK(g.without_edges(edges).edge_count() == g.edge_count() - edges.size());
  }
  CHECK(generate_lattice({LatticeKind::Triangular, 6, 6, true}).check_invariants());
  CHECK(generate_sbm({{10, 10}, 0.5, 0.1, 1}).check_invariants());
  CHECK_THROWS_AS(testing::make_graph(3, {{0, 3}}), DataError);
}

TEST_CASE("shortest paths") {
  const Graph p = testing::path(3);
  CHECK(shortest_path(p, 0, 2) == 2);
  CHECK(shortest_path(p, 1, 1) == 0);
  const Graph two = testing::make_graph(4, {{0, 1}, {2, 3}});
  CHECK(shortest_path(two, 0, 3) == kUnreachable);
  // hiding the only edge disconnects the pair
  CHECK(shortest_path(two, 0, 1, NodePair{1, 0}) == kUnreachable);
  CHECK(shortest_path(testing::triangle(), 0, 1, NodePair{0, 1}) == 2);
}

TEST_CASE("simple path counts") {
  CHECK(count_simple_paths(testing::triangle(), 0, 1, 2) == 1);
  const Graph grid = generate_lattice({LatticeKind::Grid, 3, 3, false});
  CHECK(count_simple_paths(grid, 0, 8, 4) == 6);
  CHECK_THROWS_AS(count_simple_paths(grid, 0, 8, 7), ConfigError);
  CHECK_THROWS_AS(count_simple_paths(grid, 0, 0, 2), ConfigError);
  // the target never appears mid-path
  CHECK(count_simple_paths(testing::complete(4), 0, 1, 3) == 2);
  CHECK(has_simple_path(grid, 0, 8, 4));
  CHECK_FALSE(has_simple_path(grid, 0, 8, 3));
}

TEST_CASE("two-edge paths equal common neighbors on random graphs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t n = 5 + seed % 11;
    const Graph g = testing::random_graph(n, 0.35, 1000 + seed);
    for (NodeId u = 0; u < n; ++u) {
      for (NodeId v = 0; v < n; ++v) {
        if (u == v) continue;
        auto a = g.neighbors(u);
        auto b = g.neighbors(v);
        std::vector<NodeId> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        CHECK(count_simple_paths(g, u, v, 2) == common.size());
      }
    }
  }
}
