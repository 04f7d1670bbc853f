#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "msfem/grid.hpp"

using namespace msfem;

TEST_CASE("build_grids produces the documented sizes") {
  SUBCASE("16x16 coarse with 16 fine per coarse gives a 256x256 fine grid") {
    const auto g = build_grids(Rect{}, 16, 16, 16);
    CHECK(g.fine_nx == 256);
    CHECK(g.fine_ny == 256);
    CHECK(g.coarse_node_count() == 17 * 17);
  }
  SUBCASE("8x8 coarse with 32 fine per coarse gives 256x256 fine cells and 81 coarse nodes") {
    const auto g = build_grids(Rect{}, 8, 8, 32);
    CHECK(g.fine_nx == 256);
    CHECK(g.fine_ny == 256);
    CHECK(g.coarse_node_count() == 81);
  }
  SUBCASE("minimal grid") {
    const auto g = build_grids(Rect{}, 1, 1, 1);
    CHECK(g.coarse_cell_count() == 1);
    CHECK(g.coarse_node_count() == 4);
    const auto nb = neighborhood_of(g, 0);
    CHECK(nb.interior_nodes.empty());
  }
  SUBCASE("exact refinement") {
    const auto g = build_grids(Rect{}, 5, 3, 7);
    CHECK(g.hx == doctest::Approx(g.Hx / 7).epsilon(1e-15));
    CHECK(g.hy == doctest::Approx(g.Hy / 7).epsilon(1e-15));
  }
  SUBCASE("non-positive counts rejected") {
    CHECK_THROWS_AS(build_grids(Rect{}, 0, 4, 4), std::invalid_argument);
    CHECK_THROWS_AS(build_grids(Rect{}, 4, -1, 4), std::invalid_argument);
    CHECK_THROWS_AS(build_grids(Rect{}, 4, 4, 0), std::invalid_argument);
  }
}

TEST_CASE("index maps are bijections") {
  const auto g = build_grids(Rect{}, 6, 4, 3);
  std::mt19937 rng(12345);
  for (int trial = 0; trial < 200; ++trial) {
    const int i = static_cast<int>(rng() % (g.fine_nx + 1));
    const int j = static_cast<int>(rng() % (g.fine_ny + 1));
    const auto [bi, bj] = g.fine_node_ij(g.fine_node_id(i, j));
    CHECK(bi == i);
    CHECK(bj == j);
  }
  std::set<int> seen;
  for (int j = 0; j <= g.coarse_ny; ++j) {
    for (int i = 0; i <= g.coarse_nx; ++i) seen.insert(g.coarse_node_id(i, j));
  }
  CHECK(static_cast<int>(seen.size()) == g.coarse_node_count());
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == g.coarse_node_count() - 1);
}

TEST_CASE("neighborhood element counts by node position") {
  const auto g = build_grids(Rect{}, 4, 4, 2);
  int interior4 = 0, edge2 = 0, corner1 = 0;
  for (int id = 0; id < g.coarse_node_count(); ++id) {
    const auto nb = neighborhood_of(g, id);
    const auto [i, j] = g.coarse_node_ij(id);
    const bool corner = (i == 0 || i == 4) && (j == 0 || j == 4);
    const bool boundary = i == 0 || i == 4 || j == 0 || j == 4;
    if (corner) {
      CHECK(nb.coarse_elements.size() == 1);
      ++corner1;
    } else if (boundary) {
      CHECK(nb.coarse_elements.size() == 2);
      ++edge2;
    } else {
      CHECK(nb.coarse_elements.size() == 4);
      ++interior4;
    }
  }
  CHECK(corner1 == 4);
  CHECK(edge2 == 12);
  CHECK(interior4 == 9);

  CHECK_THROWS_AS(neighborhood_of(g, -1), std::invalid_argument);
  CHECK_THROWS_AS(neighborhood_of(g, g.coarse_node_count()), std::invalid_argument);
}

TEST_CASE("neighborhood node partition is consistent") {
  const auto g = build_grids(Rect{}, 3, 3, 4);
  for (int id = 0; id < g.coarse_node_count(); ++id) {
    const auto nb = neighborhood_of(g, id);
    CHECK(nb.patch_nodes.size() == nb.interior_nodes.size() + nb.boundary_nodes.size());
    std::set<int> interior(nb.interior_nodes.begin(), nb.interior_nodes.end());
    for (int b : nb.boundary_nodes) CHECK(interior.count(b) == 0);
    // patch nodes are sorted ascending (row-major over the rectangle)
    CHECK(std::is_sorted(nb.patch_nodes.begin(), nb.patch_nodes.end()));
    // center node is strictly inside its own patch unless it lies on the
    // domain boundary
    const auto [fi, fj] = g.coarse_node_fine_ij(id);
    if (!g.fine_node_on_domain_boundary(g.fine_node_id(fi, fj))) {
      CHECK(interior.count(g.fine_node_id(fi, fj)) == 1);
    }
  }
}

TEST_CASE("four coloring") {
  SUBCASE("interior odd-odd color of a 4x4-element grid") {
    const auto g = build_grids(Rect{}, 4, 4, 2);
    const auto col = four_coloring(g);
    std::set<std::pair<int, int>> oddodd;
    for (int id : col.colors[0]) {
      const auto [i, j] = g.coarse_node_ij(id);
      oddodd.insert({i, j});
    }
    const std::set<std::pair<int, int>> expected{{1, 1}, {1, 3}, {3, 1}, {3, 3}};
    CHECK(oddodd == expected);
  }
  SUBCASE("colors partition all coarse nodes") {
    const auto g = build_grids(Rect{}, 5, 7, 2);
    const auto col = four_coloring(g);
    std::set<int> all;
    size_t total = 0;
    for (const auto& c : col.colors) {
      total += c.size();
      all.insert(c.begin(), c.end());
    }
    CHECK(total == static_cast<size_t>(g.coarse_node_count()));
    CHECK(static_cast<int>(all.size()) == g.coarse_node_count());
  }
  SUBCASE("same-color neighborhoods share no fine cell") {
    const auto g = build_grids(Rect{}, 4, 4, 3);
    const auto col = four_coloring(g);
    for (const auto& color : col.colors) {
      std::set<int> cells;
      for (int id : color) {
        const auto nb = neighborhood_of(g, id);
        for (int c : nb.patch_cells) {
          CHECK(cells.count(c) == 0);
          cells.insert(c);
        }
      }
    }
  }
}
