#include "msfem/grid.hpp"

#include <stdexcept>
#include <string>

namespace msfem {

GridHierarchy build_grids(const Rect& domain, int coarse_nx, int coarse_ny, int refine) {
  if (coarse_nx < 1 || coarse_ny < 1 || refine < 1) {
    throw std::invalid_argument("build_grids: element counts must be >= 1, got " +
                                std::to_string(coarse_nx) + "x" + std::to_string(coarse_ny) +
                                " refine " + std::to_string(refine));
  }
  if (!(domain.width() > 0.0) || !(domain.height() > 0.0)) {
    throw std::invalid_argument("build_grids: degenerate domain rectangle");
  }
  GridHierarchy g;
  g.domain = domain;
  g.coarse_nx = coarse_nx;
  g.coarse_ny = coarse_ny;
  g.refine = refine;
  g.fine_nx = coarse_nx * refine;
  g.fine_ny = coarse_ny * refine;
  g.Hx = domain.width() / coarse_nx;
  g.Hy = domain.height() / coarse_ny;
  g.hx = g.Hx / refine;
  g.hy = g.Hy / refine;
  return g;
}

CoarseNeighborhood neighborhood_of(const GridHierarchy& g, int coarse_node) {
  if (coarse_node < 0 || coarse_node >= g.coarse_node_count()) {
    throw std::invalid_argument("neighborhood_of: invalid coarse node id " +
                                std::to_string(coarse_node));
  }
  const auto [ci, cj] = g.coarse_node_ij(coarse_node);

  CoarseNeighborhood nb;
  nb.center = coarse_node;
  for (int b = cj - 1; b <= cj; ++b) {
    for (int a = ci - 1; a <= ci; ++a) {
      if (a >= 0 && a < g.coarse_nx && b >= 0 && b < g.coarse_ny) {
        nb.coarse_elements.push_back(g.coarse_cell_id(a, b));
      }
    }
  }

  const int n = g.refine;
  nb.i0 = std::max(0, (ci - 1) * n);
  nb.i1 = std::min(g.fine_nx, (ci + 1) * n);
  nb.j0 = std::max(0, (cj - 1) * n);
  nb.j1 = std::min(g.fine_ny, (cj + 1) * n);

  nb.patch_nodes.reserve(static_cast<size_t>(nb.nodes_per_row()) * nb.node_rows());
  for (int j = nb.j0; j <= nb.j1; ++j) {
    for (int i = nb.i0; i <= nb.i1; ++i) {
      const int id = g.fine_node_id(i, j);
      nb.patch_nodes.push_back(id);
      if (nb.on_patch_boundary(i, j)) {
        nb.boundary_nodes.push_back(id);
      } else {
        nb.interior_nodes.push_back(id);
      }
    }
  }
  for (int j = nb.j0; j < nb.j1; ++j) {
    for (int i = nb.i0; i < nb.i1; ++i) {
      nb.patch_cells.push_back(g.fine_cell_id(i, j));
    }
  }
  return nb;
}

std::vector<CoarseNeighborhood> all_neighborhoods(const GridHierarchy& g) {
  std::vector<CoarseNeighborhood> out;
  out.reserve(g.coarse_node_count());
  for (int id = 0; id < g.coarse_node_count(); ++id) {
    out.push_back(neighborhood_of(g, id));
  }
  return out;
}

Coloring four_coloring(const GridHierarchy& g) {
  Coloring c;
  for (int id = 0; id < g.coarse_node_count(); ++id) {
    const auto [i, j] = g.coarse_node_ij(id);
    c.colors[Coloring::color_of(i, j)].push_back(id);
  }
  return c;
}

}  // namespace msfem
