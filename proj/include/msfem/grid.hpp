#pragma once

/** @file grid.hpp
    @brief Two-level structured grid hierarchy, coarse neighborhoods and the
           four-coloring of coarse nodes used by non-overlapping enrichment.
*/

#include <array>
#include <vector>

namespace msfem {

/// Axis-aligned rectangular domain.
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

/// Coarse Nx-by-Ny partition of a rectangle together with its uniform
/// n-by-n refinement per coarse cell. All node and cell indices are
/// row-major with x running fastest; the fine grid is an exact refinement,
/// so every coarse grid line coincides with a fine grid line.
struct GridHierarchy {
  Rect domain;
  int coarse_nx = 0;  ///< coarse elements in x
  int coarse_ny = 0;  ///< coarse elements in y
  int refine = 0;     ///< fine cells per coarse cell per direction
  int fine_nx = 0;    ///< fine cells in x
  int fine_ny = 0;    ///< fine cells in y
  double Hx = 0, Hy = 0;  ///< coarse cell dimensions
  double hx = 0, hy = 0;  ///< fine cell dimensions

  int coarse_node_count() const { return (coarse_nx + 1) * (coarse_ny + 1); }
  int coarse_cell_count() const { return coarse_nx * coarse_ny; }
  int fine_node_count() const { return (fine_nx + 1) * (fine_ny + 1); }
  int fine_cell_count() const { return fine_nx * fine_ny; }

  int coarse_node_id(int i, int j) const { return j * (coarse_nx + 1) + i; }
  std::array<int, 2> coarse_node_ij(int id) const {
    return {id % (coarse_nx + 1), id / (coarse_nx + 1)};
  }
  int coarse_cell_id(int i, int j) const { return j * coarse_nx + i; }
  std::array<int, 2> coarse_cell_ij(int id) const {
    return {id % coarse_nx, id / coarse_nx};
  }

  int fine_node_id(int i, int j) const { return j * (fine_nx + 1) + i; }
  std::array<int, 2> fine_node_ij(int id) const {
    return {id % (fine_nx + 1), id / (fine_nx + 1)};
  }
  int fine_cell_id(int i, int j) const { return j * fine_nx + i; }
  std::array<int, 2> fine_cell_ij(int id) const {
    return {id % fine_nx, id / fine_nx};
  }

  double fine_node_x(int i) const { return domain.x0 + i * hx; }
  double fine_node_y(int j) const { return domain.y0 + j * hy; }

  bool fine_node_on_domain_boundary(int id) const {
    auto [i, j] = fine_node_ij(id);
    return i == 0 || j == 0 || i == fine_nx || j == fine_ny;
  }
  bool coarse_node_interior(int id) const {
    auto [i, j] = coarse_node_ij(id);
    return i > 0 && j > 0 && i < coarse_nx && j < coarse_ny;
  }

  /// Fine lattice coordinate of a coarse node.
  std::array<int, 2> coarse_node_fine_ij(int id) const {
    auto [i, j] = coarse_node_ij(id);
    return {i * refine, j * refine};
  }
};

/// Build a consistent hierarchy. Throws std::invalid_argument for
/// non-positive counts or a degenerate domain.
GridHierarchy build_grids(const Rect& domain, int coarse_nx, int coarse_ny, int refine);

/// The union of all coarse elements sharing one coarse node, together with
/// the partition of its fine nodes into strict interior and patch boundary.
/// For a structured grid the patch is the fine-node rectangle
/// [i0,i1] x [j0,j1] in lattice coordinates.
struct CoarseNeighborhood {
  int center = -1;                   ///< coarse node id
  std::vector<int> coarse_elements;  ///< coarse cell ids forming the patch
  int i0 = 0, i1 = 0, j0 = 0, j1 = 0;  ///< inclusive fine-node lattice bounds

  std::vector<int> patch_nodes;     ///< all fine node ids of the closed patch, row-major
  std::vector<int> interior_nodes;  ///< fine nodes strictly inside the patch
  std::vector<int> boundary_nodes;  ///< fine nodes on the patch boundary
  std::vector<int> patch_cells;     ///< fine cell ids covered by the patch

  int nodes_per_row() const { return i1 - i0 + 1; }
  int node_rows() const { return j1 - j0 + 1; }

  /// Patch-local index of a fine node given by lattice coordinates.
  int local_node(int i, int j) const { return (j - j0) * nodes_per_row() + (i - i0); }

  /// Whether lattice coordinates fall on the patch boundary.
  bool on_patch_boundary(int i, int j) const {
    return i == i0 || i == i1 || j == j0 || j == j1;
  }
};

/// Neighborhood of one coarse node. Throws std::invalid_argument for an
/// invalid node id.
CoarseNeighborhood neighborhood_of(const GridHierarchy& grids, int coarse_node);

/// All neighborhoods, indexed by coarse node id.
std::vector<CoarseNeighborhood> all_neighborhoods(const GridHierarchy& grids);

/// Partition of the coarse nodes into four classes by the parity of their
/// lattice coordinates. Two distinct neighborhoods within one class never
/// share a fine cell, which makes simultaneous local enrichment additive.
/// Class order is fixed: (odd,odd), (odd,even), (even,odd), (even,even).
struct Coloring {
  std::array<std::vector<int>, 4> colors;

  static int color_of(int i, int j) {
    const int pi = i % 2, pj = j % 2;
    return pi == 1 ? (pj == 1 ? 0 : 1) : (pj == 1 ? 2 : 3);
  }
};

Coloring four_coloring(const GridHierarchy& grids);

}  // namespace msfem
