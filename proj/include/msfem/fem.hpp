#pragma once

/** @file fem.hpp
    @brief Fine-scale conforming bilinear FEM on the structured grid:
           weighted stiffness and mass assembly, Dirichlet elimination,
           direct solves, and cached local Dirichlet solves on patches.
*/

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <vector>

#include "msfem/field.hpp"
#include "msfem/grid.hpp"

namespace msfem {

using SparseMat = Eigen::SparseMatrix<double>;

/// Nodal coefficient vector over all fine nodes.
using FineFunction = Eigen::VectorXd;

/// Pointwise source term f(x, y).
using ScalarField = std::function<double(double, double)>;

/// 4x4 element stiffness for the bilinear element on an hx-by-hy cell with
/// unit coefficient; local node order (0,0),(1,0),(0,1),(1,1). The
/// integrals are exact (closed form).
Eigen::Matrix4d cell_stiffness(double hx, double hy);

/// 4x4 element mass matrix on an hx-by-hy cell, exact.
Eigen::Matrix4d cell_mass(double hx, double hy);

/// Gradient of a bilinear function at the cell midpoint from its four nodal
/// values in local order (0,0),(1,0),(0,1),(1,1).
Eigen::Vector2d cell_midpoint_gradient(double hx, double hy, const Eigen::Vector4d& nodal);

/// Assembled fine-grid problem with homogeneous Dirichlet data on the
/// domain boundary. The full matrices keep all nodes (symmetric, singular);
/// stiffness_ff is the SPD block over free nodes used for solving.
struct FineSystem {
  GridHierarchy grids;
  SparseMat stiffness;  ///< weighted stiffness over all nodes
  SparseMat mass;       ///< unweighted mass over all nodes
  FineFunction load;    ///< load vector over all nodes

  std::vector<int> free_nodes;    ///< non-Dirichlet node ids, ascending
  std::vector<int> node_to_free;  ///< inverse map, -1 for constrained nodes
  SparseMat stiffness_ff;         ///< free-node block

  Eigen::VectorXd load_free() const;
  Eigen::VectorXd restrict_free(const FineFunction& full) const;
  FineFunction prolong_free(const Eigen::VectorXd& free_values) const;
};

/// Weighted stiffness over all fine nodes: entry (p,q) sums
/// kappa_cell * integral of grad(phi_p) . grad(phi_q) over each cell.
/// Rejects fields with wrong size or non-positive entries.
SparseMat assemble_stiffness(const GridHierarchy& grids, const PermeabilityField& kappa);

/// Unweighted mass matrix over all fine nodes.
SparseMat assemble_mass(const GridHierarchy& grids);

/// Load vector via 2x2 Gauss quadrature per cell (exact for bilinear
/// integrands against cellwise-constant data).
FineFunction assemble_load(const GridHierarchy& grids, const ScalarField& f);

/// Load vector for a source sampled per fine cell.
FineFunction assemble_load(const GridHierarchy& grids, const std::vector<double>& cell_values);

FineSystem build_fine_system(const GridHierarchy& grids, const PermeabilityField& kappa,
                             const ScalarField& f);
FineSystem build_fine_system(const GridHierarchy& grids, const PermeabilityField& kappa,
                             const std::vector<double>& f_cells);

/// Direct sparse solve of the Dirichlet-eliminated system, refined until the
/// relative algebraic residual is below 1e-12. Throws std::runtime_error if
/// the factorization fails or the residual target cannot be met.
FineFunction solve_fine(const FineSystem& system);

/// Restriction of the global stiffness operator to one patch: the interior
/// block is factorized once and reused for every right-hand side, the
/// interior-boundary coupling drives harmonic extensions. Interior and
/// boundary node sets are given as global fine node ids.
class PatchOperator {
 public:
  PatchOperator() = default;
  PatchOperator(const SparseMat& stiffness, std::vector<int> interior, std::vector<int> boundary);

  const std::vector<int>& interior() const { return interior_; }
  const std::vector<int>& boundary() const { return boundary_; }
  bool empty_interior() const { return interior_.empty(); }

  /// Solve A_ii x = rhs (interior-local indexing) with iterative refinement.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  /// One factorized solve per column, no refinement.
  Eigen::MatrixXd solve_many(const Eigen::MatrixXd& rhs) const;

  /// Interior values of the discrete harmonic extension of boundary data.
  Eigen::VectorXd harmonic_extension(const Eigen::VectorXd& boundary_values) const;

  /// Harmonic extensions of all boundary delta data at once; column j holds
  /// the interior values for the delta at boundary()[j].
  Eigen::MatrixXd harmonic_extensions_identity() const;

  /// x' A_ii x for interior-local x.
  double interior_energy(const Eigen::VectorXd& x) const;

  const SparseMat& a_ii() const { return a_ii_; }
  const SparseMat& a_ib() const { return a_ib_; }

 private:
  std::vector<int> interior_;
  std::vector<int> boundary_;
  SparseMat a_ii_;
  SparseMat a_ib_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMat>> factor_;
  double a_inf_norm_ = 0.0;
};

/// Local Dirichlet solve on a coarse neighborhood: zero trace on the patch
/// boundary, right-hand side given over the patch interior nodes. Returns
/// the solution extended by zero to the full fine grid; `flagged_empty` is
/// set when the patch has no interior nodes.
FineFunction local_dirichlet_solve(const PatchOperator& op, const Eigen::VectorXd& interior_rhs,
                                   int fine_node_count, bool* flagged_empty = nullptr);

/// Energy norm sqrt(u' A u) with the assembled weighted stiffness.
double energy_norm(const FineSystem& system, const FineFunction& u);

/// L2 norm sqrt(u' M u) with the unweighted mass matrix.
double l2_norm(const FineSystem& system, const FineFunction& u);

/// Relative errors (e_a, e_2) of an approximation against a reference.
/// Throws std::invalid_argument when the reference has zero norm.
std::pair<double, double> error_pair(const FineSystem& system, const FineFunction& u,
                                     const FineFunction& u_ms);

/// L2 distance between a fine-grid function and a smooth callable, by 3x3
/// Gauss quadrature per cell.
double l2_error_vs(const GridHierarchy& grids, const FineFunction& u_h, const ScalarField& exact);

}  // namespace msfem
