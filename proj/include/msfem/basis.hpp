#pragma once

/** @file basis.hpp
    @brief Per-neighborhood offline machinery: partition-of-unity functions,
           the spectral weight, harmonic snapshot spaces, local generalized
           eigenproblems and the resulting offline basis vectors.
*/

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <vector>

#include "msfem/fem.hpp"
#include "msfem/field.hpp"
#include "msfem/grid.hpp"

namespace msfem {

/// Multiscale partition-of-unity functions: for each coarse node, the nodal
/// values over that node's neighborhood patch (patch-local, row-major).
/// Each chi solves the coefficient cell problem per coarse element with
/// edge-linear boundary data: 1 at its own coarse node, 0 at the others.
struct PartitionOfUnity {
  std::vector<Eigen::VectorXd> values;  ///< indexed by coarse node id

  /// Sum of all chi over the fine grid; equals 1 everywhere when consistent.
  Eigen::VectorXd assemble_sum(const GridHierarchy& grids,
                               const std::vector<CoarseNeighborhood>& neighborhoods) const;
};

PartitionOfUnity compute_pou(const GridHierarchy& grids, const PermeabilityField& kappa,
                             const std::vector<CoarseNeighborhood>& neighborhoods);

/// Per-cell spectral weight kappa * sum_i H^2 |grad chi_i|^2 with gradients
/// evaluated at cell midpoints. Throws std::runtime_error if the partition
/// of unity is degenerate on some cell (zero gradient sum).
Eigen::VectorXd compute_weight(const GridHierarchy& grids, const PermeabilityField& kappa,
                               const PartitionOfUnity& pou,
                               const std::vector<CoarseNeighborhood>& neighborhoods);

/// Patch-local stiffness assembled from the patch's cells only (all patch
/// nodes kept, no boundary elimination).
SparseMat assemble_patch_stiffness(const GridHierarchy& grids, const CoarseNeighborhood& nb,
                                   const PermeabilityField& kappa);

/// Patch-local mass matrix weighted by a per-cell coefficient.
SparseMat assemble_patch_weighted_mass(const GridHierarchy& grids, const CoarseNeighborhood& nb,
                                       const Eigen::VectorXd& cell_weight);

/// Snapshot space of one neighborhood: column j is the discrete
/// kappa-harmonic extension of the delta data at boundary node j, in
/// patch-local indexing. Column count equals the patch boundary node count.
struct SnapshotSpace {
  Eigen::MatrixXd columns;         ///< patch-local nodal values, one column per snapshot
  std::vector<int> boundary_nodes; ///< global fine node ids, defines column order
};

SnapshotSpace compute_snapshots(const CoarseNeighborhood& nb, const PatchOperator& op);

/// Eigenpairs of the local spectral problem in snapshot coordinates,
/// eigenvalues ascending, eigenvectors orthonormal in the weighted snapshot
/// mass matrix. `shift` records the diagonal regularization applied to the
/// mass matrix in case its Cholesky failed.
struct LocalSpectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd coords;  ///< column k = eigenvector k in snapshot coordinates
  double shift = 0.0;
};

/// Dense generalized symmetric eigensolve of (A, S) in snapshot coordinates.
/// Throws std::runtime_error when S is not SPD within 1e-12 of its norm.
LocalSpectrum solve_spectral(const SnapshotSpace& snapshots, const SparseMat& a_patch,
                             const SparseMat& s_patch);

/// Everything the solver needs per neighborhood: the cached patch operator,
/// the center node's partition-of-unity function and the local spectrum.
/// Snapshot vectors are not stored; eigenfunction reconstruction re-runs the
/// cached harmonic extensions on demand.
class LocalBasisSet {
 public:
  /// Builds snapshots, the spectral problem and the first `eager_modes`
  /// offline vectors. When `precomputed` is non-null the eigensolve is
  /// skipped and the given spectrum adopted.
  LocalBasisSet(const GridHierarchy& grids, const SparseMat& stiffness,
                const PermeabilityField& kappa, const Eigen::VectorXd& ktilde,
                CoarseNeighborhood nb, Eigen::VectorXd chi_center, int eager_modes,
                const LocalSpectrum* precomputed = nullptr);

  const CoarseNeighborhood& nb() const { return nb_; }
  const PatchOperator& patch_op() const { return op_; }
  const LocalSpectrum& spectrum() const { return spectrum_; }
  const Eigen::VectorXd& chi() const { return chi_; }

  int snapshot_count() const { return static_cast<int>(spectrum_.eigenvalues.size()); }
  double eigenvalue(int k) const { return spectrum_.eigenvalues[k]; }

  /// Assembled eigenfunctions k0..k1 (exclusive) as patch-local columns.
  Eigen::MatrixXd modes(int k0, int k1) const;

  /// Offline basis vectors chi * mode_k for k in [k0, k1), patch-local,
  /// zeroed on the domain boundary. Throws std::invalid_argument when the
  /// range exceeds the snapshot dimension.
  Eigen::MatrixXd offline_vectors(int k0, int k1) const;

  /// Scatter a patch-local vector into a zero-extended fine-grid function.
  FineFunction to_global(const Eigen::VectorXd& patch_local, int fine_node_count) const;

 private:
  Eigen::MatrixXd assemble_snapshot_columns() const;

  CoarseNeighborhood nb_;
  PatchOperator op_;
  Eigen::VectorXd chi_;
  LocalSpectrum spectrum_;
  Eigen::MatrixXd eager_offline_;  ///< first few offline vectors, patch-local
  std::vector<int> interior_local_;
  std::vector<int> boundary_local_;
  std::vector<char> on_domain_boundary_;  ///< per patch-local node
};

/// On-disk cache of per-neighborhood spectra, keyed by grid dimensions and
/// the permeability content hash. Loading fails (returns false) whenever the
/// key does not match, so a changed field invalidates the cache.
bool load_spectrum_cache(const std::string& path, const GridHierarchy& grids,
                         std::uint64_t kappa_hash, std::vector<LocalSpectrum>& out);
void save_spectrum_cache(const std::string& path, const GridHierarchy& grids,
                         std::uint64_t kappa_hash, const std::vector<LocalSpectrum>& spectra);

}  // namespace msfem
