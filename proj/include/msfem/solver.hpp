#pragma once

/** @file solver.hpp
    @brief Coarse Galerkin solves in the multiscale space, local residual
           functionals, their Riesz representatives and error indicators.
*/

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "msfem/basis.hpp"
#include "msfem/fem.hpp"

namespace msfem {

enum class BasisKind { offline, online };

struct BasisTag {
  int neighborhood = -1;
  BasisKind kind = BasisKind::offline;
  int ordinal = 0;  ///< mode index for offline entries, sweep counter for online
};

struct RejectedBasis {
  BasisTag tag;
  std::string reason;
};

/// Ordered multiscale basis over the fine grid. Every stored vector vanishes
/// on the domain boundary and is scaled to unit energy; the Gram matrix in
/// the energy inner product is maintained incrementally together with its
/// Cholesky factor, so appending k vectors costs O(dim^2 k) and candidates
/// that would push the Gram condition estimate past 1e12 (or retain less
/// than 1e-10 of their energy after orthogonalization) are rejected.
class MultiscaleSpace {
 public:
  MultiscaleSpace(int fine_node_count, int neighborhood_count);

  int dimension() const { return static_cast<int>(tags_.size()); }
  const std::vector<BasisTag>& tags() const { return tags_; }
  const SparseMat& basis() const { return basis_; }

  /// Number of offline modes consumed for a neighborhood (the lambda index
  /// used by indicators); counts modes whose content entered the space even
  /// if the vector itself was rejected as dependent.
  int offline_used(int neighborhood) const { return offline_used_[neighborhood]; }
  int online_count(int neighborhood) const { return online_count_[neighborhood]; }

  struct AppendResult {
    int accepted = 0;
    std::vector<RejectedBasis> rejected;
  };

  /// Append candidates (full fine-grid vectors) in order.
  AppendResult append(const FineSystem& system,
                      const std::vector<std::pair<BasisTag, FineFunction>>& candidates);

  /// Galerkin solution of the fine problem in the current space; the empty
  /// space yields the zero function.
  FineFunction solve_coarse(const FineSystem& system, Eigen::VectorXd* coefficients = nullptr) const;

  /// max_k |a(u - u_ms, psi_k)| over stored (unit-energy) basis vectors,
  /// from the fine residual b - A u_ms.
  double galerkin_orthogonality_residual(const FineSystem& system, const FineFunction& u_ms) const;

 private:
  int fine_nodes_;
  SparseMat basis_;                // columns = basis vectors
  std::vector<BasisTag> tags_;
  Eigen::MatrixXd gram_;           // B' A B
  Eigen::MatrixXd chol_;           // lower-triangular factor of gram_
  Eigen::VectorXd proj_rhs_;       // B' b
  std::vector<int> offline_used_;
  std::vector<int> online_count_;
};

/// Residual data of one neighborhood at the current multiscale solution.
struct ResidualReport {
  int neighborhood = -1;
  double r = 0.0;                   ///< dual norm of the local residual
  Eigen::VectorXd riesz_interior;   ///< Riesz representative, patch-interior-local
  double residual_applied = 0.0;    ///< R_i(phi_i), for consistency checks
  double lambda_next = 0.0;         ///< next eigenvalue lambda_{l_i+1}
  bool spectrum_exhausted = false;  ///< l_i reached the snapshot dimension
  bool lambda_nonpositive = false;
  double eta2 = 0.0;                ///< r^2 / lambda_next (0 when flagged)
};

/// Local residual functional R_i(v) = (f, v) - a(u_ms, v) restricted to the
/// patch interior, solved for its Riesz representative with the cached
/// factorization. `residual_full` is the fine-grid residual b - A u_ms.
ResidualReport residual_riesz(const LocalBasisSet& local, const Eigen::VectorXd& residual_full,
                              int offline_used);

/// Convenience overload computing the fine residual itself.
ResidualReport residual_riesz(const LocalBasisSet& local, const FineSystem& system,
                              const FineFunction& u_ms, int offline_used);

struct ErrorEstimate {
  double total = 0.0;    ///< sum of eta_i^2 over usable terms
  int excluded = 0;      ///< terms flagged non-positive and left out
  double residual_sq_total = 0.0;  ///< sum of r_i^2
};

/// Un-normalized estimator sum; terms with non-positive next eigenvalue are
/// excluded and counted.
ErrorEstimate error_estimate(const std::vector<ResidualReport>& reports);

}  // namespace msfem
