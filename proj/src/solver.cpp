#include "msfem/solver.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace msfem {

MultiscaleSpace::MultiscaleSpace(int fine_node_count, int neighborhood_count)
    : fine_nodes_(fine_node_count),
      basis_(fine_node_count, 0),
      offline_used_(neighborhood_count, 0),
      online_count_(neighborhood_count, 0) {}

MultiscaleSpace::AppendResult MultiscaleSpace::append(
    const FineSystem& system, const std::vector<std::pair<BasisTag, FineFunction>>& candidates) {
  AppendResult result;
  if (candidates.empty()) return result;

  const int old_dim = dimension();
  // Accepted in-batch columns, kept sparse for the cross terms against
  // candidates later in the same batch.
  std::vector<std::vector<std::pair<int, double>>> pending;

  for (const auto& [tag, vec] : candidates) {
    if (tag.kind == BasisKind::offline) ++offline_used_[tag.neighborhood];

    if (vec.size() != fine_nodes_) {
      result.rejected.push_back({tag, "size mismatch"});
      continue;
    }
    const double energy = vec.dot(system.stiffness * vec);
    if (!(energy > 0.0) || !std::isfinite(energy)) {
      result.rejected.push_back({tag, "zero energy"});
      continue;
    }
    const Eigen::VectorXd w = vec / std::sqrt(energy);
    const Eigen::VectorXd aw = system.stiffness * w;

    const int dim = dimension();
    Eigen::VectorXd cross(dim);
    if (old_dim > 0) cross.head(old_dim) = basis_.transpose() * aw;
    for (size_t p = 0; p < pending.size(); ++p) {
      double dot = 0.0;
      for (const auto& [row, val] : pending[p]) dot += val * aw[row];
      cross[old_dim + static_cast<int>(p)] = dot;
    }

    // Incremental Cholesky: the pivot is the energy fraction left after
    // A-orthogonalization against every stored vector. A tiny pivot means
    // the candidate is (nearly) dependent and would blow up the Gram
    // condition number, so it is dropped.
    Eigen::VectorXd y;
    double pivot = 1.0;
    if (dim > 0) {
      y = chol_.topLeftCorner(dim, dim).triangularView<Eigen::Lower>().solve(cross);
      pivot = 1.0 - y.squaredNorm();
    }
    if (pivot < 1e-10) {
      result.rejected.push_back({tag, "dependent (remaining energy fraction " +
                                          std::to_string(std::max(pivot, 0.0)) + ")"});
      continue;
    }

    gram_.conservativeResize(dim + 1, dim + 1);
    chol_.conservativeResize(dim + 1, dim + 1);
    if (dim > 0) {
      gram_.topRightCorner(dim, 1) = cross;
      gram_.bottomLeftCorner(1, dim) = cross.transpose();
      chol_.topRightCorner(dim, 1).setZero();
      chol_.bottomLeftCorner(1, dim) = y.transpose();
    }
    gram_(dim, dim) = 1.0;
    chol_(dim, dim) = std::sqrt(pivot);

    proj_rhs_.conservativeResize(dim + 1);
    proj_rhs_[dim] = w.dot(system.load);

    auto& col = pending.emplace_back();
    for (int k = 0; k < w.size(); ++k) {
      if (w[k] != 0.0) col.emplace_back(k, w[k]);
    }
    tags_.push_back(tag);
    if (tag.kind == BasisKind::online) ++online_count_[tag.neighborhood];
    ++result.accepted;
  }

  if (!pending.empty()) {
    std::vector<Eigen::Triplet<double>> all;
    size_t extra = 0;
    for (const auto& col : pending) extra += col.size();
    all.reserve(static_cast<size_t>(basis_.nonZeros()) + extra);
    for (int c = 0; c < basis_.outerSize(); ++c) {
      for (SparseMat::InnerIterator it(basis_, c); it; ++it) {
        all.emplace_back(static_cast<int>(it.row()), c, it.value());
      }
    }
    for (size_t p = 0; p < pending.size(); ++p) {
      for (const auto& [row, val] : pending[p]) {
        all.emplace_back(row, old_dim + static_cast<int>(p), val);
      }
    }
    SparseMat grown(fine_nodes_, dimension());
    grown.setFromTriplets(all.begin(), all.end());
    grown.makeCompressed();
    basis_ = std::move(grown);
  }
  return result;
}

FineFunction MultiscaleSpace::solve_coarse(const FineSystem& system,
                                           Eigen::VectorXd* coefficients) const {
  if (dimension() == 0) {
    if (coefficients) coefficients->resize(0);
    return FineFunction::Zero(fine_nodes_);
  }
  const auto lower = chol_.triangularView<Eigen::Lower>();
  const auto upper = chol_.transpose().triangularView<Eigen::Upper>();
  Eigen::VectorXd c = upper.solve(lower.solve(proj_rhs_));
  // One refinement pass on the projected system.
  const Eigen::VectorXd res = proj_rhs_ - gram_ * c;
  c += upper.solve(lower.solve(res));
  if (coefficients) *coefficients = c;
  return basis_ * c;
}

double MultiscaleSpace::galerkin_orthogonality_residual(const FineSystem& system,
                                                        const FineFunction& u_ms) const {
  if (dimension() == 0) return 0.0;
  const Eigen::VectorXd residual = system.load - system.stiffness * u_ms;
  return (basis_.transpose() * residual).cwiseAbs().maxCoeff();
}

ResidualReport residual_riesz(const LocalBasisSet& local, const Eigen::VectorXd& residual_full,
                              int offline_used) {
  ResidualReport rep;
  rep.neighborhood = local.nb().center;

  const auto& op = local.patch_op();
  if (!op.empty_interior()) {
    Eigen::VectorXd rho(op.interior().size());
    for (size_t k = 0; k < op.interior().size(); ++k) rho[k] = residual_full[op.interior()[k]];
    rep.riesz_interior = op.solve(rho);
    const double energy = op.interior_energy(rep.riesz_interior);
    rep.r = std::sqrt(std::max(0.0, energy));
    rep.residual_applied = rho.dot(rep.riesz_interior);
  } else {
    rep.riesz_interior.resize(0);
  }

  if (offline_used >= local.snapshot_count()) {
    rep.spectrum_exhausted = true;
    rep.lambda_next = std::numeric_limits<double>::infinity();
    rep.eta2 = 0.0;
  } else {
    rep.lambda_next = local.eigenvalue(offline_used);
    if (rep.lambda_next > 0.0) {
      rep.eta2 = rep.r * rep.r / rep.lambda_next;
    } else {
      rep.lambda_nonpositive = true;
      rep.eta2 = 0.0;
    }
  }
  return rep;
}

ResidualReport residual_riesz(const LocalBasisSet& local, const FineSystem& system,
                              const FineFunction& u_ms, int offline_used) {
  const Eigen::VectorXd residual = system.load - system.stiffness * u_ms;
  return residual_riesz(local, residual, offline_used);
}

ErrorEstimate error_estimate(const std::vector<ResidualReport>& reports) {
  ErrorEstimate est;
  for (const auto& rep : reports) {
    est.residual_sq_total += rep.r * rep.r;
    if (rep.lambda_nonpositive) {
      ++est.excluded;
    } else if (!rep.spectrum_exhausted) {
      est.total += rep.eta2;
    }
  }
  return est;
}

}  // namespace msfem
