#include "msfem/fem.hpp"

#include <cmath>
#include <stdexcept>

namespace msfem {

Eigen::Matrix4d cell_stiffness(double hx, double hy) {
  const double rx = hy / hx / 6.0;
  const double ry = hx / hy / 6.0;
  Eigen::Matrix4d kxx, kyy;
  // local node order (0,0),(1,0),(0,1),(1,1)
  kxx << 2, -2, 1, -1,
        -2, 2, -1, 1,
         1, -1, 2, -2,
        -1, 1, -2, 2;
  kyy << 2, 1, -2, -1,
         1, 2, -1, -2,
        -2, -1, 2, 1,
        -1, -2, 1, 2;
  return rx * kxx + ry * kyy;
}

Eigen::Matrix4d cell_mass(double hx, double hy) {
  Eigen::Matrix4d m;
  m << 4, 2, 2, 1,
       2, 4, 1, 2,
       2, 1, 4, 2,
       1, 2, 2, 4;
  return (hx * hy / 36.0) * m;
}

Eigen::Vector2d cell_midpoint_gradient(double hx, double hy, const Eigen::Vector4d& v) {
  return {(v[1] + v[3] - v[0] - v[2]) / (2.0 * hx), (v[2] + v[3] - v[0] - v[1]) / (2.0 * hy)};
}

namespace {

// Global node ids of one fine cell in local order (0,0),(1,0),(0,1),(1,1).
inline std::array<int, 4> cell_nodes(const GridHierarchy& g, int ci, int cj) {
  return {g.fine_node_id(ci, cj), g.fine_node_id(ci + 1, cj), g.fine_node_id(ci, cj + 1),
          g.fine_node_id(ci + 1, cj + 1)};
}

SparseMat assemble_cellwise(const GridHierarchy& g, const Eigen::Matrix4d& local,
                            const std::vector<double>* cell_weight) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(g.fine_cell_count()) * 16);
  for (int cj = 0; cj < g.fine_ny; ++cj) {
    for (int ci = 0; ci < g.fine_nx; ++ci) {
      const double w = cell_weight ? (*cell_weight)[g.fine_cell_id(ci, cj)] : 1.0;
      const auto n = cell_nodes(g, ci, cj);
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          trip.emplace_back(n[a], n[b], w * local(a, b));
        }
      }
    }
  }
  SparseMat m(g.fine_node_count(), g.fine_node_count());
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace

SparseMat assemble_stiffness(const GridHierarchy& g, const PermeabilityField& kappa) {
  kappa.validate();
  if (kappa.nx != g.fine_nx || kappa.ny != g.fine_ny) {
    throw std::invalid_argument("assemble_stiffness: field does not match the fine grid");
  }
  return assemble_cellwise(g, cell_stiffness(g.hx, g.hy), &kappa.values);
}

SparseMat assemble_mass(const GridHierarchy& g) {
  return assemble_cellwise(g, cell_mass(g.hx, g.hy), nullptr);
}

FineFunction assemble_load(const GridHierarchy& g, const ScalarField& f) {
  FineFunction b = FineFunction::Zero(g.fine_node_count());
  const double gp = 0.5 / std::sqrt(3.0);
  const double q[2] = {0.5 - gp, 0.5 + gp};
  const double scale = g.hx * g.hy / 4.0;
  for (int cj = 0; cj < g.fine_ny; ++cj) {
    for (int ci = 0; ci < g.fine_nx; ++ci) {
      const auto n = cell_nodes(g, ci, cj);
      const double x0 = g.fine_node_x(ci), y0 = g.fine_node_y(cj);
      for (double qx : q) {
        for (double qy : q) {
          const double fv = f(x0 + qx * g.hx, y0 + qy * g.hy);
          const double s[4] = {(1 - qx) * (1 - qy), qx * (1 - qy), (1 - qx) * qy, qx * qy};
          for (int a = 0; a < 4; ++a) b[n[a]] += scale * fv * s[a];
        }
      }
    }
  }
  return b;
}

FineFunction assemble_load(const GridHierarchy& g, const std::vector<double>& cell_values) {
  if (cell_values.size() != static_cast<size_t>(g.fine_cell_count())) {
    throw std::invalid_argument("assemble_load: cell sample count does not match the fine grid");
  }
  FineFunction b = FineFunction::Zero(g.fine_node_count());
  const double quarter = g.hx * g.hy / 4.0;
  for (int cj = 0; cj < g.fine_ny; ++cj) {
    for (int ci = 0; ci < g.fine_nx; ++ci) {
      const double w = quarter * cell_values[g.fine_cell_id(ci, cj)];
      for (int id : cell_nodes(g, ci, cj)) b[id] += w;
    }
  }
  return b;
}

namespace {

FineSystem finish_system(const GridHierarchy& g, const PermeabilityField& kappa,
                         FineFunction load) {
  FineSystem s;
  s.grids = g;
  s.stiffness = assemble_stiffness(g, kappa);
  s.mass = assemble_mass(g);
  s.load = std::move(load);

  s.node_to_free.assign(g.fine_node_count(), -1);
  for (int id = 0; id < g.fine_node_count(); ++id) {
    if (!g.fine_node_on_domain_boundary(id)) {
      s.node_to_free[id] = static_cast<int>(s.free_nodes.size());
      s.free_nodes.push_back(id);
    }
  }

  std::vector<Eigen::Triplet<double>> trip;
  for (int col : s.free_nodes) {
    for (SparseMat::InnerIterator it(s.stiffness, col); it; ++it) {
      const int rf = s.node_to_free[static_cast<int>(it.row())];
      if (rf >= 0) trip.emplace_back(rf, s.node_to_free[col], it.value());
    }
  }
  const int nf = static_cast<int>(s.free_nodes.size());
  s.stiffness_ff.resize(nf, nf);
  s.stiffness_ff.setFromTriplets(trip.begin(), trip.end());
  s.stiffness_ff.makeCompressed();
  return s;
}

}  // namespace

FineSystem build_fine_system(const GridHierarchy& g, const PermeabilityField& kappa,
                             const ScalarField& f) {
  return finish_system(g, kappa, assemble_load(g, f));
}

FineSystem build_fine_system(const GridHierarchy& g, const PermeabilityField& kappa,
                             const std::vector<double>& f_cells) {
  return finish_system(g, kappa, assemble_load(g, f_cells));
}

Eigen::VectorXd FineSystem::load_free() const { return restrict_free(load); }

Eigen::VectorXd FineSystem::restrict_free(const FineFunction& full) const {
  Eigen::VectorXd r(free_nodes.size());
  for (size_t k = 0; k < free_nodes.size(); ++k) r[k] = full[free_nodes[k]];
  return r;
}

FineFunction FineSystem::prolong_free(const Eigen::VectorXd& free_values) const {
  FineFunction full = FineFunction::Zero(grids.fine_node_count());
  for (size_t k = 0; k < free_nodes.size(); ++k) full[free_nodes[k]] = free_values[k];
  return full;
}

FineFunction solve_fine(const FineSystem& s) {
  if (s.free_nodes.empty()) return FineFunction::Zero(s.grids.fine_node_count());
  Eigen::SimplicialLDLT<SparseMat> factor(s.stiffness_ff);
  if (factor.info() != Eigen::Success) {
    throw std::runtime_error("solve_fine: factorization failed (matrix not SPD)");
  }
  if ((factor.vectorD().array() <= 0.0).any()) {
    throw std::runtime_error("solve_fine: matrix is not positive definite");
  }
  double a_inf = 0.0;
  for (int c = 0; c < s.stiffness_ff.outerSize(); ++c) {
    double colsum = 0.0;
    for (SparseMat::InnerIterator it(s.stiffness_ff, c); it; ++it) colsum += std::abs(it.value());
    a_inf = std::max(a_inf, colsum);
  }
  const Eigen::VectorXd b = s.load_free();
  Eigen::VectorXd x = factor.solve(b);
  // Normwise backward error |b - Ax| / (|b| + |A| |x|), driven to roundoff
  // by refinement.
  double backward = 1.0;
  for (int pass = 0; pass < 4; ++pass) {
    const Eigen::VectorXd res = b - s.stiffness_ff * x;
    const double denom =
        b.lpNorm<Eigen::Infinity>() + a_inf * x.lpNorm<Eigen::Infinity>();
    backward = denom > 0 ? res.lpNorm<Eigen::Infinity>() / denom : res.lpNorm<Eigen::Infinity>();
    if (backward <= 1e-14) break;
    x += factor.solve(res);
  }
  if (backward > 1e-12) {
    throw std::runtime_error("solve_fine: relative residual did not reach 1e-12");
  }
  return s.prolong_free(x);
}

PatchOperator::PatchOperator(const SparseMat& stiffness, std::vector<int> interior,
                             std::vector<int> boundary)
    : interior_(std::move(interior)), boundary_(std::move(boundary)) {
  const int n = static_cast<int>(stiffness.rows());
  std::vector<int> to_interior(n, -1), to_boundary(n, -1);
  for (size_t k = 0; k < interior_.size(); ++k) to_interior[interior_[k]] = static_cast<int>(k);
  for (size_t k = 0; k < boundary_.size(); ++k) to_boundary[boundary_[k]] = static_cast<int>(k);

  std::vector<Eigen::Triplet<double>> tii, tib;
  for (size_t k = 0; k < interior_.size(); ++k) {
    const int col = interior_[k];
    for (SparseMat::InnerIterator it(stiffness, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (to_interior[r] >= 0) tii.emplace_back(to_interior[r], static_cast<int>(k), it.value());
    }
  }
  for (size_t k = 0; k < boundary_.size(); ++k) {
    const int col = boundary_[k];
    for (SparseMat::InnerIterator it(stiffness, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (to_interior[r] >= 0) tib.emplace_back(to_interior[r], static_cast<int>(k), it.value());
    }
  }
  a_ii_.resize(static_cast<int>(interior_.size()), static_cast<int>(interior_.size()));
  a_ii_.setFromTriplets(tii.begin(), tii.end());
  a_ii_.makeCompressed();
  a_ib_.resize(static_cast<int>(interior_.size()), static_cast<int>(boundary_.size()));
  a_ib_.setFromTriplets(tib.begin(), tib.end());
  a_ib_.makeCompressed();

  if (!interior_.empty()) {
    factor_ = std::make_unique<Eigen::SimplicialLDLT<SparseMat>>();
    factor_->compute(a_ii_);
    if (factor_->info() != Eigen::Success || (factor_->vectorD().array() <= 0.0).any()) {
      throw std::runtime_error("PatchOperator: interior block is not SPD");
    }
    for (int c = 0; c < a_ii_.outerSize(); ++c) {
      double colsum = 0;
      for (SparseMat::InnerIterator it(a_ii_, c); it; ++it) colsum += std::abs(it.value());
      a_inf_norm_ = std::max(a_inf_norm_, colsum);
    }
  }
}

Eigen::VectorXd PatchOperator::solve(const Eigen::VectorXd& rhs) const {
  if (interior_.empty()) return Eigen::VectorXd();
  Eigen::VectorXd x = factor_->solve(rhs);
  for (int pass = 0; pass < 3; ++pass) {
    const Eigen::VectorXd res = rhs - a_ii_ * x;
    if (res.lpNorm<Eigen::Infinity>() <=
        1e-14 * (rhs.lpNorm<Eigen::Infinity>() + a_inf_norm_ * x.lpNorm<Eigen::Infinity>())) {
      break;
    }
    x += factor_->solve(res);
  }
  return x;
}

Eigen::MatrixXd PatchOperator::solve_many(const Eigen::MatrixXd& rhs) const {
  if (interior_.empty()) return Eigen::MatrixXd(0, rhs.cols());
  return factor_->solve(rhs);
}

Eigen::VectorXd PatchOperator::harmonic_extension(const Eigen::VectorXd& boundary_values) const {
  if (interior_.empty()) return Eigen::VectorXd();
  return solve(-(a_ib_ * boundary_values));
}

Eigen::MatrixXd PatchOperator::harmonic_extensions_identity() const {
  if (interior_.empty()) return Eigen::MatrixXd(0, static_cast<int>(boundary_.size()));
  return solve_many(-Eigen::MatrixXd(a_ib_));
}

double PatchOperator::interior_energy(const Eigen::VectorXd& x) const {
  if (interior_.empty()) return 0.0;
  return x.dot(a_ii_ * x);
}

FineFunction local_dirichlet_solve(const PatchOperator& op, const Eigen::VectorXd& interior_rhs,
                                   int fine_node_count, bool* flagged_empty) {
  if (flagged_empty) *flagged_empty = op.empty_interior();
  FineFunction out = FineFunction::Zero(fine_node_count);
  if (op.empty_interior()) return out;
  if (interior_rhs.size() != static_cast<Eigen::Index>(op.interior().size())) {
    throw std::invalid_argument("local_dirichlet_solve: rhs size does not match patch interior");
  }
  const Eigen::VectorXd x = op.solve(interior_rhs);
  for (size_t k = 0; k < op.interior().size(); ++k) out[op.interior()[k]] = x[k];
  return out;
}

double energy_norm(const FineSystem& s, const FineFunction& u) {
  return std::sqrt(std::max(0.0, u.dot(s.stiffness * u)));
}

double l2_norm(const FineSystem& s, const FineFunction& u) {
  return std::sqrt(std::max(0.0, u.dot(s.mass * u)));
}

std::pair<double, double> error_pair(const FineSystem& s, const FineFunction& u,
                                     const FineFunction& u_ms) {
  const double ua = energy_norm(s, u);
  const double u2 = l2_norm(s, u);
  if (ua == 0.0 || u2 == 0.0) {
    throw std::invalid_argument("error_pair: reference solution has zero norm");
  }
  const FineFunction d = u - u_ms;
  return {energy_norm(s, d) / ua, l2_norm(s, d) / u2};
}

double l2_error_vs(const GridHierarchy& g, const FineFunction& u_h, const ScalarField& exact) {
  const double c = std::sqrt(0.6);
  const double pts[3] = {0.5 * (1 - c), 0.5, 0.5 * (1 + c)};
  const double wts[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  double acc = 0.0;
  for (int cj = 0; cj < g.fine_ny; ++cj) {
    for (int ci = 0; ci < g.fine_nx; ++ci) {
      const auto n = cell_nodes(g, ci, cj);
      const double x0 = g.fine_node_x(ci), y0 = g.fine_node_y(cj);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          const double qx = pts[a], qy = pts[b];
          const double uh = u_h[n[0]] * (1 - qx) * (1 - qy) + u_h[n[1]] * qx * (1 - qy) +
                            u_h[n[2]] * (1 - qx) * qy + u_h[n[3]] * qx * qy;
          const double diff = uh - exact(x0 + qx * g.hx, y0 + qy * g.hy);
          acc += wts[a] * wts[b] * diff * diff * g.hx * g.hy;
        }
      }
    }
  }
  return std::sqrt(acc);
}

}  // namespace msfem
