#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "msfem/fem.hpp"

using namespace msfem;

namespace {

// Independent energy evaluation: sum over cells of kappa * |grad u|^2 by 2x2
// Gauss quadrature on each cell (exact for bilinear u).
double energy_by_quadrature(const GridHierarchy& g, const PermeabilityField& kappa,
                            const FineFunction& u) {
  const double gp = 0.5 / std::sqrt(3.0);
  const double q[2] = {0.5 - gp, 0.5 + gp};
  double acc = 0.0;
  for (int cj = 0; cj < g.fine_ny; ++cj) {
    for (int ci = 0; ci < g.fine_nx; ++ci) {
      const double v00 = u[g.fine_node_id(ci, cj)], v10 = u[g.fine_node_id(ci + 1, cj)];
      const double v01 = u[g.fine_node_id(ci, cj + 1)], v11 = u[g.fine_node_id(ci + 1, cj + 1)];
      double cell = 0.0;
      for (double qx : q) {
        for (double qy : q) {
          const double gx = ((v10 - v00) * (1 - qy) + (v11 - v01) * qy) / g.hx;
          const double gy = ((v01 - v00) * (1 - qx) + (v11 - v10) * qx) / g.hy;
          cell += 0.25 * (gx * gx + gy * gy);
        }
      }
      acc += kappa.at(ci, cj) * cell * g.hx * g.hy;
    }
  }
  return acc;
}

ScalarField manufactured_u() {
  return [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); };
}

ScalarField manufactured_f() {
  return [](double x, double y) {
    return 2.0 * M_PI * M_PI * std::sin(M_PI * x) * std::sin(M_PI * y);
  };
}

}  // namespace

TEST_CASE("unit cell stiffness matches the closed form") {
  const Eigen::Matrix4d k = cell_stiffness(1.0, 1.0);
  // local order (0,0),(1,0),(0,1),(1,1): index pairs sharing an edge differ
  // in one coordinate, the diagonal pairs are (0,3) and (1,2)
  for (int a = 0; a < 4; ++a) CHECK(k(a, a) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(k(0, 1) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
  CHECK(k(0, 2) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
  CHECK(k(1, 3) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
  CHECK(k(2, 3) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
  CHECK(k(0, 3) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(k(1, 2) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  // rows sum to zero (constants have no energy)
  CHECK(k.rowwise().sum().cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("stiffness assembly") {
  const auto g = build_grids(Rect{}, 2, 2, 1);
  const auto kappa1 = constant_field(2, 2, 1.0);

  SUBCASE("scaling kappa scales every entry") {
    const SparseMat a1 = assemble_stiffness(g, kappa1);
    const auto kappa5 = constant_field(2, 2, 5.0);
    const SparseMat a5 = assemble_stiffness(g, kappa5);
    const Eigen::MatrixXd d1(a1), d5(a5);
    CHECK((d5 - 5.0 * d1).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("exact symmetry") {
    auto kappa = constant_field(2, 2, 1.0);
    kappa.values = {1.0, 3.0, 0.25, 7.5};
    const SparseMat a = assemble_stiffness(g, kappa);
    const Eigen::MatrixXd d(a);
    CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("Dirichlet-eliminated matrix is positive definite") {
    const auto sys = build_fine_system(g, kappa1, [](double, double) { return 0.0; });
    const Eigen::MatrixXd aff(sys.stiffness_ff);
    REQUIRE(aff.rows() == 1);  // the 2x2 fine grid has one interior node
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(aff);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(es.eigenvalues()[0] == doctest::Approx(8.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("coercivity on random free vectors") {
    const auto g2 = build_grids(Rect{}, 3, 3, 3);
    auto kappa = constant_field(9, 9, 1.0);
    std::mt19937 rng(7);
    for (auto& v : kappa.values) v = 0.5 + (rng() % 1000) / 250.0;
    const auto sys = build_fine_system(g2, kappa, [](double, double) { return 0.0; });
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd x(sys.free_nodes.size());
      for (int k = 0; k < x.size(); ++k) x[k] = (rng() % 2000) / 1000.0 - 1.0;
      if (x.norm() == 0) continue;
      CHECK(x.dot(sys.stiffness_ff * x) > 0.0);
    }
  }
  SUBCASE("non-positive field rejected") {
    auto bad = constant_field(2, 2, 1.0);
    bad.values[1] = 0.0;
    CHECK_THROWS_AS(assemble_stiffness(g, bad), std::invalid_argument);
    auto mismatch = constant_field(3, 2, 1.0);
    CHECK_THROWS_AS(assemble_stiffness(g, mismatch), std::invalid_argument);
  }
}

TEST_CASE("load assembly") {
  const auto g = build_grids(Rect{}, 4, 4, 4);
  SUBCASE("zero source gives the zero vector") {
    const auto b = assemble_load(g, [](double, double) { return 0.0; });
    CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("unit source gives h^2 at interior nodes") {
    const auto b = assemble_load(g, [](double, double) { return 1.0; });
    const double h2 = g.hx * g.hy;
    for (int j = 1; j < g.fine_ny; ++j) {
      for (int i = 1; i < g.fine_nx; ++i) {
        CHECK(b[g.fine_node_id(i, j)] == doctest::Approx(h2).epsilon(1e-13));
      }
    }
  }
  SUBCASE("linearity in the source") {
    const auto b1 = assemble_load(g, [](double x, double) { return x; });
    const auto b2 = assemble_load(g, [](double, double y) { return y * y; });
    const auto b12 = assemble_load(g, [](double x, double y) { return x + y * y; });
    CHECK((b12 - b1 - b2).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("cell-sampled source agrees with a piecewise-constant callable") {
    std::vector<double> cells(g.fine_cell_count());
    for (int c = 0; c < g.fine_cell_count(); ++c) cells[c] = 0.25 * c;
    const auto b1 = assemble_load(g, cells);
    const GridHierarchy gg = g;
    const auto b2 = assemble_load(g, [&cells, gg](double x, double y) {
      const int ci = std::min(static_cast<int>(x / gg.hx), gg.fine_nx - 1);
      const int cj = std::min(static_cast<int>(y / gg.hy), gg.fine_ny - 1);
      return cells[gg.fine_cell_id(ci, cj)];
    });
    CHECK((b1 - b2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fine solve") {
  SUBCASE("manufactured solution converges at second order in L2") {
    double prev = -1.0;
    for (int refine : {8, 16, 32}) {
      const auto g = build_grids(Rect{}, 4, 4, refine);
      const auto kappa = constant_field(g.fine_nx, g.fine_ny, 1.0);
      const auto sys = build_fine_system(g, kappa, manufactured_f());
      const auto u = solve_fine(sys);
      const double err = l2_error_vs(g, u, manufactured_u());
      if (prev > 0.0) {
        const double ratio = prev / err;
        CHECK(ratio > 3.5);
        CHECK(ratio < 4.5);
      }
      prev = err;
    }
  }
  SUBCASE("zero source gives the zero solution") {
    const auto g = build_grids(Rect{}, 2, 2, 4);
    const auto kappa = constant_field(g.fine_nx, g.fine_ny, 1.0);
    const auto sys = build_fine_system(g, kappa, [](double, double) { return 0.0; });
    CHECK(solve_fine(sys).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("superposition") {
    const auto g = build_grids(Rect{}, 2, 2, 6);
    auto kappa = constant_field(g.fine_nx, g.fine_ny, 1.0);
    std::mt19937 rng(3);
    for (auto& v : kappa.values) v = 1.0 + (rng() % 100) / 10.0;
    const ScalarField f1 = [](double x, double) { return x; };
    const ScalarField f2 = [](double, double y) { return std::cos(3 * y); };
    const auto u1 = solve_fine(build_fine_system(g, kappa, f1));
    const auto u2 = solve_fine(build_fine_system(g, kappa, f2));
    const auto u12 = solve_fine(build_fine_system(
        g, kappa, [&](double x, double y) { return f1(x, y) + f2(x, y); }));
    CHECK((u1 + u2 - u12).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("local Dirichlet solves") {
  const auto g = build_grids(Rect{}, 2, 2, 8);
  auto kappa = constant_field(g.fine_nx, g.fine_ny, 1.0);
  const auto sys = build_fine_system(g, kappa, [](double, double) { return 1.0; });

  SUBCASE("zero rhs gives the zero function") {
    const auto nb = neighborhood_of(g, g.coarse_node_id(1, 1));
    const PatchOperator op(sys.stiffness, nb.interior_nodes, nb.boundary_nodes);
    bool empty = true;
    const auto phi = local_dirichlet_solve(op, Eigen::VectorXd::Zero(nb.interior_nodes.size()),
                                           g.fine_node_count(), &empty);
    CHECK_FALSE(empty);
    CHECK(phi.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("corner neighborhood matches an independently assembled patch problem") {
    // corner node (0,0): the patch is the single coarse element [0,H]^2
    const auto nb = neighborhood_of(g, g.coarse_node_id(0, 0));
    REQUIRE(nb.coarse_elements.size() == 1);
    const PatchOperator op(sys.stiffness, nb.interior_nodes, nb.boundary_nodes);

    Eigen::VectorXd rhs(nb.interior_nodes.size());
    for (size_t k = 0; k < nb.interior_nodes.size(); ++k) rhs[k] = sys.load[nb.interior_nodes[k]];
    const auto phi = local_dirichlet_solve(op, rhs, g.fine_node_count());

    // dense reference assembly of the same Dirichlet problem on the patch
    const int n = static_cast<int>(nb.interior_nodes.size());
    Eigen::MatrixXd a_dense = Eigen::MatrixXd::Zero(n, n);
    std::vector<int> to_local(g.fine_node_count(), -1);
    for (int k = 0; k < n; ++k) to_local[nb.interior_nodes[k]] = k;
    const Eigen::Matrix4d kloc = cell_stiffness(g.hx, g.hy);
    for (int cell : nb.patch_cells) {
      const auto [ci, cj] = g.fine_cell_ij(cell);
      const int ids[4] = {g.fine_node_id(ci, cj), g.fine_node_id(ci + 1, cj),
                          g.fine_node_id(ci, cj + 1), g.fine_node_id(ci + 1, cj + 1)};
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          if (to_local[ids[a]] >= 0 && to_local[ids[b]] >= 0) {
            a_dense(to_local[ids[a]], to_local[ids[b]]) += kloc(a, b);
          }
        }
      }
    }
    const Eigen::VectorXd ref = a_dense.ldlt().solve(rhs);
    for (int k = 0; k < n; ++k) {
      CHECK(phi[nb.interior_nodes[k]] == doctest::Approx(ref[k]).epsilon(1e-10));
    }
  }

  SUBCASE("Galerkin identity: solution energy equals the functional applied to it") {
    const auto nb = neighborhood_of(g, g.coarse_node_id(1, 1));
    const PatchOperator op(sys.stiffness, nb.interior_nodes, nb.boundary_nodes);
    Eigen::VectorXd rhs(nb.interior_nodes.size());
    std::mt19937 rng(17);
    for (int k = 0; k < rhs.size(); ++k) rhs[k] = (rng() % 2000) / 1000.0 - 1.0;
    const Eigen::VectorXd phi = op.solve(rhs);
    const double energy = op.interior_energy(phi);
    CHECK(energy == doctest::Approx(rhs.dot(phi)).epsilon(1e-11));
  }

  SUBCASE("patch covering the whole domain reproduces the fine solve") {
    std::vector<int> boundary;
    for (int id = 0; id < g.fine_node_count(); ++id) {
      if (g.fine_node_on_domain_boundary(id)) boundary.push_back(id);
    }
    const PatchOperator op(sys.stiffness, sys.free_nodes, boundary);
    const auto phi = local_dirichlet_solve(op, sys.load_free(), g.fine_node_count());
    const auto u = solve_fine(sys);
    CHECK((phi - u).cwiseAbs().maxCoeff() < 1e-11);
  }

  SUBCASE("empty interior is flagged") {
    const auto g1 = build_grids(Rect{}, 1, 1, 1);
    const auto kappa1 = constant_field(1, 1, 1.0);
    const auto sys1 = build_fine_system(g1, kappa1, [](double, double) { return 1.0; });
    const auto nb = neighborhood_of(g1, 0);
    const PatchOperator op(sys1.stiffness, nb.interior_nodes, nb.boundary_nodes);
    bool empty = false;
    const auto phi = local_dirichlet_solve(op, Eigen::VectorXd(), g1.fine_node_count(), &empty);
    CHECK(empty);
    CHECK(phi.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("norms and error pairs") {
  const auto g = build_grids(Rect{}, 4, 4, 8);
  auto kappa = constant_field(g.fine_nx, g.fine_ny, 1.0);
  std::mt19937 rng(29);
  for (auto& v : kappa.values) v = 1.0 + (rng() % 10000) / 100.0;
  const auto sys = build_fine_system(g, kappa, manufactured_f());
  const auto u = solve_fine(sys);

  SUBCASE("identical functions give zero errors") {
    const auto [ea, e2] = error_pair(sys, u, u);
    CHECK(ea == 0.0);
    CHECK(e2 == 0.0);
  }
  SUBCASE("zero approximation gives unit errors") {
    const auto [ea, e2] = error_pair(sys, u, FineFunction::Zero(g.fine_node_count()));
    CHECK(ea == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(e2 == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("matrix energy equals independent per-cell quadrature") {
    const double via_matrix = energy_norm(sys, u);
    const double via_quadrature = std::sqrt(energy_by_quadrature(g, kappa, u));
    CHECK(via_matrix == doctest::Approx(via_quadrature).epsilon(1e-12));
  }
  SUBCASE("zero-norm reference rejected") {
    const FineFunction zero = FineFunction::Zero(g.fine_node_count());
    CHECK_THROWS_AS(error_pair(sys, zero, u), std::invalid_argument);
  }
}
