#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "msfem/enrich.hpp"
#include "msfem/harness.hpp"

using namespace msfem;

namespace {

Workspace small_workspace(double contrast, DofConvention convention = DofConvention::all_nodes) {
  FieldSpec spec;
  spec.background = 1.0;
  spec.contrast = contrast;
  spec.shapes.push_back({GeomShape::Kind::rect, 0.05, 0.45, 0.95, 0.55});
  spec.shapes.push_back({GeomShape::Kind::disk, 0.25, 0.2, 0.08});
  const auto grids = build_grids(Rect{}, 4, 4, 4);
  auto kappa = contrast > 1.0 ? generate_field(spec, grids.fine_nx, grids.fine_ny, Rect{}, 0)
                              : constant_field(grids.fine_nx, grids.fine_ny, 1.0);
  auto system = build_fine_system(grids, kappa, [](double, double) { return 1.0; });
  return build_workspace(std::move(system), std::move(kappa), convention, 3);
}

}  // namespace

TEST_CASE("coarse Galerkin solve") {
  const auto ws = small_workspace(1e3);

  SUBCASE("the full fine space reproduces the fine solution") {
    MultiscaleSpace space(ws.grids.fine_node_count(), ws.grids.coarse_node_count());
    std::vector<std::pair<BasisTag, FineFunction>> unit_vectors;
    for (size_t k = 0; k < ws.system.free_nodes.size(); ++k) {
      FineFunction e = FineFunction::Zero(ws.grids.fine_node_count());
      e[ws.system.free_nodes[k]] = 1.0;
      unit_vectors.emplace_back(BasisTag{0, BasisKind::online, static_cast<int>(k)}, e);
    }
    const auto res = space.append(ws.system, unit_vectors);
    CHECK(res.rejected.empty());
    const auto u_ms = space.solve_coarse(ws.system);
    CHECK((u_ms - ws.u_fine).cwiseAbs().maxCoeff() <=
          1e-10 * ws.u_fine.cwiseAbs().maxCoeff());
  }

  SUBCASE("nested spaces never increase the energy error") {
    MultiscaleSpace space = build_initial_space(ws, 1);
    const auto u1 = space.solve_coarse(ws.system);
    const double ea1 = error_pair(ws.system, ws.u_fine, u1).first;
    // enrich by one more offline mode everywhere
    std::vector<std::pair<BasisTag, FineFunction>> more;
    for (int node : ws.active_nodes) {
      const auto vecs = ws.local[node].offline_vectors(1, 2);
      more.emplace_back(BasisTag{node, BasisKind::offline, 1},
                        ws.local[node].to_global(vecs.col(0), ws.grids.fine_node_count()));
    }
    space.append(ws.system, more);
    const auto u2 = space.solve_coarse(ws.system);
    const double ea2 = error_pair(ws.system, ws.u_fine, u2).first;
    CHECK(ea2 <= ea1 + 1e-12);
  }

  SUBCASE("Galerkin orthogonality against every basis vector") {
    MultiscaleSpace space = build_initial_space(ws, 2);
    const auto u_ms = space.solve_coarse(ws.system);
    const double rel = space.galerkin_orthogonality_residual(ws.system, u_ms) /
                       energy_norm(ws.system, ws.u_fine);
    CHECK(rel <= 1e-10);
  }

  SUBCASE("stored vectors have unit energy") {
    MultiscaleSpace space = build_initial_space(ws, 2);
    const Eigen::MatrixXd dense(space.basis());
    for (int c = 0; c < dense.cols(); ++c) {
      const double energy = dense.col(c).dot(ws.system.stiffness * dense.col(c));
      CHECK(energy == doctest::Approx(1.0).epsilon(1e-10));
    }
  }

  SUBCASE("dependent candidates are rejected and reported") {
    MultiscaleSpace space = build_initial_space(ws, 1);
    const int node = ws.active_nodes[ws.active_nodes.size() / 2];
    const auto vecs = ws.local[node].offline_vectors(0, 1);
    const FineFunction duplicate =
        2.5 * ws.local[node].to_global(vecs.col(0), ws.grids.fine_node_count());
    const auto res = space.append(
        ws.system, {{BasisTag{node, BasisKind::online, 0}, duplicate}});
    REQUIRE(res.rejected.size() == 1);
    CHECK(res.accepted == 0);
    CHECK(res.rejected[0].tag.neighborhood == node);
    const FineFunction zero = FineFunction::Zero(ws.grids.fine_node_count());
    const auto res2 =
        space.append(ws.system, {{BasisTag{node, BasisKind::online, 1}, zero}});
    REQUIRE(res2.rejected.size() == 1);
    CHECK(res2.rejected[0].reason == "zero energy");
  }
}

TEST_CASE("residual Riesz representatives") {
  const auto ws = small_workspace(1e4);
  MultiscaleSpace space = build_initial_space(ws, 2);
  const auto u_ms = space.solve_coarse(ws.system);

  SUBCASE("exact solution leaves zero residual everywhere") {
    const double scale = energy_norm(ws.system, ws.u_fine);
    for (int node : ws.active_nodes) {
      const auto rep = residual_riesz(ws.local[node], ws.system, ws.u_fine,
                                      space.offline_used(node));
      CHECK(rep.r <= 1e-10 * scale);
    }
  }

  SUBCASE("Riesz identity R(phi) = |phi|^2") {
    for (int node : ws.active_nodes) {
      const auto rep = residual_riesz(ws.local[node], ws.system, u_ms,
                                      space.offline_used(node));
      if (rep.r == 0.0) continue;
      CHECK(std::abs(rep.residual_applied - rep.r * rep.r) <= 1e-10 * rep.r * rep.r);
    }
  }

  SUBCASE("residual vanishes on basis functions supported in the patch") {
    const Eigen::VectorXd residual = ws.system.load - ws.system.stiffness * u_ms;
    const int node = ws.grids.coarse_node_id(2, 2);
    const auto vecs = ws.local[node].offline_vectors(0, 2);
    for (int c = 0; c < 2; ++c) {
      const FineFunction psi =
          ws.local[node].to_global(vecs.col(c), ws.grids.fine_node_count());
      const double scale = energy_norm(ws.system, ws.u_fine) * std::sqrt(psi.dot(ws.system.stiffness * psi));
      CHECK(std::abs(residual.dot(psi)) <= 1e-10 * scale);
    }
  }

  SUBCASE("dual norm law against dense maximization") {
    // r = sup { |R(v)| : |v|_A = 1, v in V_i } = sqrt(rho' Aii^-1 rho),
    // evaluated with a dense LU as the independent route
    const Eigen::VectorXd residual = ws.system.load - ws.system.stiffness * u_ms;
    for (int node : {ws.grids.coarse_node_id(1, 1), ws.grids.coarse_node_id(0, 0),
                     ws.grids.coarse_node_id(2, 3)}) {
      const auto& local = ws.local[node];
      const auto rep = residual_riesz(local, residual, space.offline_used(node));
      const auto& op = local.patch_op();
      Eigen::VectorXd rho(op.interior().size());
      for (size_t k = 0; k < op.interior().size(); ++k) rho[k] = residual[op.interior()[k]];
      const Eigen::MatrixXd a_dense(op.a_ii());
      const double sup = std::sqrt(rho.dot(a_dense.fullPivLu().solve(rho)));
      CHECK(rep.r == doctest::Approx(sup).epsilon(1e-9));
    }
  }
}

TEST_CASE("error estimator") {
  const auto ws = small_workspace(1e4);
  MultiscaleSpace space = build_initial_space(ws, 2);

  SUBCASE("zero residual gives a zero estimate") {
    const auto reports = collect_reports(ws, space, ws.u_fine);
    const auto est = error_estimate(reports);
    CHECK(est.total <= 1e-18);
  }

  SUBCASE("estimator is monotone in the local residual norms") {
    auto u_ms = space.solve_coarse(ws.system);
    auto reports = collect_reports(ws, space, u_ms);
    const auto base = error_estimate(reports);
    for (auto& rep : reports) {
      rep.r *= 0.5;
      rep.eta2 = rep.lambda_nonpositive || rep.spectrum_exhausted
                     ? 0.0
                     : rep.r * rep.r / rep.lambda_next;
    }
    const auto shrunk = error_estimate(reports);
    CHECK(shrunk.total <= base.total);
    CHECK(shrunk.total == doctest::Approx(0.25 * base.total).epsilon(1e-12));
  }

  SUBCASE("non-positive next eigenvalue is excluded and counted") {
    auto u_ms = space.solve_coarse(ws.system);
    auto reports = collect_reports(ws, space, u_ms);
    reports[0].lambda_nonpositive = true;
    reports[0].eta2 = 0.0;
    const auto est = error_estimate(reports);
    CHECK(est.excluded == 1);
  }
}
