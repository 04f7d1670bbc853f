#include "msfem/enrich.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace msfem {

Workspace build_workspace(FineSystem system, PermeabilityField kappa, DofConvention convention,
                          int eager_modes, const std::string& spectrum_cache_path) {
  Workspace ws;
  ws.grids = system.grids;
  ws.kappa = std::move(kappa);
  ws.system = std::move(system);
  ws.convention = convention;

  ws.u_fine = solve_fine(ws.system);
  ws.neighborhoods = all_neighborhoods(ws.grids);
  ws.pou = compute_pou(ws.grids, ws.kappa, ws.neighborhoods);
  ws.ktilde = compute_weight(ws.grids, ws.kappa, ws.pou, ws.neighborhoods);
  ws.coloring = four_coloring(ws.grids);

  const int n_nodes = ws.grids.coarse_node_count();
  ws.is_active.assign(n_nodes, 0);
  for (int id = 0; id < n_nodes; ++id) {
    const bool enrichable =
        convention == DofConvention::all_nodes || ws.grids.coarse_node_interior(id);
    if (enrichable) {
      ws.is_active[id] = 1;
      ws.active_nodes.push_back(id);
    }
  }

  std::vector<LocalSpectrum> cached;
  const std::uint64_t hash = field_hash(ws.kappa);
  bool have_cache = false;
  if (!spectrum_cache_path.empty()) {
    have_cache = load_spectrum_cache(spectrum_cache_path, ws.grids, hash, cached) &&
                 cached.size() == static_cast<size_t>(n_nodes);
  }

  ws.local.reserve(n_nodes);
  for (int id = 0; id < n_nodes; ++id) {
    ws.local.emplace_back(ws.grids, ws.system.stiffness, ws.kappa, ws.ktilde, ws.neighborhoods[id],
                          ws.pou.values[id], eager_modes, have_cache ? &cached[id] : nullptr);
  }

  if (!spectrum_cache_path.empty() && !have_cache) {
    std::vector<LocalSpectrum> spectra;
    spectra.reserve(n_nodes);
    for (const auto& l : ws.local) spectra.push_back(l.spectrum());
    save_spectrum_cache(spectrum_cache_path, ws.grids, hash, spectra);
  }
  return ws;
}

std::vector<int> dorfler_mark(const std::vector<double>& indicators, double theta) {
  if (!(theta > 0.0) || theta > 1.0) {
    throw std::invalid_argument("dorfler_mark: theta must lie in (0, 1]");
  }
  for (double v : indicators) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw std::invalid_argument("dorfler_mark: indicators must be finite and non-negative");
    }
  }
  std::vector<int> order(indicators.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&indicators](int a, int b) { return indicators[a] > indicators[b]; });

  double total = 0.0;
  for (int idx : order) total += indicators[idx];
  if (!(total > 0.0)) return {};

  const double target = theta * total;
  std::vector<int> marked;
  double prefix = 0.0;
  for (int idx : order) {
    marked.push_back(idx);
    prefix += indicators[idx];
    if (prefix >= target) break;
  }
  return marked;
}

MultiscaleSpace build_initial_space(const Workspace& ws, int initial_basis,
                                    std::vector<RejectedBasis>* rejected) {
  if (initial_basis < 1) {
    throw std::invalid_argument("build_initial_space: need at least one initial basis");
  }
  MultiscaleSpace space(ws.grids.fine_node_count(), ws.grids.coarse_node_count());
  std::vector<std::pair<BasisTag, FineFunction>> candidates;
  for (int node : ws.active_nodes) {
    const auto& local = ws.local[node];
    const int count = std::min(initial_basis, local.snapshot_count());
    const Eigen::MatrixXd vecs = local.offline_vectors(0, count);
    for (int k = 0; k < count; ++k) {
      candidates.emplace_back(BasisTag{node, BasisKind::offline, k},
                              local.to_global(vecs.col(k), ws.grids.fine_node_count()));
    }
  }
  const auto res = space.append(ws.system, candidates);
  if (rejected) {
    rejected->insert(rejected->end(), res.rejected.begin(), res.rejected.end());
  }
  return space;
}

std::vector<ResidualReport> collect_reports(const Workspace& ws, const MultiscaleSpace& space,
                                            const FineFunction& u_ms) {
  const Eigen::VectorXd residual = ws.system.load - ws.system.stiffness * u_ms;
  std::vector<ResidualReport> reports;
  reports.reserve(ws.active_nodes.size());
  for (int node : ws.active_nodes) {
    reports.push_back(residual_riesz(ws.local[node], residual, space.offline_used(node)));
  }
  return reports;
}

double lambda_min_active(const Workspace& ws, const MultiscaleSpace& space) {
  double lam = std::numeric_limits<double>::infinity();
  for (int node : ws.active_nodes) {
    const int used = space.offline_used(node);
    if (used < ws.local[node].snapshot_count()) {
      lam = std::min(lam, ws.local[node].eigenvalue(used));
    }
  }
  return lam;
}

OfflineStepResult offline_adapt_step(const Workspace& ws, MultiscaleSpace& space,
                                     const std::vector<ResidualReport>& reports, double theta,
                                     int basis_per_marked) {
  if (basis_per_marked < 1) {
    throw std::invalid_argument("offline_adapt_step: basis_per_marked must be >= 1");
  }
  std::vector<double> eta2(reports.size());
  for (size_t k = 0; k < reports.size(); ++k) eta2[k] = reports[k].eta2;

  OfflineStepResult result;
  const std::vector<int> marked_idx = dorfler_mark(eta2, theta);

  std::vector<std::pair<BasisTag, FineFunction>> candidates;
  for (int idx : marked_idx) {
    const int node = reports[idx].neighborhood;
    result.marked.push_back(node);
    const auto& local = ws.local[node];
    const int l = space.offline_used(node);
    const int upto = std::min(l + basis_per_marked, local.snapshot_count());
    if (upto <= l) {
      ++result.skipped_exhausted;
      continue;
    }
    const Eigen::MatrixXd vecs = local.offline_vectors(l, upto);
    for (int k = l; k < upto; ++k) {
      candidates.emplace_back(BasisTag{node, BasisKind::offline, k},
                              local.to_global(vecs.col(k - l), ws.grids.fine_node_count()));
    }
  }
  result.append = space.append(ws.system, candidates);
  return result;
}

namespace {

FineFunction riesz_to_global(const Workspace& ws, int node, const Eigen::VectorXd& interior_vals) {
  FineFunction out = FineFunction::Zero(ws.grids.fine_node_count());
  const auto& interior = ws.local[node].patch_op().interior();
  for (size_t k = 0; k < interior.size(); ++k) out[interior[k]] = interior_vals[k];
  return out;
}

std::vector<int> lattice_neighbors(const Workspace& ws, int node) {
  const auto [ci, cj] = ws.grids.coarse_node_ij(node);
  std::vector<int> out;
  for (int dj = -1; dj <= 1; ++dj) {
    for (int di = -1; di <= 1; ++di) {
      if (di == 0 && dj == 0) continue;
      const int i = ci + di, j = cj + dj;
      if (i < 0 || j < 0 || i > ws.grids.coarse_nx || j > ws.grids.coarse_ny) continue;
      const int id = ws.grids.coarse_node_id(i, j);
      if (ws.active(id)) out.push_back(id);
    }
  }
  return out;
}

}  // namespace

FineFunction reduced_online_candidate(const Workspace& ws, int node,
                                      const Eigen::VectorXd& residual_full,
                                      const std::vector<int>& window_start, int n0,
                                      bool use_neighbors, bool* empty_window) {
  std::vector<int> regions{node};
  if (use_neighbors) {
    const auto nbs = lattice_neighbors(ws, node);
    regions.insert(regions.end(), nbs.begin(), nbs.end());
  }

  // Gather the windowed offline vectors of every region as sparse columns.
  std::vector<Eigen::Triplet<double>> trip;
  int cols = 0;
  for (int region : regions) {
    const auto& local = ws.local[region];
    const int k0 = std::min(window_start[region], local.snapshot_count());
    const int k1 = std::min(k0 + n0, local.snapshot_count());
    if (k1 <= k0) continue;
    const Eigen::MatrixXd vecs = local.offline_vectors(k0, k1);
    const auto& patch = local.nb().patch_nodes;
    for (int c = 0; c < vecs.cols(); ++c) {
      for (size_t k = 0; k < patch.size(); ++k) {
        const double v = vecs(static_cast<Eigen::Index>(k), c);
        if (v != 0.0) trip.emplace_back(patch[k], cols, v);
      }
      ++cols;
    }
  }
  if (empty_window) *empty_window = (cols == 0);
  if (cols == 0) return FineFunction::Zero(ws.grids.fine_node_count());

  SparseMat w(ws.grids.fine_node_count(), cols);
  w.setFromTriplets(trip.begin(), trip.end());
  w.makeCompressed();

  const SparseMat aw = ws.system.stiffness * w;
  const Eigen::MatrixXd k_small = Eigen::MatrixXd(w.transpose() * aw);
  const Eigen::VectorXd g = w.transpose() * residual_full;

  // The windowed vectors can be nearly dependent after the partition-of-unity
  // multiplication, so solve through a spectral pseudo-inverse.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k_small);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("reduced_online_candidate: projection eigensolve failed");
  }
  const double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
  const double floor_val = 1e-12 * std::max(lam_max, 1e-300);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(cols);
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * g;
  for (int k = 0; k < cols; ++k) {
    if (es.eigenvalues()[k] > floor_val) inv[k] = proj[k] / es.eigenvalues()[k];
  }
  const Eigen::VectorXd c = es.eigenvectors() * inv;
  return w * c;
}

ColorSweepData online_color_step(const Workspace& ws, MultiscaleSpace& space,
                                 const EnrichmentPolicy& policy, int color, int iteration,
                                 FineFunction& u_ms, std::vector<int>* window_start,
                                 std::vector<RejectedBasis>* rejected) {
  ColorSweepData data;
  data.iteration = iteration;
  data.color = color;
  if (ws.u_fine.size() > 0) {
    const FineFunction diff = ws.u_fine - u_ms;
    data.err_sq_before = diff.dot(ws.system.stiffness * diff);
  }

  const Eigen::VectorXd residual = ws.system.load - ws.system.stiffness * u_ms;

  std::vector<ResidualReport> reports;
  for (int node : ws.coloring.colors[color]) {
    if (!ws.active(node)) continue;
    reports.push_back(residual_riesz(ws.local[node], residual, space.offline_used(node)));
  }

  // Select the neighborhoods to enrich.
  std::vector<char> selected(reports.size(), 1);
  if (policy.mode == PolicyMode::online_threshold) {
    for (size_t k = 0; k < reports.size(); ++k) selected[k] = reports[k].r > policy.tol ? 1 : 0;
  } else if (policy.mode == PolicyMode::online_cumulative) {
    std::vector<double> r2(reports.size());
    for (size_t k = 0; k < reports.size(); ++k) r2[k] = reports[k].r * reports[k].r;
    std::fill(selected.begin(), selected.end(), 0);
    for (int idx : dorfler_mark(r2, policy.theta)) selected[idx] = 1;
  }

  std::vector<std::pair<BasisTag, FineFunction>> candidates;
  std::vector<double> candidate_r2;
  for (size_t k = 0; k < reports.size(); ++k) {
    const auto& rep = reports[k];
    if (!selected[k]) continue;
    if (!(rep.r * rep.r > 1e-28)) continue;  // nothing to gain from a zero residual

    if (rep.r > 0.0 && rep.riesz_interior.size() > 0) {
      const double identity_err =
          std::abs(rep.residual_applied - rep.r * rep.r) / (rep.r * rep.r);
      data.max_riesz_identity_error = std::max(data.max_riesz_identity_error, identity_err);
    }

    FineFunction candidate;
    if (policy.mode == PolicyMode::online_reduced) {
      bool empty = false;
      candidate =
          reduced_online_candidate(ws, rep.neighborhood, residual, *window_start, policy.n0,
                                   policy.use_neighbors, &empty);
      if (empty) continue;
    } else {
      candidate = riesz_to_global(ws, rep.neighborhood, rep.riesz_interior);
    }
    candidates.emplace_back(
        BasisTag{rep.neighborhood, BasisKind::online, space.online_count(rep.neighborhood)},
        std::move(candidate));
    candidate_r2.push_back(rep.r * rep.r);
    data.lambda_min_marked = std::min(data.lambda_min_marked, rep.lambda_next);
  }

  const auto res = space.append(ws.system, candidates);
  std::vector<char> accepted(candidates.size(), 1);
  for (const auto& rej : res.rejected) {
    for (size_t k = 0; k < candidates.size(); ++k) {
      if (candidates[k].first.neighborhood == rej.tag.neighborhood &&
          candidates[k].first.ordinal == rej.tag.ordinal) {
        accepted[k] = 0;
      }
    }
    if (rejected) rejected->push_back(rej);
  }
  data.rejected = static_cast<int>(res.rejected.size());
  for (size_t k = 0; k < candidates.size(); ++k) {
    if (accepted[k]) {
      data.enriched.push_back(candidates[k].first.neighborhood);
      data.sum_r2_enriched += candidate_r2[k];
      if (window_start && policy.mode == PolicyMode::online_reduced && policy.advance_window) {
        (*window_start)[candidates[k].first.neighborhood] += policy.n0;
      }
    }
  }

  u_ms = space.solve_coarse(ws.system);
  data.galerkin_residual_after =
      space.galerkin_orthogonality_residual(ws.system, u_ms) /
      std::max(energy_norm(ws.system, ws.u_fine.size() > 0 ? ws.u_fine : u_ms), 1e-300);
  if (ws.u_fine.size() > 0) {
    const FineFunction diff = ws.u_fine - u_ms;
    data.err_sq_after = diff.dot(ws.system.stiffness * diff);
  }
  return data;
}

OnerpReport onerp_report(const std::vector<ResidualReport>& reports,
                         const std::vector<int>& marked_indices) {
  OnerpReport rep;
  for (const auto& r : reports) {
    if (!r.lambda_nonpositive && !r.spectrum_exhausted) rep.sum_eta2_total += r.eta2;
  }
  for (int idx : marked_indices) {
    const auto& r = reports[idx];
    rep.lambda_min_marked = std::min(rep.lambda_min_marked, r.lambda_next);
    if (!r.lambda_nonpositive && !r.spectrum_exhausted) rep.sum_eta2_marked += r.eta2;
  }
  if (rep.sum_eta2_total > 0.0 && std::isfinite(rep.lambda_min_marked)) {
    rep.ratio = rep.lambda_min_marked * rep.sum_eta2_marked / rep.sum_eta2_total;
  }
  return rep;
}

PolicyRunResult run_policy(const Workspace& ws, MultiscaleSpace& space,
                           const EnrichmentPolicy& policy, bool record_subiterations,
                           const RecordCallback& on_record) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  PolicyRunResult result;

  FineFunction u_ms = space.solve_coarse(ws.system);
  int step = 0;

  auto emit = [&](int iteration, int color, const std::vector<ResidualReport>& reports,
                  int added, int rejected_count) {
    IterationRecord rec;
    rec.step = step;
    rec.iteration = iteration;
    rec.color = color;
    rec.dof = space.dimension();
    if (ws.u_fine.size() > 0 && energy_norm(ws.system, ws.u_fine) > 0.0) {
      const auto [ea, e2] = error_pair(ws.system, ws.u_fine, u_ms);
      rec.e_a = ea;
      rec.e_2 = e2;
    }
    const ErrorEstimate est = error_estimate(reports);
    rec.residual_sq_total = est.residual_sq_total;
    rec.estimator = est.total;
    rec.lambda_min = lambda_min_active(ws, space);
    rec.added = added;
    rec.rejected = rejected_count;
    rec.wall_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(Clock::now() - t0)
            .count();
    result.records.push_back(rec);
    if (on_record) on_record(rec);
  };

  std::vector<ResidualReport> reports = collect_reports(ws, space, u_ms);
  emit(0, -1, reports, 0, 0);

  std::vector<int> window_start(ws.grids.coarse_node_count(), 0);
  for (int node : ws.active_nodes) window_start[node] = space.offline_used(node);

  for (int m = 1; m <= policy.max_iterations; ++m) {
    if (policy.mode == PolicyMode::offline_adaptive) {
      const ErrorEstimate est = error_estimate(reports);
      if (policy.tol > 0.0 && est.total <= policy.tol) {
        result.reached_tolerance = true;
        break;
      }
      auto stepres = offline_adapt_step(ws, space, reports, policy.theta, policy.basis_per_marked);
      for (const auto& rej : stepres.append.rejected) result.rejected.push_back(rej);
      u_ms = space.solve_coarse(ws.system);
      reports = collect_reports(ws, space, u_ms);
      ++step;
      emit(m, -1, reports, stepres.append.accepted,
           static_cast<int>(stepres.append.rejected.size()));
      if (stepres.append.accepted == 0) {
        result.stalled = true;
        break;
      }
      continue;
    }

    int added_this_iteration = 0;
    int rejected_this_iteration = 0;
    for (int color = 0; color < 4; ++color) {
      ColorSweepData data =
          online_color_step(ws, space, policy, color, m, u_ms, &window_start, &result.rejected);
      added_this_iteration += static_cast<int>(data.enriched.size());
      rejected_this_iteration += data.rejected;
      result.sweeps.push_back(std::move(data));
      ++step;
      if (record_subiterations) {
        reports = collect_reports(ws, space, u_ms);
        emit(m, color, reports, static_cast<int>(result.sweeps.back().enriched.size()),
             result.sweeps.back().rejected);
      }
    }
    reports = collect_reports(ws, space, u_ms);
    if (!record_subiterations) {
      emit(m, -1, reports, added_this_iteration, rejected_this_iteration);
    }

    if (policy.mode == PolicyMode::online_threshold) {
      double rmax = 0.0;
      for (const auto& rep : reports) rmax = std::max(rmax, rep.r);
      if (rmax <= policy.tol) {
        result.reached_tolerance = true;
        break;
      }
    } else if (policy.tol > 0.0) {
      const ErrorEstimate est = error_estimate(reports);
      if (std::sqrt(est.residual_sq_total) < policy.tol) {
        result.reached_tolerance = true;
        break;
      }
    }
    if (added_this_iteration == 0) {
      result.stalled = true;
      break;
    }
  }
  return result;
}

}  // namespace msfem
