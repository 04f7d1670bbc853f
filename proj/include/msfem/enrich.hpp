#pragma once

/** @file enrich.hpp
    @brief Enrichment policies over the multiscale space: offline adaptive
           bulk marking, full/thresholded/cumulative online sweeps over the
           four-coloring, and reduced-subspace online candidates.
*/

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "msfem/solver.hpp"

namespace msfem {

/// Which coarse nodes carry basis functions and get enriched. The paper's
/// experiments use both conventions, so it is configuration.
enum class DofConvention { all_nodes, interior_nodes };

/// Immutable per-experiment state shared by every policy: grids, field,
/// fine system and oracle solution, partition of unity, spectral weight,
/// per-neighborhood basis machinery, coloring and the active-node set.
struct Workspace {
  GridHierarchy grids;
  PermeabilityField kappa;
  FineSystem system;
  FineFunction u_fine;
  std::vector<CoarseNeighborhood> neighborhoods;
  PartitionOfUnity pou;
  Eigen::VectorXd ktilde;
  std::vector<LocalBasisSet> local;
  Coloring coloring;
  DofConvention convention = DofConvention::all_nodes;
  std::vector<int> active_nodes;
  std::vector<char> is_active;

  bool active(int node) const { return is_active[node] != 0; }
};

/// Builds the whole offline stage. `eager_modes` controls how many offline
/// vectors are assembled up front per neighborhood (typically the initial
/// basis count). When `spectrum_cache_path` is non-empty, per-neighborhood
/// spectra are loaded from it when the key matches and written back after a
/// recompute.
Workspace build_workspace(FineSystem system, PermeabilityField kappa, DofConvention convention,
                          int eager_modes, const std::string& spectrum_cache_path = "");

enum class PolicyMode {
  offline_adaptive,
  online_full,
  online_threshold,
  online_cumulative,
  online_reduced
};

struct EnrichmentPolicy {
  PolicyMode mode = PolicyMode::online_full;
  double theta = 0.7;          ///< bulk-marking fraction
  double tol = 0.0;            ///< stopping / per-region threshold tolerance
  int max_iterations = 10;     ///< full iterations (four colors each online)
  int basis_per_marked = 1;    ///< offline mode: modes appended per marked region
  int n0 = 40;                 ///< reduced mode: eigenmode window width
  bool advance_window = true;  ///< reduced mode: move the window after each use
  bool use_neighbors = false;  ///< reduced mode: include neighboring regions' modes
};

/// Bulk marking: stable-sorts the indicators descending and returns the
/// original indices of the smallest prefix whose sum reaches theta * total.
/// Accepts theta in (0, 1]; negative indicators are rejected; an empty or
/// all-zero input marks nothing.
std::vector<int> dorfler_mark(const std::vector<double>& indicators, double theta);

/// Offline space with `initial_basis` modes per active neighborhood.
MultiscaleSpace build_initial_space(const Workspace& ws, int initial_basis,
                                    std::vector<RejectedBasis>* rejected = nullptr);

/// Residual reports for every active neighborhood at the given solution,
/// ordered like ws.active_nodes.
std::vector<ResidualReport> collect_reports(const Workspace& ws, const MultiscaleSpace& space,
                                            const FineFunction& u_ms);

/// Smallest next eigenvalue over the active neighborhoods.
double lambda_min_active(const Workspace& ws, const MultiscaleSpace& space);

/// One trajectory point. `step` counts enrichment steps completed when the
/// record was taken (colors count individually when sub-iteration records
/// are on, otherwise whole iterations).
struct IterationRecord {
  int step = 0;
  int iteration = 0;
  int color = -1;  ///< -1 for iteration-level records
  int dof = 0;
  double e_a = 0.0;
  double e_2 = 0.0;
  double residual_sq_total = 0.0;
  double estimator = 0.0;
  double lambda_min = std::numeric_limits<double>::infinity();
  int added = 0;
  int rejected = 0;
  double wall_ms = 0.0;
};

/// Measurements taken around one color sub-iteration, against the fine
/// oracle when available. Drives the energy-decrease verification.
struct ColorSweepData {
  int iteration = 0;
  int color = 0;
  std::vector<int> enriched;       ///< coarse nodes whose candidate was accepted
  double sum_r2_enriched = 0.0;    ///< sum of r_i^2 over the accepted set
  double lambda_min_marked = std::numeric_limits<double>::infinity();
  double err_sq_before = -1.0;     ///< |u - u_ms|_V^2 before the color
  double err_sq_after = -1.0;
  double max_riesz_identity_error = 0.0;  ///< max |R(phi)-|phi|^2| / |phi|^2
  double galerkin_residual_after = 0.0;   ///< normalized orthogonality residual
  int rejected = 0;
};

/// Appends the next `basis_per_marked` offline modes for every marked
/// neighborhood (bounded by the snapshot dimension).
struct OfflineStepResult {
  std::vector<int> marked;  ///< coarse node ids
  int skipped_exhausted = 0;
  MultiscaleSpace::AppendResult append;
};
OfflineStepResult offline_adapt_step(const Workspace& ws, MultiscaleSpace& space,
                                     const std::vector<ResidualReport>& reports, double theta,
                                     int basis_per_marked);

/// Online candidate from a reduced eigenmode window: the Galerkin projection
/// of the Riesz problem onto the span of the windowed offline vectors of the
/// region (and of its lattice neighbors when requested). `window_start`
/// holds the per-node 0-based first mode index.
FineFunction reduced_online_candidate(const Workspace& ws, int node,
                                      const Eigen::VectorXd& residual_full,
                                      const std::vector<int>& window_start, int n0,
                                      bool use_neighbors, bool* empty_window = nullptr);

/// One color sub-iteration of an online policy: compute Riesz representatives
/// for the color's active nodes at the current solution, select per policy,
/// append the (unit-energy) candidates, re-solve. `u_ms` is updated in
/// place; `window_start` is only used (and advanced) in reduced mode.
ColorSweepData online_color_step(const Workspace& ws, MultiscaleSpace& space,
                                 const EnrichmentPolicy& policy, int color, int iteration,
                                 FineFunction& u_ms, std::vector<int>* window_start,
                                 std::vector<RejectedBasis>* rejected = nullptr);

/// Contrast-robustness diagnostics of one marked set (the C_err-free part of
/// the online error-reduction ratio).
struct OnerpReport {
  double lambda_min_marked = std::numeric_limits<double>::infinity();
  double sum_eta2_marked = 0.0;
  double sum_eta2_total = 0.0;
  double ratio = 0.0;  ///< lambda_min_marked * sum_eta2_marked / sum_eta2_total
};
OnerpReport onerp_report(const std::vector<ResidualReport>& reports,
                         const std::vector<int>& marked_indices);

struct PolicyRunResult {
  std::vector<IterationRecord> records;
  std::vector<ColorSweepData> sweeps;
  std::vector<RejectedBasis> rejected;
  bool reached_tolerance = false;
  bool stalled = false;  ///< stopped because no candidate survived
};

using RecordCallback = std::function<void(const IterationRecord&)>;

/// Runs a policy to termination: tolerance reached, max_iterations done, or
/// no dimension growth. Records are emitted per iteration, or per color
/// sub-iteration when `record_subiterations` is set.
PolicyRunResult run_policy(const Workspace& ws, MultiscaleSpace& space,
                           const EnrichmentPolicy& policy, bool record_subiterations = false,
                           const RecordCallback& on_record = nullptr);

}  // namespace msfem
