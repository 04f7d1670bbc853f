#pragma once

/** @file harness.hpp
    @brief Experiment engine: synthetic permeability generation, run
           configuration with flat key-value files, policy execution and
           CSV / plot-script emission.
*/

#include <cstdint>
#include <string>
#include <vector>

#include "msfem/enrich.hpp"

namespace msfem {

/// Geometry primitive for synthetic fields; coordinates in domain units.
struct GeomShape {
  enum class Kind { rect, disk } kind = Kind::rect;
  double a = 0, b = 0, c = 0, d = 0;  ///< rect: x0 y0 x1 y1, disk: cx cy r (d unused)
};

/// Recipe for a synthetic high-contrast field: a constant background and a
/// list of inclusions/channels whose cells get multiplied by the contrast.
struct FieldSpec {
  double background = 1.0;
  double contrast = 1.0;
  std::vector<GeomShape> shapes;
  int random_disks = 0;  ///< extra seeded disks
  double random_disk_rmin = 0.02;
  double random_disk_rmax = 0.05;
};

/// Rasterizes a field spec on an nx-by-ny cell grid: a cell is covered when
/// its center lies inside any shape, covered cells take background*contrast
/// (overlaps do not stack). Deterministic in the seed. Throws
/// std::invalid_argument for geometry outside the domain or contrast < 1.
PermeabilityField generate_field(const FieldSpec& spec, int nx, int ny, const Rect& domain,
                                 std::uint64_t seed);

/// Full experiment description; serializes to a flat key-value file.
struct RunConfig {
  int coarse_nx = 16, coarse_ny = 16;
  int fine_per_coarse = 16;
  std::string kappa_file;  ///< when set, overrides the generator spec
  FieldSpec field;
  std::uint64_t seed = 0;
  std::string source = "constant:1";
  int initial_basis = 3;
  DofConvention dof_convention = DofConvention::all_nodes;
  EnrichmentPolicy policy;
  bool record_subiterations = false;
  bool timings = false;  ///< write real wall times (makes CSVs non-reproducible)
  std::string out_csv = "run.csv";
  std::string out_plot;  ///< empty = derive from out_csv
  std::string cache_file;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
/// Round-trip stable serialization (parse(config_to_text(c)) == c).
std::string config_to_text(const RunConfig& config);
/// Apply one "key=value" override; throws std::invalid_argument on unknown
/// keys or malformed values.
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

/// Builds the source term from its config spelling: "constant:<v>",
/// "analytic:sine", "analytic:two_blob[:<scale>]" or "file:<path>" with
/// per-cell samples.
ScalarField make_source(const std::string& spec, const GridHierarchy& grids);

/// Resolve the permeability input (file beats generator spec).
PermeabilityField resolve_field(const RunConfig& config);

struct ExperimentResult {
  std::vector<IterationRecord> records;
  std::vector<ColorSweepData> sweeps;
  std::vector<RejectedBasis> rejected;
  bool reached_tolerance = false;
  double fine_energy_norm = 0.0;
  double fine_l2_norm = 0.0;
};

/// Full pipeline: field, fine reference solve, offline stage, policy loop.
/// Records are flushed to the CSV as they appear; a module error mid-run
/// leaves the partial CSV on disk with a trailing "# error:" comment line
/// and rethrows.
ExperimentResult run_experiment(const RunConfig& config);

/// CSV with the fixed header iter,dof,e_a,e_2,residual_total,lambda_min,wall_ms
/// at 17 significant digits. When `timings` is off the wall_ms column is
/// written as 0 so identical configurations produce identical bytes.
void write_csv(const std::vector<IterationRecord>& records, const std::string& path,
               bool timings);

std::vector<IterationRecord> read_csv(const std::string& path);

/// Gnuplot script plotting relative energy error against DOF (log y), one
/// curve per labeled CSV.
void write_plot_script(const std::vector<std::pair<std::string, std::string>>& csv_labels,
                       const std::string& path);

}  // namespace msfem
