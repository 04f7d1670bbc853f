// Command-line front end: run experiments, generate synthetic permeability
// fields, and compare runs across initial basis counts.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "msfem/harness.hpp"

namespace {

struct Overrides {
  std::string coarse, fine, kappa, contrast, initial_basis, mode, theta, tol, max_iters, n0,
      dof_convention, out, seed, source, cache;
  bool timings = false;
  bool record_subiterations = false;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--coarse", coarse, "Coarse elements, N or NxM");
    cmd->add_option("--fine", fine, "Fine cells per coarse cell per direction");
    cmd->add_option("--kappa", kappa, "Permeability file (KAPPA v1)");
    cmd->add_option("--contrast", contrast, "Generator contrast multiplier");
    cmd->add_option("--initial-basis", initial_basis, "Offline basis count per neighborhood");
    cmd->add_option("--mode", mode,
                    "offline_adaptive|online_full|online_threshold|online_cumulative|online_reduced");
    cmd->add_option("--theta", theta, "Bulk marking fraction");
    cmd->add_option("--tol", tol, "Stopping / threshold tolerance");
    cmd->add_option("--max-iters", max_iters, "Iteration cap");
    cmd->add_option("--n0", n0, "Reduced-mode window width");
    cmd->add_option("--dof-convention", dof_convention, "all|interior");
    cmd->add_option("--out", out, "Output CSV path");
    cmd->add_option("--seed", seed, "Generator seed");
    cmd->add_option("--source", source, "Source term spec");
    cmd->add_option("--cache", cache, "Spectrum cache file");
    cmd->add_flag("--timings", timings, "Record real wall times (non-reproducible CSV)");
    cmd->add_flag("--record-subiterations", record_subiterations,
                  "One CSV row per color sub-iteration");
  }

  void apply(msfem::RunConfig& cfg) const {
    if (!coarse.empty()) {
      const size_t x = coarse.find('x');
      if (x == std::string::npos) {
        msfem::apply_config_entry(cfg, "coarse_nx", coarse);
        msfem::apply_config_entry(cfg, "coarse_ny", coarse);
      } else {
        msfem::apply_config_entry(cfg, "coarse_nx", coarse.substr(0, x));
        msfem::apply_config_entry(cfg, "coarse_ny", coarse.substr(x + 1));
      }
    }
    if (!fine.empty()) msfem::apply_config_entry(cfg, "fine_per_coarse", fine);
    if (!kappa.empty()) msfem::apply_config_entry(cfg, "kappa_file", kappa);
    if (!contrast.empty()) msfem::apply_config_entry(cfg, "kappa_contrast", contrast);
    if (!initial_basis.empty()) msfem::apply_config_entry(cfg, "initial_basis", initial_basis);
    if (!mode.empty()) msfem::apply_config_entry(cfg, "mode", mode);
    if (!theta.empty()) msfem::apply_config_entry(cfg, "theta", theta);
    if (!tol.empty()) msfem::apply_config_entry(cfg, "tol", tol);
    if (!max_iters.empty()) msfem::apply_config_entry(cfg, "max_iters", max_iters);
    if (!n0.empty()) msfem::apply_config_entry(cfg, "n0", n0);
    if (!dof_convention.empty()) msfem::apply_config_entry(cfg, "dof_convention", dof_convention);
    if (!out.empty()) msfem::apply_config_entry(cfg, "out_csv", out);
    if (!seed.empty()) msfem::apply_config_entry(cfg, "seed", seed);
    if (!source.empty()) msfem::apply_config_entry(cfg, "source", source);
    if (!cache.empty()) msfem::apply_config_entry(cfg, "cache_file", cache);
    if (timings) cfg.timings = true;
    if (record_subiterations) cfg.record_subiterations = true;
  }
};

void print_summary(const msfem::ExperimentResult& result) {
  std::printf("%6s %8s %12s %12s %12s\n", "iter", "dof", "e_a", "e_2", "residual");
  for (const auto& rec : result.records) {
    std::printf("%6d %8d %12.4e %12.4e %12.4e\n", rec.step, rec.dof, rec.e_a, rec.e_2,
                std::sqrt(rec.residual_sq_total));
  }
  if (result.reached_tolerance) std::printf("stopped: tolerance reached\n");
  if (!result.rejected.empty()) {
    std::printf("rejected candidates: %zu\n", result.rejected.size());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale finite element laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  auto* run = app.add_subcommand("run", "Run one experiment and write its CSV");
  run->add_option("--config", config_path, "Flat key=value config file");
  overrides.add_flags(run);

  std::string field_out = "field.kappa";
  std::string field_nx, field_ny;
  Overrides gen_overrides;
  auto* gen = app.add_subcommand("generate-field", "Rasterize the configured synthetic field");
  gen->add_option("--config", config_path, "Flat key=value config file");
  gen->add_option("--out", field_out, "Output KAPPA v1 path")->required();
  gen->add_option("--nx", field_nx, "Cells in x (default: from grid config)");
  gen->add_option("--ny", field_ny, "Cells in y (default: from grid config)");
  gen->add_option("--contrast", gen_overrides.contrast, "Generator contrast multiplier");
  gen->add_option("--seed", gen_overrides.seed, "Generator seed");

  std::string basis_list = "1,2,3";
  std::string out_prefix = "compare";
  auto* cmp = app.add_subcommand("compare",
                                 "Run the config at several initial basis counts, one CSV each");
  cmp->add_option("--config", config_path, "Flat key=value config file");
  cmp->add_option("--initial-basis-list", basis_list, "Comma-separated counts");
  cmp->add_option("--out-prefix", out_prefix, "Output path prefix");
  Overrides cmp_overrides;
  cmp_overrides.add_flags(cmp);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      msfem::RunConfig cfg;
      if (!config_path.empty()) cfg = msfem::parse_config_file(config_path);
      overrides.apply(cfg);
      const auto result = msfem::run_experiment(cfg);
      print_summary(result);
      std::printf("csv: %s\n", cfg.out_csv.c_str());
    } else if (gen->parsed()) {
      msfem::RunConfig cfg;
      if (!config_path.empty()) cfg = msfem::parse_config_file(config_path);
      gen_overrides.apply(cfg);
      int nx = cfg.coarse_nx * cfg.fine_per_coarse;
      int ny = cfg.coarse_ny * cfg.fine_per_coarse;
      if (!field_nx.empty()) nx = std::stoi(field_nx);
      if (!field_ny.empty()) ny = std::stoi(field_ny);
      const auto field = msfem::generate_field(cfg.field, nx, ny, msfem::Rect{}, cfg.seed);
      msfem::save_kappa(field, field_out);
      std::printf("wrote %s (%dx%d cells, contrast %.3g)\n", field_out.c_str(), field.nx,
                  field.ny, field.contrast());
    } else if (cmp->parsed()) {
      msfem::RunConfig base;
      if (!config_path.empty()) base = msfem::parse_config_file(config_path);
      cmp_overrides.apply(base);
      std::vector<std::pair<std::string, std::string>> curves;
      std::string item;
      std::istringstream ss(basis_list);
      double prev_decay = -1.0;
      while (std::getline(ss, item, ',')) {
        msfem::RunConfig cfg = base;
        cfg.initial_basis = std::stoi(item);
        cfg.out_csv = out_prefix + "_basis" + item + ".csv";
        cfg.out_plot = "";
        std::printf("== initial basis %s ==\n", item.c_str());
        const auto result = msfem::run_experiment(cfg);
        print_summary(result);
        curves.emplace_back(cfg.out_csv, item + " initial basis");
        // Per-iteration energy-error decay factor over the run.
        const auto& recs = result.records;
        if (recs.size() >= 2 && recs.back().e_a > 0.0 && recs.front().e_a > 0.0) {
          const double decay = std::pow(recs.front().e_a / recs.back().e_a,
                                        1.0 / static_cast<double>(recs.size() - 1));
          std::printf("mean decay factor per iteration: %.3g\n", decay);
          if (prev_decay > 0.0 && decay < prev_decay / 2.0) {
            std::printf("note: decay degraded sharply vs the previous run; "
                        "the offline space is likely not rich enough (non-ONERP)\n");
          }
          prev_decay = decay;
        }
      }
      msfem::write_plot_script(curves, out_prefix + ".gp");
      std::printf("plot script: %s.gp\n", out_prefix.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
