#include "msfem/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

namespace msfem {

namespace {

bool shape_inside_domain(const GeomShape& s, const Rect& d) {
  if (s.kind == GeomShape::Kind::rect) {
    return s.a >= d.x0 && s.c <= d.x1 && s.b >= d.y0 && s.d <= d.y1 && s.a < s.c && s.b < s.d;
  }
  return s.c > 0.0 && s.a - s.c >= d.x0 && s.a + s.c <= d.x1 && s.b - s.c >= d.y0 &&
         s.b + s.c <= d.y1;
}

bool covers(const GeomShape& s, double x, double y) {
  if (s.kind == GeomShape::Kind::rect) return x >= s.a && x <= s.c && y >= s.b && y <= s.d;
  const double dx = x - s.a, dy = y - s.b;
  return dx * dx + dy * dy <= s.c * s.c;
}

// Platform-independent uniform double in [0, 1).
double next_uniform(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

PermeabilityField generate_field(const FieldSpec& spec, int nx, int ny, const Rect& domain,
                                 std::uint64_t seed) {
  if (!(spec.contrast >= 1.0)) {
    throw std::invalid_argument("generate_field: contrast must be >= 1");
  }
  if (!(spec.background > 0.0)) {
    throw std::invalid_argument("generate_field: background must be positive");
  }
  for (const auto& s : spec.shapes) {
    if (!shape_inside_domain(s, domain)) {
      throw std::invalid_argument("generate_field: geometry outside the domain");
    }
  }

  std::vector<GeomShape> shapes = spec.shapes;
  if (spec.random_disks > 0) {
    if (!(spec.random_disk_rmin > 0.0) || spec.random_disk_rmax < spec.random_disk_rmin) {
      throw std::invalid_argument("generate_field: bad random disk radius range");
    }
    std::mt19937_64 rng(seed);
    for (int k = 0; k < spec.random_disks; ++k) {
      GeomShape s;
      s.kind = GeomShape::Kind::disk;
      s.c = spec.random_disk_rmin +
            next_uniform(rng) * (spec.random_disk_rmax - spec.random_disk_rmin);
      s.a = domain.x0 + s.c + next_uniform(rng) * (domain.width() - 2 * s.c);
      s.b = domain.y0 + s.c + next_uniform(rng) * (domain.height() - 2 * s.c);
      shapes.push_back(s);
    }
  }

  PermeabilityField f;
  f.nx = nx;
  f.ny = ny;
  f.values.assign(static_cast<size_t>(nx) * ny, spec.background);
  const double hx = domain.width() / nx, hy = domain.height() / ny;
  const double high = spec.background * spec.contrast;
  for (int cj = 0; cj < ny; ++cj) {
    for (int ci = 0; ci < nx; ++ci) {
      const double x = domain.x0 + (ci + 0.5) * hx;
      const double y = domain.y0 + (cj + 0.5) * hy;
      for (const auto& s : shapes) {
        if (covers(s, x, y)) {
          f.at(ci, cj) = high;
          break;
        }
      }
    }
  }
  f.validate();
  return f;
}

namespace {

PolicyMode mode_from_string(const std::string& s) {
  if (s == "offline_adaptive") return PolicyMode::offline_adaptive;
  if (s == "online_full") return PolicyMode::online_full;
  if (s == "online_threshold") return PolicyMode::online_threshold;
  if (s == "online_cumulative") return PolicyMode::online_cumulative;
  if (s == "online_reduced") return PolicyMode::online_reduced;
  throw std::invalid_argument("unknown policy mode '" + s + "'");
}

std::string mode_to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::offline_adaptive: return "offline_adaptive";
    case PolicyMode::online_full: return "online_full";
    case PolicyMode::online_threshold: return "online_threshold";
    case PolicyMode::online_cumulative: return "online_cumulative";
    case PolicyMode::online_reduced: return "online_reduced";
  }
  return "online_full";
}

bool bool_from_string(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected boolean, got '" + v + "'");
}

GeomShape shape_from_string(const std::string& v) {
  std::istringstream ss(v);
  std::string kind;
  ss >> kind;
  GeomShape s;
  if (kind == "rect") {
    s.kind = GeomShape::Kind::rect;
    ss >> s.a >> s.b >> s.c >> s.d;
  } else if (kind == "disk") {
    s.kind = GeomShape::Kind::disk;
    ss >> s.a >> s.b >> s.c;
  } else {
    throw std::invalid_argument("unknown geometry kind '" + kind + "'");
  }
  if (!ss) throw std::invalid_argument("malformed geometry '" + v + "'");
  return s;
}

std::string shape_to_string(const GeomShape& s) {
  std::string out = s.kind == GeomShape::Kind::rect ? "rect" : "disk";
  out += " " + format17(s.a) + " " + format17(s.b) + " " + format17(s.c);
  if (s.kind == GeomShape::Kind::rect) out += " " + format17(s.d);
  return out;
}

}  // namespace

void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  try {
    if (key == "coarse_nx") c.coarse_nx = std::stoi(value);
    else if (key == "coarse_ny") c.coarse_ny = std::stoi(value);
    else if (key == "fine_per_coarse") c.fine_per_coarse = std::stoi(value);
    else if (key == "kappa_file") c.kappa_file = value;
    else if (key == "kappa_background") c.field.background = std::stod(value);
    else if (key == "kappa_contrast") c.field.contrast = std::stod(value);
    else if (key == "kappa_random_disks") c.field.random_disks = std::stoi(value);
    else if (key == "kappa_random_disk_rmin") c.field.random_disk_rmin = std::stod(value);
    else if (key == "kappa_random_disk_rmax") c.field.random_disk_rmax = std::stod(value);
    else if (key.rfind("kappa_geom_", 0) == 0) {
      const size_t idx = std::stoul(key.substr(11));
      if (c.field.shapes.size() <= idx) c.field.shapes.resize(idx + 1);
      c.field.shapes[idx] = shape_from_string(value);
    }
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "source") c.source = value;
    else if (key == "initial_basis") c.initial_basis = std::stoi(value);
    else if (key == "dof_convention") {
      if (value == "all") c.dof_convention = DofConvention::all_nodes;
      else if (value == "interior") c.dof_convention = DofConvention::interior_nodes;
      else throw std::invalid_argument("dof_convention must be 'all' or 'interior'");
    }
    else if (key == "mode") c.policy.mode = mode_from_string(value);
    else if (key == "theta") c.policy.theta = std::stod(value);
    else if (key == "tol") c.policy.tol = std::stod(value);
    else if (key == "max_iters") c.policy.max_iterations = std::stoi(value);
    else if (key == "basis_per_marked") c.policy.basis_per_marked = std::stoi(value);
    else if (key == "n0") c.policy.n0 = std::stoi(value);
    else if (key == "advance_window") c.policy.advance_window = bool_from_string(value);
    else if (key == "use_neighbors") c.policy.use_neighbors = bool_from_string(value);
    else if (key == "record_subiterations") c.record_subiterations = bool_from_string(value);
    else if (key == "timings") c.timings = bool_from_string(value);
    else if (key == "out_csv") c.out_csv = value;
    else if (key == "out_plot") c.out_plot = value;
    else if (key == "cache_file") c.cache_file = value;
    else throw std::invalid_argument("unknown config key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed value for config key '" + key + "': " + value);
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) {
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key = value");
      }
      continue;
    }
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t\r\n");
      if (b == std::string::npos) return std::string();
      const size_t e = s.find_last_not_of(" \t\r\n");
      return s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    apply_config_entry(c, key, value);
  }
  return c;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const RunConfig& c) {
  std::ostringstream out;
  out << "coarse_nx = " << c.coarse_nx << "\n";
  out << "coarse_ny = " << c.coarse_ny << "\n";
  out << "fine_per_coarse = " << c.fine_per_coarse << "\n";
  if (!c.kappa_file.empty()) out << "kappa_file = " << c.kappa_file << "\n";
  out << "kappa_background = " << format17(c.field.background) << "\n";
  out << "kappa_contrast = " << format17(c.field.contrast) << "\n";
  for (size_t k = 0; k < c.field.shapes.size(); ++k) {
    out << "kappa_geom_" << k << " = " << shape_to_string(c.field.shapes[k]) << "\n";
  }
  if (c.field.random_disks > 0) {
    out << "kappa_random_disks = " << c.field.random_disks << "\n";
    out << "kappa_random_disk_rmin = " << format17(c.field.random_disk_rmin) << "\n";
    out << "kappa_random_disk_rmax = " << format17(c.field.random_disk_rmax) << "\n";
  }
  out << "seed = " << c.seed << "\n";
  out << "source = " << c.source << "\n";
  out << "initial_basis = " << c.initial_basis << "\n";
  out << "dof_convention = "
      << (c.dof_convention == DofConvention::all_nodes ? "all" : "interior") << "\n";
  out << "mode = " << mode_to_string(c.policy.mode) << "\n";
  out << "theta = " << format17(c.policy.theta) << "\n";
  out << "tol = " << format17(c.policy.tol) << "\n";
  out << "max_iters = " << c.policy.max_iterations << "\n";
  out << "basis_per_marked = " << c.policy.basis_per_marked << "\n";
  out << "n0 = " << c.policy.n0 << "\n";
  out << "advance_window = " << (c.policy.advance_window ? "true" : "false") << "\n";
  out << "use_neighbors = " << (c.policy.use_neighbors ? "true" : "false") << "\n";
  out << "record_subiterations = " << (c.record_subiterations ? "true" : "false") << "\n";
  out << "timings = " << (c.timings ? "true" : "false") << "\n";
  out << "out_csv = " << c.out_csv << "\n";
  if (!c.out_plot.empty()) out << "out_plot = " << c.out_plot << "\n";
  if (!c.cache_file.empty()) out << "cache_file = " << c.cache_file << "\n";
  return out.str();
}

ScalarField make_source(const std::string& spec, const GridHierarchy& grids) {
  const size_t colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "constant") {
    const double v = arg.empty() ? 1.0 : std::stod(arg);
    return [v](double, double) { return v; };
  }
  if (kind == "analytic") {
    const size_t colon2 = arg.find(':');
    const std::string name = arg.substr(0, colon2);
    const double scale = colon2 == std::string::npos ? 1.0 : std::stod(arg.substr(colon2 + 1));
    if (name == "sine") {
      return [scale](double x, double y) {
        return scale * 2.0 * M_PI * M_PI * std::sin(M_PI * x) * std::sin(M_PI * y);
      };
    }
    if (name == "two_blob") {
      // Two square source patches of opposite sign near opposite corners.
      return [scale](double x, double y) {
        if (x >= 0.1 && x <= 0.2 && y >= 0.75 && y <= 0.85) return scale;
        if (x >= 0.8 && x <= 0.9 && y >= 0.15 && y <= 0.25) return -scale;
        return 0.0;
      };
    }
    throw std::invalid_argument("unknown analytic source '" + name + "'");
  }
  if (kind == "file") {
    std::ifstream in(arg);
    if (!in) throw std::runtime_error("cannot open source file " + arg);
    std::string magic, version;
    int nx, ny;
    in >> magic >> version >> nx >> ny;
    if (!in || magic != "SOURCE" || version != "v1") {
      throw std::runtime_error("bad source file header in " + arg);
    }
    if (nx != grids.fine_nx || ny != grids.fine_ny) {
      throw std::runtime_error("source file does not match the fine grid");
    }
    auto cells = std::make_shared<std::vector<double>>(static_cast<size_t>(nx) * ny);
    for (auto& v : *cells) {
      if (!(in >> v)) throw std::runtime_error("truncated source file " + arg);
    }
    const GridHierarchy g = grids;
    return [cells, g](double x, double y) {
      int ci = static_cast<int>((x - g.domain.x0) / g.hx);
      int cj = static_cast<int>((y - g.domain.y0) / g.hy);
      ci = std::min(std::max(ci, 0), g.fine_nx - 1);
      cj = std::min(std::max(cj, 0), g.fine_ny - 1);
      return (*cells)[static_cast<size_t>(cj) * g.fine_nx + ci];
    };
  }
  throw std::invalid_argument("unknown source spec '" + spec + "'");
}

PermeabilityField resolve_field(const RunConfig& c) {
  if (!c.kappa_file.empty()) return load_kappa(c.kappa_file);
  return generate_field(c.field, c.coarse_nx * c.fine_per_coarse, c.coarse_ny * c.fine_per_coarse,
                        Rect{}, c.seed);
}

namespace {

void write_csv_row(std::ofstream& out, const IterationRecord& rec, bool timings) {
  out << rec.step << ',' << rec.dof << ',' << format17(rec.e_a) << ',' << format17(rec.e_2) << ','
      << format17(rec.residual_sq_total) << ',' << format17(rec.lambda_min) << ','
      << format17(timings ? rec.wall_ms : 0.0) << "\n";
}

constexpr const char* kCsvHeader = "iter,dof,e_a,e_2,residual_total,lambda_min,wall_ms";

}  // namespace

void write_csv(const std::vector<IterationRecord>& records, const std::string& path,
               bool timings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << kCsvHeader << "\n";
  for (const auto& rec : records) write_csv_row(out, rec, timings);
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

std::vector<IterationRecord> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("read_csv: unexpected header in " + path);
  }
  std::vector<IterationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    IterationRecord rec;
    char comma;
    std::istringstream ss(line);
    ss >> rec.step >> comma >> rec.dof >> comma >> rec.e_a >> comma >> rec.e_2 >> comma >>
        rec.residual_sq_total >> comma >> rec.lambda_min >> comma >> rec.wall_ms;
    if (!ss) throw std::runtime_error("read_csv: malformed row in " + path);
    records.push_back(rec);
  }
  return records;
}

void write_plot_script(const std::vector<std::pair<std::string, std::string>>& csv_labels,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_plot_script: cannot open " + path);
  out << "set datafile separator ','\n";
  out << "set logscale y\n";
  out << "set xlabel 'DOF'\n";
  out << "set ylabel 'relative energy error'\n";
  out << "set key top right\n";
  out << "set grid\n";
  out << "plot ";
  for (size_t k = 0; k < csv_labels.size(); ++k) {
    if (k) out << ", \\\n     ";
    out << "'" << csv_labels[k].first << "' using 2:3 skip 1 with linespoints title '"
        << csv_labels[k].second << "'";
  }
  out << "\n";
  if (!out) throw std::runtime_error("write_plot_script: write failed for " + path);
}

ExperimentResult run_experiment(const RunConfig& config) {
  PermeabilityField kappa = resolve_field(config);
  const GridHierarchy grids = build_grids(Rect{}, config.coarse_nx, config.coarse_ny,
                                          config.fine_per_coarse);
  if (kappa.nx != grids.fine_nx || kappa.ny != grids.fine_ny) {
    throw std::invalid_argument("run_experiment: field does not match the configured grid");
  }
  FineSystem system = build_fine_system(grids, kappa, make_source(config.source, grids));

  ExperimentResult result;
  std::ofstream csv(config.out_csv, std::ios::binary);
  if (!csv) throw std::runtime_error("run_experiment: cannot open " + config.out_csv);
  csv << kCsvHeader << "\n";

  try {
    Workspace ws = build_workspace(std::move(system), std::move(kappa), config.dof_convention,
                                   config.initial_basis, config.cache_file);
    result.fine_energy_norm = energy_norm(ws.system, ws.u_fine);
    result.fine_l2_norm = l2_norm(ws.system, ws.u_fine);

    MultiscaleSpace space = build_initial_space(ws, config.initial_basis, &result.rejected);
    PolicyRunResult run = run_policy(ws, space, config.policy, config.record_subiterations,
                                     [&](const IterationRecord& rec) {
                                       write_csv_row(csv, rec, config.timings);
                                       csv.flush();
                                     });
    result.records = std::move(run.records);
    result.sweeps = std::move(run.sweeps);
    result.reached_tolerance = run.reached_tolerance;
    result.rejected.insert(result.rejected.end(), run.rejected.begin(), run.rejected.end());
  } catch (const std::exception& e) {
    csv << "# error: " << e.what() << "\n";
    csv.flush();
    throw;
  }

  if (!config.out_plot.empty() || !config.out_csv.empty()) {
    std::string plot = config.out_plot;
    if (plot.empty()) {
      plot = config.out_csv;
      const size_t dot = plot.find_last_of('.');
      plot = (dot == std::string::npos ? plot : plot.substr(0, dot)) + ".gp";
    }
    write_plot_script({{config.out_csv, mode_to_string(config.policy.mode)}}, plot);
  }
  return result;
}

}  // namespace msfem
