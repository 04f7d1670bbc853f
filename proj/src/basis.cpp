#include "msfem/basis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace msfem {

Eigen::VectorXd PartitionOfUnity::assemble_sum(
    const GridHierarchy& grids, const std::vector<CoarseNeighborhood>& nbs) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(grids.fine_node_count());
  for (size_t i = 0; i < values.size(); ++i) {
    const auto& nb = nbs[i];
    for (size_t k = 0; k < nb.patch_nodes.size(); ++k) sum[nb.patch_nodes[k]] += values[i][k];
  }
  return sum;
}

PartitionOfUnity compute_pou(const GridHierarchy& g, const PermeabilityField& kappa,
                             const std::vector<CoarseNeighborhood>& nbs) {
  const SparseMat stiffness = assemble_stiffness(g, kappa);
  PartitionOfUnity pou;
  pou.values.resize(nbs.size());
  for (size_t i = 0; i < nbs.size(); ++i) {
    pou.values[i] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nbs[i].patch_nodes.size()));
  }

  const int n = g.refine;
  for (int b = 0; b < g.coarse_ny; ++b) {
    for (int a = 0; a < g.coarse_nx; ++a) {
      // Fine-node lattice bounds of coarse element (a, b).
      const int i0 = a * n, i1 = (a + 1) * n, j0 = b * n, j1 = (b + 1) * n;
      std::vector<int> interior, boundary;
      for (int j = j0; j <= j1; ++j) {
        for (int i = i0; i <= i1; ++i) {
          const int id = g.fine_node_id(i, j);
          if (i == i0 || i == i1 || j == j0 || j == j1) {
            boundary.push_back(id);
          } else {
            interior.push_back(id);
          }
        }
      }
      const PatchOperator op(stiffness, interior, boundary);

      // The four corner coarse nodes in local order (0,0),(1,0),(0,1),(1,1).
      const int corners[4] = {g.coarse_node_id(a, b), g.coarse_node_id(a + 1, b),
                              g.coarse_node_id(a, b + 1), g.coarse_node_id(a + 1, b + 1)};
      for (int c = 0; c < 4; ++c) {
        const double cs = (c == 1 || c == 3) ? 1.0 : 0.0;
        const double ct = (c == 2 || c == 3) ? 1.0 : 0.0;
        Eigen::VectorXd bdata(boundary.size());
        for (size_t k = 0; k < boundary.size(); ++k) {
          const auto [bi, bj] = g.fine_node_ij(boundary[k]);
          const double s = static_cast<double>(bi - i0) / n;
          const double t = static_cast<double>(bj - j0) / n;
          // Bilinear formula restricted to the element boundary = the
          // edge-linear hat data of corner c.
          bdata[k] = (cs > 0 ? s : 1.0 - s) * (ct > 0 ? t : 1.0 - t);
        }
        const Eigen::VectorXd ext = op.harmonic_extension(bdata);

        auto& chi = pou.values[corners[c]];
        const auto& nb = nbs[corners[c]];
        for (size_t k = 0; k < boundary.size(); ++k) {
          const auto [bi, bj] = g.fine_node_ij(boundary[k]);
          chi[nb.local_node(bi, bj)] = bdata[k];
        }
        for (size_t k = 0; k < interior.size(); ++k) {
          const auto [ii, ij] = g.fine_node_ij(interior[k]);
          chi[nb.local_node(ii, ij)] = ext[k];
        }
      }
    }
  }
  return pou;
}

Eigen::VectorXd compute_weight(const GridHierarchy& g, const PermeabilityField& kappa,
                               const PartitionOfUnity& pou,
                               const std::vector<CoarseNeighborhood>& nbs) {
  if (pou.values.size() != nbs.size()) {
    throw std::invalid_argument("compute_weight: partition of unity does not match neighborhoods");
  }
  Eigen::VectorXd grad_sq = Eigen::VectorXd::Zero(g.fine_cell_count());
  for (size_t i = 0; i < nbs.size(); ++i) {
    const auto& nb = nbs[i];
    const auto& chi = pou.values[i];
    for (int cell : nb.patch_cells) {
      const auto [ci, cj] = g.fine_cell_ij(cell);
      const Eigen::Vector4d v(chi[nb.local_node(ci, cj)], chi[nb.local_node(ci + 1, cj)],
                              chi[nb.local_node(ci, cj + 1)], chi[nb.local_node(ci + 1, cj + 1)]);
      grad_sq[cell] += cell_midpoint_gradient(g.hx, g.hy, v).squaredNorm();
    }
  }
  const double h_coarse = std::max(g.Hx, g.Hy);
  Eigen::VectorXd ktilde(g.fine_cell_count());
  for (int c = 0; c < g.fine_cell_count(); ++c) {
    if (!(grad_sq[c] > 0.0)) {
      throw std::runtime_error("compute_weight: degenerate partition of unity on cell " +
                               std::to_string(c));
    }
    ktilde[c] = kappa.values[c] * h_coarse * h_coarse * grad_sq[c];
  }
  return ktilde;
}

namespace {

SparseMat assemble_patch(const GridHierarchy& g, const CoarseNeighborhood& nb,
                         const Eigen::Matrix4d& local,
                         const std::function<double(int)>& cell_weight) {
  const int n_local = static_cast<int>(nb.patch_nodes.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nb.patch_cells.size() * 16);
  for (int cell : nb.patch_cells) {
    const auto [ci, cj] = g.fine_cell_ij(cell);
    const int ln[4] = {nb.local_node(ci, cj), nb.local_node(ci + 1, cj),
                       nb.local_node(ci, cj + 1), nb.local_node(ci + 1, cj + 1)};
    const double w = cell_weight(cell);
    for (int a = 0; a < 4; ++a) {
      for (int b2 = 0; b2 < 4; ++b2) trip.emplace_back(ln[a], ln[b2], w * local(a, b2));
    }
  }
  SparseMat m(n_local, n_local);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace

SparseMat assemble_patch_stiffness(const GridHierarchy& g, const CoarseNeighborhood& nb,
                                   const PermeabilityField& kappa) {
  return assemble_patch(g, nb, cell_stiffness(g.hx, g.hy),
                        [&kappa](int c) { return kappa.values[c]; });
}

SparseMat assemble_patch_weighted_mass(const GridHierarchy& g, const CoarseNeighborhood& nb,
                                       const Eigen::VectorXd& cell_weight) {
  return assemble_patch(g, nb, cell_mass(g.hx, g.hy),
                        [&cell_weight](int c) { return cell_weight[c]; });
}

SnapshotSpace compute_snapshots(const CoarseNeighborhood& nb, const PatchOperator& op) {
  const int n_local = static_cast<int>(nb.patch_nodes.size());
  const int n_snap = static_cast<int>(nb.boundary_nodes.size());
  SnapshotSpace snap;
  snap.boundary_nodes = nb.boundary_nodes;
  snap.columns = Eigen::MatrixXd::Zero(n_local, n_snap);

  const Eigen::MatrixXd interior = op.harmonic_extensions_identity();

  auto local_of_global = [&nb](int gid) {
    // patch_nodes is ascending (row-major scan of the patch rectangle)
    const auto it = std::lower_bound(nb.patch_nodes.begin(), nb.patch_nodes.end(), gid);
    return static_cast<int>(it - nb.patch_nodes.begin());
  };

  for (int j = 0; j < n_snap; ++j) {
    snap.columns(local_of_global(nb.boundary_nodes[j]), j) = 1.0;
    for (size_t k = 0; k < op.interior().size(); ++k) {
      snap.columns(local_of_global(op.interior()[k]), j) = interior(static_cast<Eigen::Index>(k), j);
    }
  }
  return snap;
}

namespace {

void normalize_eigenvector_signs(Eigen::MatrixXd& vecs) {
  for (int c = 0; c < vecs.cols(); ++c) {
    int arg = 0;
    vecs.col(c).cwiseAbs().maxCoeff(&arg);
    if (vecs(arg, c) < 0.0) vecs.col(c) = -vecs.col(c);
  }
}

}  // namespace

LocalSpectrum solve_spectral(const SnapshotSpace& snapshots, const SparseMat& a_patch,
                             const SparseMat& s_patch) {
  const Eigen::MatrixXd& psi = snapshots.columns;
  const Eigen::MatrixXd a_snap = psi.transpose() * (a_patch * psi);
  Eigen::MatrixXd s_snap = psi.transpose() * (s_patch * psi);

  LocalSpectrum spec;
  Eigen::LLT<Eigen::MatrixXd> llt(s_snap);
  if (llt.info() != Eigen::Success) {
    spec.shift = 1e-14 * s_snap.trace();
    s_snap.diagonal().array() += spec.shift;
    llt.compute(s_snap);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("solve_spectral: weighted snapshot mass matrix is not SPD");
    }
  }

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
      a_snap, s_snap, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success) {
    throw std::runtime_error("solve_spectral: generalized eigensolve failed");
  }
  spec.eigenvalues = ges.eigenvalues();
  spec.coords = ges.eigenvectors();
  normalize_eigenvector_signs(spec.coords);
  return spec;
}

LocalBasisSet::LocalBasisSet(const GridHierarchy& grids, const SparseMat& stiffness,
                             const PermeabilityField& kappa, const Eigen::VectorXd& ktilde,
                             CoarseNeighborhood nb, Eigen::VectorXd chi_center, int eager_modes,
                             const LocalSpectrum* precomputed)
    : nb_(std::move(nb)),
      op_(stiffness, nb_.interior_nodes, nb_.boundary_nodes),
      chi_(std::move(chi_center)) {
  const int n_local = static_cast<int>(nb_.patch_nodes.size());
  if (chi_.size() != n_local) {
    throw std::invalid_argument("LocalBasisSet: chi does not match the patch");
  }

  interior_local_.reserve(nb_.interior_nodes.size());
  boundary_local_.reserve(nb_.boundary_nodes.size());
  on_domain_boundary_.assign(n_local, 0);
  for (int k = 0; k < n_local; ++k) {
    if (grids.fine_node_on_domain_boundary(nb_.patch_nodes[k])) on_domain_boundary_[k] = 1;
  }
  for (int gid : nb_.interior_nodes) {
    const auto [i, j] = grids.fine_node_ij(gid);
    interior_local_.push_back(nb_.local_node(i, j));
  }
  for (int gid : nb_.boundary_nodes) {
    const auto [i, j] = grids.fine_node_ij(gid);
    boundary_local_.push_back(nb_.local_node(i, j));
  }

  Eigen::MatrixXd psi;
  if (precomputed) {
    spectrum_ = *precomputed;
    if (eager_modes > 0) psi = assemble_snapshot_columns();
  } else {
    psi = assemble_snapshot_columns();
    SnapshotSpace snap;
    snap.boundary_nodes = nb_.boundary_nodes;
    snap.columns = psi;
    spectrum_ = solve_spectral(snap, assemble_patch_stiffness(grids, nb_, kappa),
                               assemble_patch_weighted_mass(grids, nb_, ktilde));
  }

  eager_modes = std::min(eager_modes, snapshot_count());
  if (eager_modes > 0) {
    eager_offline_ = psi * spectrum_.coords.leftCols(eager_modes);
    for (int c = 0; c < eager_offline_.cols(); ++c) {
      eager_offline_.col(c).array() *= chi_.array();
      for (int k = 0; k < n_local; ++k) {
        if (on_domain_boundary_[k]) eager_offline_(k, c) = 0.0;
      }
    }
  }
}

Eigen::MatrixXd LocalBasisSet::assemble_snapshot_columns() const {
  const int n_local = static_cast<int>(nb_.patch_nodes.size());
  const int n_snap = static_cast<int>(nb_.boundary_nodes.size());
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n_local, n_snap);
  const Eigen::MatrixXd interior = op_.harmonic_extensions_identity();
  for (int j = 0; j < n_snap; ++j) {
    psi(boundary_local_[j], j) = 1.0;
    for (size_t k = 0; k < interior_local_.size(); ++k) {
      psi(interior_local_[k], j) = interior(static_cast<Eigen::Index>(k), j);
    }
  }
  return psi;
}

Eigen::MatrixXd LocalBasisSet::modes(int k0, int k1) const {
  if (k0 < 0 || k1 < k0 || k1 > snapshot_count()) {
    throw std::invalid_argument("LocalBasisSet::modes: range outside the snapshot dimension");
  }
  if (k1 == k0) return Eigen::MatrixXd(nb_.patch_nodes.size(), 0);
  const Eigen::MatrixXd psi = assemble_snapshot_columns();
  return psi * spectrum_.coords.middleCols(k0, k1 - k0);
}

Eigen::MatrixXd LocalBasisSet::offline_vectors(int k0, int k1) const {
  if (k1 <= static_cast<int>(eager_offline_.cols()) && k0 >= 0 && k1 >= k0) {
    return eager_offline_.middleCols(k0, k1 - k0);
  }
  Eigen::MatrixXd out = modes(k0, k1);
  for (int c = 0; c < out.cols(); ++c) {
    out.col(c).array() *= chi_.array();
    for (Eigen::Index k = 0; k < out.rows(); ++k) {
      if (on_domain_boundary_[k]) out(k, c) = 0.0;
    }
  }
  return out;
}

FineFunction LocalBasisSet::to_global(const Eigen::VectorXd& patch_local,
                                      int fine_node_count) const {
  FineFunction out = FineFunction::Zero(fine_node_count);
  for (size_t k = 0; k < nb_.patch_nodes.size(); ++k) {
    out[nb_.patch_nodes[k]] = patch_local[static_cast<Eigen::Index>(k)];
  }
  return out;
}

namespace {

constexpr char kCacheMagic[8] = {'M', 'S', 'S', 'P', 'E', 'C', 'v', '1'};

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_raw(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<bool>(in);
}

}  // namespace

bool load_spectrum_cache(const std::string& path, const GridHierarchy& grids,
                         std::uint64_t kappa_hash, std::vector<LocalSpectrum>& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCacheMagic, 8) != 0) return false;
  std::int32_t nx, ny, refine;
  std::uint64_t hash;
  std::uint64_t count;
  if (!read_raw(in, nx) || !read_raw(in, ny) || !read_raw(in, refine) || !read_raw(in, hash) ||
      !read_raw(in, count)) {
    return false;
  }
  if (nx != grids.coarse_nx || ny != grids.coarse_ny || refine != grids.refine ||
      hash != kappa_hash) {
    return false;
  }
  std::vector<LocalSpectrum> spectra(count);
  for (auto& s : spectra) {
    std::uint64_t n;
    if (!read_raw(in, n) || !read_raw(in, s.shift)) return false;
    s.eigenvalues.resize(static_cast<Eigen::Index>(n));
    s.coords.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    in.read(reinterpret_cast<char*>(s.eigenvalues.data()), static_cast<std::streamsize>(n * 8));
    in.read(reinterpret_cast<char*>(s.coords.data()), static_cast<std::streamsize>(n * n * 8));
    if (!in) return false;
  }
  out = std::move(spectra);
  return true;
}

void save_spectrum_cache(const std::string& path, const GridHierarchy& grids,
                         std::uint64_t kappa_hash, const std::vector<LocalSpectrum>& spectra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_spectrum_cache: cannot open " + path);
  out.write(kCacheMagic, 8);
  write_raw(out, static_cast<std::int32_t>(grids.coarse_nx));
  write_raw(out, static_cast<std::int32_t>(grids.coarse_ny));
  write_raw(out, static_cast<std::int32_t>(grids.refine));
  write_raw(out, kappa_hash);
  write_raw(out, static_cast<std::uint64_t>(spectra.size()));
  for (const auto& s : spectra) {
    write_raw(out, static_cast<std::uint64_t>(s.eigenvalues.size()));
    write_raw(out, s.shift);
    out.write(reinterpret_cast<const char*>(s.eigenvalues.data()),
              static_cast<std::streamsize>(s.eigenvalues.size() * 8));
    out.write(reinterpret_cast<const char*>(s.coords.data()),
              static_cast<std::streamsize>(s.coords.size() * 8));
  }
  if (!out) throw std::runtime_error("save_spectrum_cache: write failed for " + path);
}

}  // namespace msfem
