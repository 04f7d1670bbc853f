#pragma once

/** @file field.hpp
    @brief Per-cell coefficient fields and the KAPPA v1 text format.
*/

#include <cstdint>
#include <string>
#include <vector>

namespace msfem {

/// Scalar conductivity sampled per fine cell, row-major with x fastest.
/// Values must be strictly positive and finite.
struct PermeabilityField {
  int nx = 0, ny = 0;
  std::vector<double> values;

  double at(int ci, int cj) const { return values[static_cast<size_t>(cj) * nx + ci]; }
  double& at(int ci, int cj) { return values[static_cast<size_t>(cj) * nx + ci]; }
  int cell_count() const { return nx * ny; }

  double min_value() const;
  double max_value() const;
  double contrast() const { return max_value() / min_value(); }

  /// Throws std::invalid_argument on non-positive or non-finite entries
  /// or a size mismatch.
  void validate() const;
};

/// Uniform field, the trivial generator.
PermeabilityField constant_field(int nx, int ny, double value);

/// Writes "KAPPA v1 <nx> <ny>" followed by ny lines of nx decimal values.
/// Serialization uses 17 significant digits so a load reproduces the exact
/// doubles; the same field always produces identical bytes.
void save_kappa(const PermeabilityField& field, const std::string& path);

/// Parses the KAPPA v1 format. Throws std::runtime_error on malformed input.
PermeabilityField load_kappa(const std::string& path);

/// Content hash over dimensions and raw cell values (used to key caches).
std::uint64_t field_hash(const PermeabilityField& field);

}  // namespace msfem
