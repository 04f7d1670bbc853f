#include "msfem/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace msfem {

double PermeabilityField::min_value() const {
  return *std::min_element(values.begin(), values.end());
}

double PermeabilityField::max_value() const {
  return *std::max_element(values.begin(), values.end());
}

void PermeabilityField::validate() const {
  if (nx < 1 || ny < 1) throw std::invalid_argument("field: non-positive dimensions");
  if (values.size() != static_cast<size_t>(nx) * ny) {
    throw std::invalid_argument("field: value count does not match dimensions");
  }
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("field: values must be strictly positive and finite");
    }
  }
}

PermeabilityField constant_field(int nx, int ny, double value) {
  PermeabilityField f;
  f.nx = nx;
  f.ny = ny;
  f.values.assign(static_cast<size_t>(nx) * ny, value);
  f.validate();
  return f;
}

namespace {

void format_double(char* buf, size_t n, double v) { std::snprintf(buf, n, "%.17g", v); }

}  // namespace

void save_kappa(const PermeabilityField& field, const std::string& path) {
  field.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_kappa: cannot open " + path);
  out << "KAPPA v1 " << field.nx << " " << field.ny << "\n";
  char buf[40];
  for (int j = 0; j < field.ny; ++j) {
    for (int i = 0; i < field.nx; ++i) {
      format_double(buf, sizeof(buf), field.at(i, j));
      if (i) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_kappa: write failed for " + path);
}

PermeabilityField load_kappa(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_kappa: cannot open " + path);
  std::string magic, version;
  PermeabilityField f;
  in >> magic >> version >> f.nx >> f.ny;
  if (!in || magic != "KAPPA" || version != "v1") {
    throw std::runtime_error("load_kappa: bad header in " + path);
  }
  if (f.nx < 1 || f.ny < 1) throw std::runtime_error("load_kappa: bad dimensions in " + path);
  f.values.resize(static_cast<size_t>(f.nx) * f.ny);
  for (auto& v : f.values) {
    if (!(in >> v)) throw std::runtime_error("load_kappa: truncated data in " + path);
  }
  f.validate();
  return f;
}

std::uint64_t field_hash(const PermeabilityField& field) {
  // FNV-1a over dimensions and raw value bytes.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t k = 0; k < n; ++k) {
      h ^= p[k];
      h *= 1099511628211ull;
    }
  };
  mix(&field.nx, sizeof(field.nx));
  mix(&field.ny, sizeof(field.ny));
  mix(field.values.data(), field.values.size() * sizeof(double));
  return h;
}

}  // namespace msfem
