#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fieldev {

// Areal grid. Cells are ordered row-major: index = j * nx + i, i along x.
struct GridGeometry {
  int nx = 60;
  int ny = 60;
  double dx = 50.0;         // m
  double dy = 50.0;         // m
  double thickness = 10.0;  // m

  int cell_count() const noexcept { return nx * ny; }
  int index(int i, int j) const noexcept { return j * nx + i; }
  bool contains(int i, int j) const noexcept { return i >= 0 && i < nx && j >= 0 && j < ny; }

  // Throws InvalidArgument on nx,ny < 2 or non-positive lengths.
  void validate() const;
};

struct CellIndex {
  int i = 0;
  int j = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

// Static reservoir description. Immutable once built; share by const reference.
class GeoModel {
 public:
  // Validates every invariant; throws InvalidArgument naming the first bad cell.
  GeoModel(GridGeometry geometry, std::vector<double> permeability_md,
           std::vector<double> porosity);

  const GridGeometry& geometry() const noexcept { return geometry_; }
  const std::vector<double>& permeability() const noexcept { return permeability_; }
  const std::vector<double>& porosity() const noexcept { return porosity_; }

  double permeability(int cell) const { return permeability_[cell]; }
  double porosity(int cell) const { return porosity_[cell]; }
  double pore_volume(int cell) const {
    return geometry_.dx * geometry_.dy * geometry_.thickness * porosity_[cell];
  }

 private:
  GridGeometry geometry_;
  std::vector<double> permeability_;
  std::vector<double> porosity_;
};

struct LognormalParams {
  double mean_log_k = 4.6;         // ln(mD); placeholder, not a reproduction
  double sigma_log_k = 1.0;
  int correlation_length = 3;      // moving-average radius in cells
  double porosity = 0.2;
  std::uint64_t seed = 1;
};

// ln k is Gaussian white noise smoothed by a variance-preserving box kernel.
// Deterministic for fixed (geometry, params).
GeoModel generate_lognormal(const GridGeometry& geometry, const LognormalParams& params);

// Plain-text grid file:
//   nx ny dx dy thickness
//   PERM v0 v1 ...   (nx*ny values, mD, row-major)
//   PORO v0 v1 ...   (nx*ny fractions)
GeoModel load_geomodel(const std::filesystem::path& path);
void save_geomodel(const GeoModel& model, const std::filesystem::path& path);

// (log10 k - min) / (max - min) per cell; all zeros for a constant field.
std::vector<double> normalize_permeability(const GeoModel& model);

// mD -> m^2
inline constexpr double kMilliDarcy = 9.869233e-16;

}  // namespace fieldev
