#include "fieldev/geomodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>

#include "fieldev/errors.hpp"

namespace fieldev {

void GridGeometry::validate() const {
  if (nx < 2 || ny < 2) {
    throw InvalidArgument("grid needs nx >= 2 and ny >= 2, got " + std::to_string(nx) + "x" +
                          std::to_string(ny));
  }
  if (!(dx > 0.0) || !(dy > 0.0) || !(thickness > 0.0)) {
    throw InvalidArgument("grid dx, dy and thickness must be positive");
  }
}

GeoModel::GeoModel(GridGeometry geometry, std::vector<double> permeability_md,
                   std::vector<double> porosity)
    : geometry_(geometry),
      permeability_(std::move(permeability_md)),
      porosity_(std::move(porosity)) {
  geometry_.validate();
  const auto n = static_cast<std::size_t>(geometry_.cell_count());
  if (permeability_.size() != n) {
    throw InvalidArgument("permeability field has " + std::to_string(permeability_.size()) +
                          " values, expected " + std::to_string(n));
  }
  if (porosity_.size() != n) {
    throw InvalidArgument("porosity field has " + std::to_string(porosity_.size()) +
                          " values, expected " + std::to_string(n));
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (!(permeability_[c] > 0.0) || !std::isfinite(permeability_[c])) {
      throw InvalidArgument("permeability must be positive and finite at cell " +
                            std::to_string(c));
    }
    if (!(porosity_[c] > 0.0 && porosity_[c] < 1.0)) {
      throw InvalidArgument("porosity must lie in (0,1) at cell " + std::to_string(c));
    }
  }
}

GeoModel generate_lognormal(const GridGeometry& geometry, const LognormalParams& params) {
  geometry.validate();
  if (!std::isfinite(params.mean_log_k) || !std::isfinite(params.sigma_log_k) ||
      !std::isfinite(params.porosity)) {
    throw InvalidArgument("lognormal generator parameters must be finite");
  }
  if (params.sigma_log_k < 0.0) throw InvalidArgument("sigma_log_k must be >= 0");
  if (params.correlation_length < 0) throw InvalidArgument("correlation_length must be >= 0");

  const int nx = geometry.nx;
  const int ny = geometry.ny;
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> noise(static_cast<std::size_t>(nx * ny));
  for (auto& z : noise) z = normal(rng);

  // Box average over the in-bounds neighbourhood, scaled by 1/sqrt(count)
  // so each smoothed value keeps unit variance.
  const int r = params.correlation_length;
  std::vector<double> perm(noise.size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double sum = 0.0;
      int count = 0;
      for (int jj = std::max(0, j - r); jj <= std::min(ny - 1, j + r); ++jj) {
        for (int ii = std::max(0, i - r); ii <= std::min(nx - 1, i + r); ++ii) {
          sum += noise[jj * nx + ii];
          ++count;
        }
      }
      const double g = params.mean_log_k + params.sigma_log_k * (sum / std::sqrt(count));
      perm[j * nx + i] = std::exp(g);
    }
  }
  std::vector<double> poro(noise.size(), params.porosity);
  return GeoModel(geometry, std::move(perm), std::move(poro));
}

namespace {

std::vector<double> read_block(std::istream& in, const std::string& keyword, std::size_t n,
                               const std::string& path) {
  std::string token;
  if (!(in >> token) || token != keyword) {
    throw LoadError(path + ": expected keyword " + keyword);
  }
  std::vector<double> values;
  values.reserve(n);
  while (values.size() < n) {
    const auto pos = in.tellg();
    if (!(in >> token)) break;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
      // Next keyword reached early.
      in.clear();
      in.seekg(pos);
      break;
    }
    values.push_back(v);
  }
  if (values.size() != n) {
    throw LoadError(path + ": " + keyword + " has " + std::to_string(values.size()) +
                    " values, expected " + std::to_string(n));
  }
  return values;
}

}  // namespace

GeoModel load_geomodel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open grid file " + path.string());
  GridGeometry g;
  if (!(in >> g.nx >> g.ny >> g.dx >> g.dy >> g.thickness)) {
    throw LoadError(path.string() + ": header must be 'nx ny dx dy thickness'");
  }
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  const auto n = static_cast<std::size_t>(g.cell_count());
  auto perm = read_block(in, "PERM", n, path.string());
  auto poro = read_block(in, "PORO", n, path.string());
  std::string extra;
  if (in >> extra) throw LoadError(path.string() + ": unexpected trailing token '" + extra + "'");

  for (std::size_t c = 0; c < n; ++c) {
    if (!(perm[c] > 0.0) || !std::isfinite(perm[c])) {
      throw LoadError(path.string() + ": non-positive permeability at cell " + std::to_string(c));
    }
    if (!(poro[c] > 0.0 && poro[c] < 1.0)) {
      throw LoadError(path.string() + ": porosity outside (0,1) at cell " + std::to_string(c));
    }
  }
  return GeoModel(g, std::move(perm), std::move(poro));
}

void save_geomodel(const GeoModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const auto& g = model.geometry();
  out << std::setprecision(17);
  out << g.nx << ' ' << g.ny << ' ' << g.dx << ' ' << g.dy << ' ' << g.thickness << '\n';
  out << "PERM";
  for (double v : model.permeability()) out << ' ' << v;
  out << "\nPORO";
  for (double v : model.porosity()) out << ' ' << v;
  out << '\n';
}

std::vector<double> normalize_permeability(const GeoModel& model) {
  const auto& k = model.permeability();
  std::vector<double> logk(k.size());
  std::transform(k.begin(), k.end(), logk.begin(), [](double v) { return std::log10(v); });
  const auto [lo, hi] = std::minmax_element(logk.begin(), logk.end());
  const double min = *lo;
  const double range = *hi - *lo;
  if (range == 0.0) return std::vector<double>(k.size(), 0.0);
  for (auto& v : logk) v = (v - min) / range;
  return logk;
}

}  // namespace fieldev
