#include "groundgen/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace groundgen::geo {

namespace {
constexpr double kEarthRadiusKm = 6371.0088;

std::string fmt_loc(const GeoLocation& p) {
  return "(" + std::to_string(p.lat) + ", " + std::to_string(p.lon) + ")";
}
}  // namespace

void GeoLocation::validate() const {
  if (!(lat >= -90.0 && lat <= 90.0))
    throw OutOfBoundsError("latitude out of range: " + std::to_string(lat));
  if (!(lon >= -180.0 && lon <= 180.0))
    throw OutOfBoundsError("longitude out of range: " + std::to_string(lon));
}

ClassSet::ClassSet(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    for (std::size_t j = i + 1; j < names_.size(); ++j)
      if (names_[i] == names_[j])
        throw ConfigError("duplicate class name: " + names_[i]);
}

const std::string& ClassSet::name(int id) const {
  if (id < 0 || id >= size())
    throw OutOfBoundsError("class id out of range: " + std::to_string(id));
  return names_[static_cast<std::size_t>(id)];
}

int ClassSet::id_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

GridGeometry::GridGeometry(GeoExtent extent, int rows, int cols)
    : extent_(extent), rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1)
    throw ConfigError("grid must have at least one row and column");
  if (extent.degenerate()) throw ConfigError("grid extent is degenerate");
}

namespace {

// Canonical edge position; cell_at and cell_bounds must share this exact
// arithmetic or points sitting on an edge could be claimed by both cells.
double edge(double lo, double hi, int count, int i) {
  if (i <= 0) return lo;
  if (i >= count) return hi;
  return lo + i * ((hi - lo) / count);
}

int locate(double v, double lo, double hi, int count) {
  const double step = (hi - lo) / count;
  int i = std::clamp(static_cast<int>(std::floor((v - lo) / step)), 0, count - 1);
  while (i > 0 && v < edge(lo, hi, count, i)) --i;
  while (i < count - 1 && v >= edge(lo, hi, count, i + 1)) ++i;
  return i;
}

}  // namespace

void GridGeometry::cell_at(const GeoLocation& p, int& row, int& col) const {
  if (!extent_.contains(p))
    throw OutOfBoundsError("location " + fmt_loc(p) + " outside grid extent");
  // Half-open cells; the global max edge falls to the last row/column.
  row = locate(p.lat, extent_.lat_min, extent_.lat_max, rows_);
  col = locate(p.lon, extent_.lon_min, extent_.lon_max, cols_);
}

GeoExtent GridGeometry::cell_bounds(int row, int col) const {
  if (row < 0 || row >= rows_ || col < 0 || col >= cols_)
    throw OutOfBoundsError("cell (" + std::to_string(row) + ", " +
                           std::to_string(col) + ") outside grid");
  return GeoExtent{edge(extent_.lat_min, extent_.lat_max, rows_, row),
                   edge(extent_.lat_min, extent_.lat_max, rows_, row + 1),
                   edge(extent_.lon_min, extent_.lon_max, cols_, col),
                   edge(extent_.lon_min, extent_.lon_max, cols_, col + 1)};
}

GeoLocation GridGeometry::cell_center(int row, int col) const {
  const GeoExtent b = cell_bounds(row, col);
  return {0.5 * (b.lat_min + b.lat_max), 0.5 * (b.lon_min + b.lon_max)};
}

double haversine_km(const GeoLocation& a, const GeoLocation& b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * deg;
  const double dlon = (b.lon - a.lon) * deg;
  const double s1 = std::sin(0.5 * dlat);
  const double s2 = std::sin(0.5 * dlon);
  const double h =
      s1 * s1 + std::cos(a.lat * deg) * std::cos(b.lat * deg) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

std::vector<int> propagate_labels(const GridGeometry& grid,
                                  const std::vector<int>& labels,
                                  const std::vector<GeoLocation>& locations) {
  if (static_cast<int>(labels.size()) != grid.rows() * grid.cols())
    throw DimensionError("label grid size does not match geometry");
  std::vector<int> out;
  out.reserve(locations.size());
  for (const GeoLocation& p : locations) {
    int r, c;
    grid.cell_at(p, r, c);
    out.push_back(labels[static_cast<std::size_t>(r) * grid.cols() + c]);
  }
  return out;
}

}  // namespace groundgen::geo
