#ifndef GROUNDGEN_GEO_HPP
#define GROUNDGEN_GEO_HPP

#include <string>
#include <vector>

#include "groundgen/common.hpp"

namespace groundgen::geo {

struct GeoLocation {
  double lat = 0.0;  // degrees, WGS84, [-90, 90]
  double lon = 0.0;  // degrees, WGS84, [-180, 180]

  void validate() const;
  bool operator==(const GeoLocation&) const = default;
};

struct LandCoverClass {
  int id = 0;
  std::string name;

  bool operator==(const LandCoverClass&) const = default;
};

// Dense class ids 0..K-1 with unique names.
class ClassSet {
 public:
  ClassSet() = default;
  explicit ClassSet(std::vector<std::string> names);

  static ClassSet urban_rural() { return ClassSet({"urban", "rural"}); }

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const;
  int id_of(const std::string& name) const;  // -1 when unknown
  LandCoverClass at(int id) const { return {id, name(id)}; }

  bool operator==(const ClassSet&) const = default;

 private:
  std::vector<std::string> names_;
};

struct GeoExtent {
  double lat_min = 0.0, lat_max = 0.0;
  double lon_min = 0.0, lon_max = 0.0;

  bool degenerate() const { return lat_min >= lat_max || lon_min >= lon_max; }
  bool contains(const GeoLocation& p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min &&
           p.lon <= lon_max;
  }
  bool operator==(const GeoExtent&) const = default;
};

// Equirectangular H x W cell grid over an extent.
//
// Cell containment is half-open, [min, max) on both axes, so every in-extent
// point maps to exactly one cell; points on the global max edges belong to
// the last row/column. Row 0 sits at lat_min (south), col 0 at lon_min.
class GridGeometry {
 public:
  GridGeometry() = default;
  GridGeometry(GeoExtent extent, int rows, int cols);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const GeoExtent& extent() const { return extent_; }

  bool contains(const GeoLocation& p) const { return extent_.contains(p); }

  // Throws OutOfBoundsError naming the location when outside the extent.
  void cell_at(const GeoLocation& p, int& row, int& col) const;

  GeoExtent cell_bounds(int row, int col) const;
  GeoLocation cell_center(int row, int col) const;

  bool operator==(const GridGeometry&) const = default;

 private:
  GeoExtent extent_;
  int rows_ = 0, cols_ = 0;
};

struct GridCell {
  int row = 0;
  int col = 0;
  LandCoverClass label;
  GeoExtent bounds;

  bool operator==(const GridCell&) const = default;
};

// Great-circle distance (haversine), kilometers.
double haversine_km(const GeoLocation& a, const GeoLocation& b);

// Assigns each location the label of its containing cell. `labels` holds one
// class id per cell, row-major. Total over in-extent locations; throws
// OutOfBoundsError (naming the location) otherwise.
std::vector<int> propagate_labels(const GridGeometry& grid,
                                  const std::vector<int>& labels,
                                  const std::vector<GeoLocation>& locations);

}  // namespace groundgen::geo

#endif
