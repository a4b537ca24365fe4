#ifndef GROUNDGEN_MAPPING_HPP
#define GROUNDGEN_MAPPING_HPP

#include <array>
#include <map>
#include <string>
#include <vector>

#include "groundgen/geo.hpp"
#include "groundgen/image.hpp"

namespace groundgen::mapping {

// Gridded class-id map with its geographic extent and an origin tag.
struct LandCoverMap {
  geo::GridGeometry grid;
  std::vector<int> labels;  // row-major, row 0 at the southern edge
  std::string provenance;   // ground-truth | ground-images | cgan-features | interpolated

  void validate() const;
  int at(int row, int col) const {
    return labels[static_cast<std::size_t>(row) * grid.cols() + col];
  }
};

// Modal class id; ties break to the lowest id. Empty input is an error.
int majority_vote(const std::vector<int>& labels);

// One label list per cell (row-major); cells with no labels are a coverage
// error listing the offending cells.
LandCoverMap build_map(const geo::GridGeometry& grid,
                       const std::vector<std::vector<int>>& per_cell_labels,
                       const std::string& provenance);

// Fraction of cells on which the two maps agree.
double map_accuracy(const LandCoverMap& pred, const LandCoverMap& truth);

struct Palette {
  std::map<int, std::array<std::uint8_t, 3>> colors;

  // brown urban, green rural
  static Palette urban_rural();
};

// One cell_px x cell_px block per cell; row 0 (south) is drawn at the bottom
// so north points up. Deterministic bytes for fixed inputs.
geo::ImageU8 render_map(const LandCoverMap& map, const Palette& palette,
                        int cell_px = 8);

void save_map_csv(const LandCoverMap& map, const std::string& path);
LandCoverMap load_map_csv(const std::string& path);

}  // namespace groundgen::mapping

#endif
