#ifndef GROUNDGEN_DATASET_HPP
#define GROUNDGEN_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "groundgen/image.hpp"

namespace groundgen::geo {

enum class WorldLayout { Checkerboard, Halves, Random };

std::string to_string(WorldLayout l);
WorldLayout world_layout_from_string(const std::string& s);

// Desk-scale stand-in for a gridded study region with visually distinct
// urban and rural classes.
struct SyntheticWorldSpec {
  int grid_h = 16;
  int grid_w = 16;
  WorldLayout layout = WorldLayout::Checkerboard;
  int images_per_cell = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticWorld {
  GridGeometry grid;
  ClassSet classes;             // {urban, rural}
  std::vector<int> cell_labels;  // row-major class ids
  std::vector<PairedSample> samples;
};

// Pure function of the spec: cells on a ~1km equirectangular grid, urban
// cells yielding high-frequency gray/blocky textures and rural cells
// low-frequency green textures in both views. The mean patch color is
// class-predictive by construction.
SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec);

// On-disk dataset: a plain-text manifest plus PNG files. One record per
// line: ground image path, patch path, lat, lon, cell row, cell col, label
// id. The patch is centered on the ground image's location, so one lat/lon
// describes both.
struct Dataset {
  GridGeometry grid;
  ClassSet classes;
  std::vector<PairedSample> samples;
};

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

Dataset to_dataset(const SyntheticWorld& world);

}  // namespace groundgen::geo

#endif
