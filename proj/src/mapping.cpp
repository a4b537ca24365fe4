#include "groundgen/mapping.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace groundgen::mapping {

void LandCoverMap::validate() const {
  if (static_cast<int>(labels.size()) != grid.rows() * grid.cols())
    throw DimensionError("map labels do not match the grid");
  for (int v : labels)
    if (v < 0) throw OutOfBoundsError("map holds a negative class id");
}

int majority_vote(const std::vector<int>& labels) {
  if (labels.empty()) throw DimensionError("majority vote over an empty list");
  std::map<int, int> counts;
  for (int v : labels) {
    if (v < 0) throw OutOfBoundsError("negative class id in vote");
    ++counts[v];
  }
  int best = -1, best_count = -1;
  for (const auto& [id, count] : counts) {
    // std::map iterates ids ascending, so ties keep the lowest id.
    if (count > best_count) {
      best = id;
      best_count = count;
    }
  }
  return best;
}

LandCoverMap build_map(const geo::GridGeometry& grid,
                       const std::vector<std::vector<int>>& per_cell_labels,
                       const std::string& provenance) {
  if (static_cast<int>(per_cell_labels.size()) != grid.rows() * grid.cols())
    throw DimensionError("per-cell label lists do not match the grid");
  std::string missing;
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c)
      if (per_cell_labels[static_cast<std::size_t>(r) * grid.cols() + c].empty()) {
        if (!missing.empty()) missing += ", ";
        missing += "(" + std::to_string(r) + "," + std::to_string(c) + ")";
      }
  if (!missing.empty())
    throw CoverageError("cells with no labels: " + missing);

  LandCoverMap map;
  map.grid = grid;
  map.provenance = provenance;
  map.labels.reserve(per_cell_labels.size());
  for (const auto& cell : per_cell_labels) map.labels.push_back(majority_vote(cell));
  return map;
}

double map_accuracy(const LandCoverMap& pred, const LandCoverMap& truth) {
  if (pred.grid.rows() != truth.grid.rows() ||
      pred.grid.cols() != truth.grid.cols())
    throw DimensionError("map dimensions differ");
  pred.validate();
  truth.validate();
  long agree = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i)
    agree += pred.labels[i] == truth.labels[i];
  return static_cast<double>(agree) / static_cast<double>(pred.labels.size());
}

Palette Palette::urban_rural() {
  Palette p;
  p.colors[0] = {139, 90, 43};   // brown
  p.colors[1] = {76, 153, 76};   // green
  return p;
}

geo::ImageU8 render_map(const LandCoverMap& map, const Palette& palette,
                        int cell_px) {
  map.validate();
  if (cell_px < 1) throw ConfigError("cell_px must be positive");
  for (int v : map.labels)
    if (!palette.colors.count(v))
      throw ConfigError("palette is missing class id " + std::to_string(v));
  const int rows = map.grid.rows(), cols = map.grid.cols();
  geo::ImageU8 img(rows * cell_px, cols * cell_px, 3);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto& color = palette.colors.at(map.at(r, c));
      // Row 0 is the southern edge; draw it at the bottom.
      const int y0 = (rows - 1 - r) * cell_px;
      for (int y = y0; y < y0 + cell_px; ++y)
        for (int x = c * cell_px; x < (c + 1) * cell_px; ++x)
          for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = color[static_cast<std::size_t>(ch)];
    }
  return img;
}

void save_map_csv(const LandCoverMap& map, const std::string& path) {
  map.validate();
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.precision(17);
  const auto& e = map.grid.extent();
  f << "# groundgen map v1\n";
  f << "# provenance = " << map.provenance << "\n";
  f << "# extent = " << e.lat_min << " " << e.lat_max << " " << e.lon_min
    << " " << e.lon_max << "\n";
  for (int r = 0; r < map.grid.rows(); ++r) {
    for (int c = 0; c < map.grid.cols(); ++c) {
      if (c) f << ",";
      f << map.at(r, c);
    }
    f << "\n";
  }
}

LandCoverMap load_map_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  LandCoverMap map;
  geo::GeoExtent extent{0, 1, 0, 1};
  std::string line;
  std::vector<std::vector<int>> rows;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# provenance = ", 0) == 0)
        map.provenance = line.substr(15);
      if (line.rfind("# extent = ", 0) == 0) {
        std::istringstream ss(line.substr(11));
        if (!(ss >> extent.lat_min >> extent.lat_max >> extent.lon_min >>
              extent.lon_max))
          throw ParseError("bad map extent", lineno);
      }
      continue;
    }
    std::vector<int> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stoi(cell));
      } catch (const std::exception&) {
        throw ParseError("bad class id '" + cell + "'", lineno);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("ragged map row", lineno);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("map file has no rows: " + path);
  map.grid = geo::GridGeometry(extent, static_cast<int>(rows.size()),
                               static_cast<int>(rows.front().size()));
  for (const auto& r : rows)
    map.labels.insert(map.labels.end(), r.begin(), r.end());
  map.validate();
  return map;
}

}  // namespace groundgen::mapping
