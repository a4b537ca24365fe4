#include "groundgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "groundgen/imageio.hpp"
#include "groundgen/rng.hpp"

namespace fs = std::filesystem;

namespace groundgen::geo {

std::string to_string(WorldLayout l) {
  switch (l) {
    case WorldLayout::Checkerboard:
      return "checkerboard";
    case WorldLayout::Halves:
      return "halves";
    case WorldLayout::Random:
      return "random";
  }
  return "?";
}

WorldLayout world_layout_from_string(const std::string& s) {
  if (s == "checkerboard") return WorldLayout::Checkerboard;
  if (s == "halves") return WorldLayout::Halves;
  if (s == "random") return WorldLayout::Random;
  throw ConfigError("unknown world layout: " + s);
}

void SyntheticWorldSpec::validate() const {
  if (grid_h < 2 || grid_w < 2)
    throw ConfigError("synthetic world grid must be at least 2x2");
  if (images_per_cell < 1)
    throw ConfigError("images_per_cell must be at least 1");
}

namespace {

// ~1km cells anchored southwest of London.
constexpr double kLat0 = 51.20;
constexpr double kLon0 = -0.60;
constexpr double kCellDegLat = 1.0 / 110.574;
constexpr double kCellDegLon = 0.014334;

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

// Blocky grayscale scene: light sky band over rectangular "buildings" with
// crisp edges and busy texture.
ImageU8 urban_ground(Rng& rng) {
  ImageU8 img(kGroundImageSize, kGroundImageSize, 3);
  const int horizon = rng.uniform_int(14, 24);
  const double sky = rng.uniform(185.0, 215.0);
  for (int y = 0; y < kGroundImageSize; ++y)
    for (int x = 0; x < kGroundImageSize; ++x) {
      const double base = y < horizon ? sky : rng.uniform(95.0, 135.0);
      const double v = base + rng.uniform(-14.0, 14.0);
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = clamp_u8(v + rng.uniform(-4.0, 4.0));
    }
  const int n_blocks = rng.uniform_int(5, 9);
  for (int b = 0; b < n_blocks; ++b) {
    const int bw = rng.uniform_int(6, 16);
    const int bh = rng.uniform_int(18, 44);
    const int bx = rng.uniform_int(0, kGroundImageSize - bw);
    const int by = kGroundImageSize - bh;
    const double shade = rng.uniform(45.0, 165.0);
    for (int y = by; y < kGroundImageSize; ++y)
      for (int x = bx; x < bx + bw; ++x) {
        const double v = shade + ((x - bx) % 4 == 0 ? -22.0 : 0.0) +
                         ((y - by) % 5 == 0 ? 16.0 : 0.0);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp_u8(v);
      }
  }
  return img;
}

// Smooth green scene: pale sky over a low-frequency green field.
ImageU8 rural_ground(Rng& rng) {
  ImageU8 img(kGroundImageSize, kGroundImageSize, 3);
  const int horizon = rng.uniform_int(18, 28);
  const double skyr = rng.uniform(150.0, 180.0);
  const double skyg = rng.uniform(185.0, 215.0);
  const double skyb = rng.uniform(215.0, 245.0);
  // Four corner greens blended bilinearly keep the field low-frequency.
  double cg[4];
  for (double& g : cg) g = rng.uniform(80.0, 150.0);
  const double phase = rng.uniform(0.0, 6.28318);
  for (int y = 0; y < kGroundImageSize; ++y) {
    const double fy =
        std::max(0.0, (y - horizon) / double(kGroundImageSize - horizon));
    for (int x = 0; x < kGroundImageSize; ++x) {
      if (y < horizon) {
        img.at(y, x, 0) = clamp_u8(skyr);
        img.at(y, x, 1) = clamp_u8(skyg);
        img.at(y, x, 2) = clamp_u8(skyb);
        continue;
      }
      const double fx = x / double(kGroundImageSize - 1);
      const double g = (1 - fy) * ((1 - fx) * cg[0] + fx * cg[1]) +
                       fy * ((1 - fx) * cg[2] + fx * cg[3]) +
                       7.0 * std::sin(0.18 * x + phase) +
                       5.0 * std::sin(0.11 * y + phase);
      img.at(y, x, 0) = clamp_u8(0.52 * g);
      img.at(y, x, 1) = clamp_u8(g);
      img.at(y, x, 2) = clamp_u8(0.45 * g);
    }
  }
  return img;
}

ImageU8 urban_patch(Rng& rng) {
  ImageU8 img(kDefaultPatchSize, kDefaultPatchSize, 3);
  const double base = rng.uniform(105.0, 145.0);
  for (int y = 0; y < kDefaultPatchSize; ++y)
    for (int x = 0; x < kDefaultPatchSize; ++x) {
      // High local variance, near-achromatic.
      const double v = base + rng.uniform(-42.0, 42.0);
      const double jitter = rng.uniform(-5.0, 5.0);
      img.at(y, x, 0) = clamp_u8(v + jitter);
      img.at(y, x, 1) = clamp_u8(v - 0.5 * jitter);
      img.at(y, x, 2) = clamp_u8(v + rng.uniform(-5.0, 5.0));
    }
  return img;
}

ImageU8 rural_patch(Rng& rng) {
  ImageU8 img(kDefaultPatchSize, kDefaultPatchSize, 3);
  const double g0 = rng.uniform(100.0, 130.0);
  const double gx = rng.uniform(-2.0, 2.0);
  const double gy = rng.uniform(-2.0, 2.0);
  for (int y = 0; y < kDefaultPatchSize; ++y)
    for (int x = 0; x < kDefaultPatchSize; ++x) {
      const double g = g0 + gx * x + gy * y + rng.uniform(-6.0, 6.0);
      img.at(y, x, 0) = clamp_u8(0.55 * g);
      img.at(y, x, 1) = clamp_u8(g);
      img.at(y, x, 2) = clamp_u8(0.48 * g);
    }
  return img;
}

}  // namespace

SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec) {
  spec.validate();
  SyntheticWorld world;
  world.classes = ClassSet::urban_rural();
  const GeoExtent extent{kLat0, kLat0 + spec.grid_h * kCellDegLat, kLon0,
                         kLon0 + spec.grid_w * kCellDegLon};
  world.grid = GridGeometry(extent, spec.grid_h, spec.grid_w);

  Rng label_rng(derive_seed(spec.seed, "world/labels"));
  world.cell_labels.resize(static_cast<std::size_t>(spec.grid_h) * spec.grid_w);
  for (int r = 0; r < spec.grid_h; ++r)
    for (int c = 0; c < spec.grid_w; ++c) {
      int label = 0;
      switch (spec.layout) {
        case WorldLayout::Checkerboard:
          label = (r + c) % 2;
          break;
        case WorldLayout::Halves:
          label = c < spec.grid_w / 2 ? 0 : 1;
          break;
        case WorldLayout::Random:
          label = static_cast<int>(label_rng.below(2));
          break;
      }
      world.cell_labels[static_cast<std::size_t>(r) * spec.grid_w + c] = label;
    }

  Rng rng(derive_seed(spec.seed, "world/samples"));
  world.samples.reserve(world.cell_labels.size() *
                        static_cast<std::size_t>(spec.images_per_cell));
  for (int r = 0; r < spec.grid_h; ++r) {
    for (int c = 0; c < spec.grid_w; ++c) {
      const int label =
          world.cell_labels[static_cast<std::size_t>(r) * spec.grid_w + c];
      const GeoExtent bounds = world.grid.cell_bounds(r, c);
      for (int i = 0; i < spec.images_per_cell; ++i) {
        GeoLocation loc{rng.uniform(bounds.lat_min, bounds.lat_max),
                        rng.uniform(bounds.lon_min, bounds.lon_max)};
        PairedSample s;
        s.ground.pixels = label == 0 ? urban_ground(rng) : rural_ground(rng);
        s.ground.location = loc;
        s.ground.label = world.classes.at(label);
        s.overhead.pixels = label == 0 ? urban_patch(rng) : rural_patch(rng);
        s.overhead.center = loc;
        s.overhead.patch_size = kDefaultPatchSize;
        s.cell = GridCell{r, c, world.classes.at(label), bounds};
        world.samples.push_back(std::move(s));
      }
    }
  }
  return world;
}

Dataset to_dataset(const SyntheticWorld& world) {
  return Dataset{world.grid, world.classes, world.samples};
}

// ---------------------------------------------------------------------------
// Manifest I/O

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "ground");
  fs::create_directories(fs::path(dir) / "patches");
  std::ofstream m(fs::path(dir) / "manifest.txt");
  if (!m) throw IoError("cannot open manifest for writing in " + dir);
  m.precision(17);
  m << "# groundgen dataset manifest v1\n";
  m << "# grid = " << ds.grid.rows() << " " << ds.grid.cols() << "\n";
  const GeoExtent& e = ds.grid.extent();
  m << "# extent = " << e.lat_min << " " << e.lat_max << " " << e.lon_min
    << " " << e.lon_max << "\n";
  m << "# classes =";
  for (int k = 0; k < ds.classes.size(); ++k) m << " " << ds.classes.name(k);
  m << "\n";
  m << "# samples = " << ds.samples.size() << "\n";
  char name[64];
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const PairedSample& s = ds.samples[i];
    if (!(s.overhead.center == s.ground.location))
      throw ConfigError(
          "manifest records one location per sample; patch center must equal "
          "the ground image location (sample " +
          std::to_string(i) + ")");
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    const std::string gpath = std::string("ground/") + name;
    const std::string ppath = std::string("patches/") + name;
    write_png((fs::path(dir) / gpath).string(), s.ground.pixels);
    write_png((fs::path(dir) / ppath).string(), s.overhead.pixels);
    m << gpath << "\t" << ppath << "\t" << s.ground.location.lat << "\t"
      << s.ground.location.lon << "\t" << s.cell.row << "\t" << s.cell.col
      << "\t" << s.cell.label.id << "\n";
  }
  if (!m) throw IoError("short write on manifest in " + dir);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.txt";
  std::ifstream m(mpath);
  if (!m) throw IoError("cannot open manifest: " + mpath.string());
  Dataset ds;
  int rows = 0, cols = 0;
  GeoExtent extent;
  bool have_grid = false, have_extent = false;
  std::string line;
  int lineno = 0;
  while (std::getline(m, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream h(line.substr(1));
      std::string key, eq;
      h >> key;
      if (key == "grid") {
        h >> eq >> rows >> cols;
        if (!h) throw ParseError("bad grid header", lineno);
        have_grid = true;
      } else if (key == "extent") {
        h >> eq >> extent.lat_min >> extent.lat_max >> extent.lon_min >>
            extent.lon_max;
        if (!h) throw ParseError("bad extent header", lineno);
        have_extent = true;
      } else if (key == "classes") {
        h >> eq;
        std::vector<std::string> names;
        std::string n;
        while (h >> n) names.push_back(n);
        ds.classes = ClassSet(std::move(names));
      }
      continue;
    }
    if (!have_grid || !have_extent)
      throw ParseError("manifest records before grid/extent headers", lineno);
    if (ds.samples.empty()) ds.grid = GridGeometry(extent, rows, cols);

    std::istringstream rec(line);
    std::string gpath, ppath;
    double lat, lon;
    int row, col, label;
    if (!(rec >> gpath >> ppath >> lat >> lon >> row >> col >> label))
      throw ParseError("malformed manifest record", lineno);
    if (row < 0 || row >= rows || col < 0 || col >= cols)
      throw ParseError("cell index outside grid", lineno);
    if (label < 0 || label >= ds.classes.size())
      throw ParseError("label id outside class set", lineno);

    PairedSample s;
    s.ground.pixels = read_png((fs::path(dir) / gpath).string());
    s.overhead.pixels = read_png((fs::path(dir) / ppath).string());
    s.ground.location = {lat, lon};
    s.ground.label = ds.classes.at(label);
    s.overhead.center = {lat, lon};
    s.overhead.patch_size = s.overhead.pixels.h;
    s.cell = GridCell{row, col, ds.classes.at(label),
                      GridGeometry(extent, rows, cols).cell_bounds(row, col)};
    ds.samples.push_back(std::move(s));
  }
  if (!have_grid || !have_extent)
    throw ParseError("manifest missing grid/extent headers: " + mpath.string());
  ds.grid = GridGeometry(extent, rows, cols);
  return ds;
}

}  // namespace groundgen::geo
