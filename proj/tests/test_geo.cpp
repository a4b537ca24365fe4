#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "groundgen/geo.hpp"
#include "groundgen/image.hpp"
#include "groundgen/imageio.hpp"
#include "groundgen/rng.hpp"

using namespace groundgen;
using namespace groundgen::geo;

namespace {

GridGeometry small_grid() {
  return GridGeometry(GeoExtent{50.0, 50.4, 0.0, 0.4}, 4, 4);
}

std::vector<int> checker_labels(int rows, int cols) {
  std::vector<int> labels(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      labels[static_cast<std::size_t>(r) * cols + c] = (r + c) % 2;
  return labels;
}

// Brute-force point-in-rectangle scan honoring the half-open rule; the
// independent oracle for edge ownership.
int brute_force_cell_label(const GridGeometry& g, const std::vector<int>& labels,
                           const GeoLocation& p) {
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) {
      const GeoExtent b = g.cell_bounds(r, c);
      const bool last_row = r == g.rows() - 1;
      const bool last_col = c == g.cols() - 1;
      const bool in_lat =
          p.lat >= b.lat_min && (p.lat < b.lat_max || (last_row && p.lat <= b.lat_max));
      const bool in_lon =
          p.lon >= b.lon_min && (p.lon < b.lon_max || (last_col && p.lon <= b.lon_max));
      if (in_lat && in_lon) return labels[static_cast<std::size_t>(r) * g.cols() + c];
    }
  return -1;
}

}  // namespace

TEST_CASE("rng is platform stable and deterministic") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  // First output of std::mt19937_64 seeded with 42 is pinned by the standard.
  CHECK(Rng(42).next_u64() == 13930160852258120406ull);

  Rng c(7), d(7);
  for (int i = 0; i < 100; ++i) CHECK(c.normal() == d.normal());

  double mean = 0.0, var = 0.0;
  Rng e(1);
  const int n = 20000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = e.normal();
  for (double x : xs) mean += x;
  mean /= n;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);

  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}

TEST_CASE("rng bounded draws stay in range") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = r.uniform_int(-3, 5);
    CHECK(k >= -3);
    CHECK(k <= 5);
  }
}

TEST_CASE("label propagation assigns the containing cell") {
  const GridGeometry g = small_grid();
  const auto labels = checker_labels(4, 4);

  // Exact center of cell (0,0), an urban cell under the checkerboard.
  const GeoLocation center = g.cell_center(0, 0);
  CHECK(propagate_labels(g, labels, {center}) == std::vector<int>{0});

  // 10 locations inside one rural cell all inherit its label.
  const GeoExtent b = g.cell_bounds(0, 1);
  Rng rng(11);
  std::vector<GeoLocation> pts;
  for (int i = 0; i < 10; ++i)
    pts.push_back({rng.uniform(b.lat_min, b.lat_max - 1e-9),
                   rng.uniform(b.lon_min, b.lon_max - 1e-9)});
  const auto out = propagate_labels(g, labels, pts);
  for (int v : out) CHECK(v == 1);
}

TEST_CASE("shared edges follow the half-open rule (brute-force oracle)") {
  const GridGeometry g = small_grid();
  const auto labels = checker_labels(4, 4);

  // On the edge shared by columns 1 and 2: the half-open rule gives it to
  // column 2.
  const GeoLocation edge{50.05, g.cell_bounds(0, 2).lon_min};
  const int got = propagate_labels(g, labels, {edge})[0];
  CHECK(got == brute_force_cell_label(g, labels, edge));
  CHECK(got == labels[2]);

  // Global max edge belongs to the last cell.
  const GeoLocation corner{50.4, 0.4};
  CHECK(propagate_labels(g, labels, {corner})[0] ==
        brute_force_cell_label(g, labels, corner));

  // Fuzz interior and edge points against the oracle.
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    GeoLocation p{rng.uniform(50.0, 50.4), rng.uniform(0.0, 0.4)};
    if (i % 3 == 0) p.lat = g.cell_bounds(rng.uniform_int(0, 3), 0).lat_min;
    if (i % 5 == 0) p.lon = g.cell_bounds(0, rng.uniform_int(0, 3)).lon_min;
    CHECK(propagate_labels(g, labels, {p})[0] ==
          brute_force_cell_label(g, labels, p));
  }
}

TEST_CASE("out-of-extent locations raise an error naming the location") {
  const GridGeometry g = small_grid();
  const auto labels = checker_labels(4, 4);
  try {
    propagate_labels(g, labels, {{51.0, 0.2}});
    FAIL("expected OutOfBoundsError");
  } catch (const OutOfBoundsError& e) {
    CHECK(std::string(e.what()).find("51.0") != std::string::npos);
  }
}

TEST_CASE("propagation is idempotent and total over in-extent points") {
  const GridGeometry g = small_grid();
  const auto labels = checker_labels(4, 4);
  Rng rng(9);
  std::vector<GeoLocation> pts;
  for (int i = 0; i < 200; ++i)
    pts.push_back({rng.uniform(50.0, 50.4), rng.uniform(0.0, 0.4)});
  const auto once = propagate_labels(g, labels, pts);
  const auto twice = propagate_labels(g, labels, pts);
  CHECK(once == twice);
  CHECK(once.size() == pts.size());
}

TEST_CASE("haversine matches reference distances") {
  // One degree of longitude on the equator: R * pi / 180.
  const double d = haversine_km({0.0, 0.0}, {0.0, 1.0});
  CHECK(d == doctest::Approx(111.1950802335).epsilon(1e-9));
  CHECK(haversine_km({10.0, 20.0}, {10.0, 20.0}) == 0.0);
  // Symmetry.
  CHECK(haversine_km({51.5, -0.1}, {48.85, 2.35}) ==
        doctest::Approx(haversine_km({48.85, 2.35}, {51.5, -0.1})));
}

TEST_CASE("bilinear resize identity and constants") {
  ImageU8 img(3, 3, 3);
  Rng rng(2);
  for (auto& p : img.px) p = static_cast<std::uint8_t>(rng.below(256));
  CHECK(resize_bilinear(img, 3, 3) == img);

  ImageU8 solid(1, 1, 3);
  solid.at(0, 0, 0) = 10;
  solid.at(0, 0, 1) = 20;
  solid.at(0, 0, 2) = 30;
  const ImageU8 up = resize_bilinear(solid, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(up.at(y, x, 0) == 10);
      CHECK(up.at(y, x, 1) == 20);
      CHECK(up.at(y, x, 2) == 30);
    }

  // Downsampling by 2 averages 2x2 blocks when centers align.
  ImageU8 quad(2, 2, 1);
  quad.at(0, 0, 0) = 0;
  quad.at(0, 1, 0) = 100;
  quad.at(1, 0, 0) = 200;
  quad.at(1, 1, 0) = 56;
  const ImageU8 down = resize_bilinear(quad, 1, 1);
  CHECK(down.at(0, 0, 0) == 89);  // round((0+100+200+56)/4)
}

TEST_CASE("png codec round-trips pixels and is byte-deterministic") {
  ImageU8 img(17, 23, 3);
  Rng rng(4);
  for (auto& p : img.px) p = static_cast<std::uint8_t>(rng.below(256));
  const auto bytes1 = encode_png(img);
  const auto bytes2 = encode_png(img);
  CHECK(bytes1 == bytes2);
  CHECK(decode_png(bytes1) == img);

  const auto dir = std::filesystem::temp_directory_path() / "gg_png_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "a.png").string();
  write_png(path, img);
  CHECK(read_png(path) == img);
  std::filesystem::remove_all(dir);
}

TEST_CASE("world file round trip and pixel mapping") {
  WorldFile w;
  w.a = 0.001;
  w.e = -0.001;
  w.c = -1.0;
  w.f = 52.0;
  const auto dir = std::filesystem::temp_directory_path() / "gg_wld_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.pgw").string();
  w.write(path);
  const WorldFile r = WorldFile::read(path);
  CHECK(r.a == w.a);
  CHECK(r.e == w.e);
  CHECK(r.c == w.c);
  CHECK(r.f == w.f);

  const GeoLocation p = r.pixel_to_geo(10, 20);
  double col, row;
  r.geo_to_pixel(p, col, row);
  CHECK(col == doctest::Approx(10));
  CHECK(row == doctest::Approx(20));
  std::filesystem::remove_all(dir);
}

TEST_CASE("class sets enforce unique names") {
  CHECK_THROWS_AS(ClassSet({"urban", "urban"}), ConfigError);
  const ClassSet cs = ClassSet::urban_rural();
  CHECK(cs.size() == 2);
  CHECK(cs.id_of("rural") == 1);
  CHECK(cs.id_of("water") == -1);
}

TEST_CASE("grid geometry validates and exposes bounds") {
  CHECK_THROWS_AS(GridGeometry(GeoExtent{1, 1, 0, 1}, 2, 2), ConfigError);
  CHECK_THROWS_AS(GridGeometry(GeoExtent{0, 1, 0, 1}, 0, 2), ConfigError);
  const GridGeometry g = small_grid();
  const GeoExtent b = g.cell_bounds(3, 3);
  CHECK(b.lat_max == doctest::Approx(50.4));
  CHECK(b.lon_max == doctest::Approx(0.4));
  CHECK_THROWS_AS(g.cell_bounds(4, 0), OutOfBoundsError);
}
