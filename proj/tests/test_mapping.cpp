#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "groundgen/imageio.hpp"
#include "groundgen/mapping.hpp"
#include "groundgen/rng.hpp"

using namespace groundgen;
using namespace groundgen::mapping;
namespace fs = std::filesystem;

namespace {

// Exhaustive counting oracle for the modal class with lowest-id ties.
int vote_oracle(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int v : labels) ++counts[v];
  int best = -1, best_count = 0;
  for (const auto& [id, n] : counts)
    if (n > best_count) {
      best = id;
      best_count = n;
    }
  return best;
}

geo::GridGeometry grid(int rows, int cols) {
  return geo::GridGeometry(geo::GeoExtent{0, 1, 0, 1}, rows, cols);
}

LandCoverMap checker(int rows, int cols) {
  LandCoverMap m;
  m.grid = grid(rows, cols);
  m.provenance = "ground-truth";
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m.labels.push_back((r + c) % 2);
  return m;
}

}  // namespace

TEST_CASE("majority vote: counting and the tie rule") {
  CHECK(majority_vote({0, 0, 0, 0, 0, 0, 1, 1, 1, 1}) == 0);  // 6 urban, 4 rural
  CHECK(majority_vote({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}) == 0);  // 5-5 tie -> id 0
  CHECK(majority_vote({2, 1, 2, 1}) == 1);                    // tie -> lowest id
  CHECK(majority_vote({3}) == 3);
  CHECK_THROWS_AS(majority_vote({}), DimensionError);
  CHECK_THROWS_AS(majority_vote({-1}), OutOfBoundsError);
}

TEST_CASE("majority vote equals the exhaustive counting oracle") {
  Rng rng(71);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<int> labels;
    const int n = rng.uniform_int(1, 12);
    for (int i = 0; i < n; ++i) labels.push_back(rng.uniform_int(0, 3));
    CHECK(majority_vote(labels) == vote_oracle(labels));
  }
}

TEST_CASE("build_map votes per cell and is order invariant") {
  const auto g = grid(2, 2);
  std::vector<std::vector<int>> cells{{0, 0, 0}, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}};
  const auto m = build_map(g, cells, "cgan-features");
  CHECK(m.labels == std::vector<int>{0, 1, 1, 0});
  CHECK(m.provenance == "cgan-features");

  // One 6/4 split cell takes the 6-majority.
  cells[0] = {1, 0, 0, 1, 0, 0, 1, 0, 1, 0};  // 6 zeros, 4 ones
  CHECK(build_map(g, cells, "x").labels[0] == 0);

  Rng rng(72);
  auto shuffled = cells;
  for (auto& c : shuffled) rng.shuffle(c);
  CHECK(build_map(g, shuffled, "x").labels == build_map(g, cells, "x").labels);
}

TEST_CASE("build_map reports uncovered cells") {
  const auto g = grid(2, 2);
  std::vector<std::vector<int>> cells{{0}, {}, {1}, {}};
  try {
    build_map(g, cells, "x");
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(0,1)") != std::string::npos);
    CHECK(msg.find("(1,1)") != std::string::npos);
  }
}

TEST_CASE("map accuracy: identity, partial, complement, symmetry") {
  const auto truth = checker(2, 2);
  CHECK(map_accuracy(truth, truth) == 1.0);

  LandCoverMap one_off = truth;
  one_off.labels[2] = 1 - one_off.labels[2];
  CHECK(map_accuracy(one_off, truth) == 0.75);
  CHECK(map_accuracy(one_off, truth) == map_accuracy(truth, one_off));

  LandCoverMap complement = truth;
  for (int& v : complement.labels) v = 1 - v;
  CHECK(map_accuracy(complement, truth) == 0.0);

  LandCoverMap other = checker(3, 2);
  CHECK_THROWS_AS(map_accuracy(other, truth), DimensionError);
}

TEST_CASE("map accuracy self-agreement holds for random maps") {
  Rng rng(73);
  for (int t = 0; t < 50; ++t) {
    LandCoverMap m;
    m.grid = grid(rng.uniform_int(1, 5), rng.uniform_int(1, 5));
    for (int i = 0; i < m.grid.rows() * m.grid.cols(); ++i)
      m.labels.push_back(rng.uniform_int(0, 3));
    m.provenance = "ground-truth";
    CHECK(map_accuracy(m, m) == 1.0);
  }
}

TEST_CASE("render: solid block, determinism, checkerboard pixels") {
  LandCoverMap solid;
  solid.grid = grid(1, 1);
  solid.labels = {0};
  solid.provenance = "ground-truth";
  const auto img = render_map(solid, Palette::urban_rural(), 4);
  CHECK(img.h == 4);
  CHECK(img.w == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(img.at(y, x, 0) == 139);
      CHECK(img.at(y, x, 1) == 90);
      CHECK(img.at(y, x, 2) == 43);
    }

  const auto board = checker(2, 2);
  const auto png1 = geo::encode_png(render_map(board, Palette::urban_rural()));
  const auto png2 = geo::encode_png(render_map(board, Palette::urban_rural()));
  CHECK(png1 == png2);

  // Direct pixel oracle on the 2x2 checkerboard: row 0 (south, labels 0,1)
  // is drawn at the bottom.
  const auto px = render_map(board, Palette::urban_rural(), 2);
  CHECK(px.h == 4);
  auto color_at = [&](int y, int x) {
    return std::array<std::uint8_t, 3>{px.at(y, x, 0), px.at(y, x, 1),
                                       px.at(y, x, 2)};
  };
  const std::array<std::uint8_t, 3> brown{139, 90, 43}, green{76, 153, 76};
  CHECK(color_at(3, 0) == brown);   // cell (0,0) = 0
  CHECK(color_at(3, 3) == green);   // cell (0,1) = 1
  CHECK(color_at(0, 0) == green);   // cell (1,0) = 1
  CHECK(color_at(0, 3) == brown);   // cell (1,1) = 0
}

TEST_CASE("render rejects missing palette entries") {
  LandCoverMap m;
  m.grid = grid(1, 1);
  m.labels = {7};
  m.provenance = "x";
  CHECK_THROWS_AS(render_map(m, Palette::urban_rural()), ConfigError);
}

TEST_CASE("map csv round trip") {
  const auto m = checker(3, 4);
  const auto dir = fs::temp_directory_path() / "gg_map_test";
  fs::create_directories(dir);
  const std::string path = (dir / "m.csv").string();
  save_map_csv(m, path);
  const auto back = load_map_csv(path);
  CHECK(back.labels == m.labels);
  CHECK(back.provenance == m.provenance);
  CHECK(back.grid.rows() == 3);
  CHECK(back.grid.cols() == 4);
  CHECK(back.grid.extent() == m.grid.extent());
  fs::remove_all(dir);
}
