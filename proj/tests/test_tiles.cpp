#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "groundgen/rng.hpp"
#include "groundgen/tiles.hpp"

using namespace groundgen;
using namespace groundgen::geo;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gg_tile_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ImageU8 make_mosaic(int h, int w, Rng& rng) {
  ImageU8 img(h, w, 3);
  for (auto& p : img.px) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// 0.001 degrees per pixel, top-left pixel center at (lat 52, lon -1).
WorldFile simple_world() {
  WorldFile w;
  w.a = 0.001;
  w.e = -0.001;
  w.c = -1.0;
  w.f = 52.0;
  return w;
}

}  // namespace

TEST_CASE("offline fetch crops exactly what an array slice gives") {
  Rng rng(101);
  const auto dir = scratch_dir("offline");
  const ImageU8 mosaic = make_mosaic(64, 80, rng);
  const WorldFile world = simple_world();
  write_png((dir / "mosaic.png").string(), mosaic);
  world.write((dir / "mosaic.png.pgw").string());

  TileClientConfig cfg;
  cfg.mosaic_png = (dir / "mosaic.png").string();
  TileClient client(cfg);
  CHECK(client.offline());

  // Pixel (40, 30): lat = 52 - 0.03, lon = -1 + 0.04.
  const GeoLocation loc{52.0 - 0.030, -1.0 + 0.040};
  const OverheadPatch patch = fetch_overhead_patch(client, loc, 10);
  CHECK(patch.patch_size == 10);
  CHECK(patch.center == loc);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(patch.pixels.at(y, x, c) == mosaic.at(30 - 5 + y, 40 - 5 + x, c));

  // Same call twice, bit-identical.
  CHECK(client.fetch(loc, 10) == patch);
  fs::remove_all(dir);
}

TEST_CASE("offline fetch outside the mosaic is a coverage error") {
  Rng rng(102);
  const auto dir = scratch_dir("coverage");
  write_png((dir / "mosaic.png").string(), make_mosaic(32, 32, rng));
  simple_world().write((dir / "mosaic.png.pgw").string());

  TileClientConfig cfg;
  cfg.mosaic_png = (dir / "mosaic.png").string();
  TileClient client(cfg);
  CHECK_THROWS_AS(client.fetch({52.0, -1.0}, 10), CoverageError);  // at the corner
  CHECK_THROWS_AS(client.fetch({40.0, 10.0}, 10), CoverageError);  // far away
  fs::remove_all(dir);
}

TEST_CASE("online fetch caches and never refetches") {
  std::atomic<int> hits{0};
  Rng rng(103);
  const ImageU8 tile = make_mosaic(10, 10, rng);
  const auto body = encode_png(tile);

  httplib::Server server;
  server.Get("/tile", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content(std::string(body.begin(), body.end()), "image/png");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto dir = scratch_dir("cache");
  TileClientConfig cfg;
  cfg.url_template = "http://127.0.0.1:" + std::to_string(port) +
                     "/tile?lat={lat}&lon={lon}&zoom={zoom}&size={size}";
  cfg.cache_dir = (dir / "cache").string();
  TileClient client(cfg);

  const GeoLocation loc{51.5, -0.1};
  const OverheadPatch p1 = client.fetch(loc, 10);
  CHECK(hits == 1);
  CHECK(p1.pixels == tile);
  CHECK(fs::exists(client.cache_path(loc, 10)));

  const OverheadPatch p2 = client.fetch(loc, 10);
  CHECK(hits == 1);  // cache hit, no network round trip
  CHECK(p2.pixels == p1.pixels);

  // A different location is a different cache key.
  client.fetch({51.6, -0.1}, 10);
  CHECK(hits == 2);

  server.stop();
  server_thread.join();
  fs::remove_all(dir);
}

TEST_CASE("server errors surface as retryable tile errors") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Get("/tile", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto dir = scratch_dir("retry");
  TileClientConfig cfg;
  cfg.url_template = "http://127.0.0.1:" + std::to_string(port) + "/tile?s={size}";
  cfg.cache_dir = (dir / "cache").string();
  cfg.max_retries = 2;
  TileClient client(cfg);
  try {
    client.fetch({51.5, -0.1}, 10);
    FAIL("expected TileError");
  } catch (const TileError& e) {
    CHECK(e.retryable());
  }
  CHECK(hits == 3);  // initial try plus two retries

  server.stop();
  server_thread.join();
  fs::remove_all(dir);
}

TEST_CASE("unreachable host is a retryable network error") {
  const auto dir = scratch_dir("unreachable");
  TileClientConfig cfg;
  cfg.url_template = "http://127.0.0.1:1/tile?s={size}";  // nothing listens
  cfg.cache_dir = (dir / "cache").string();
  cfg.max_retries = 0;
  TileClient client(cfg);
  try {
    client.fetch({51.5, -0.1}, 10);
    FAIL("expected TileError");
  } catch (const TileError& e) {
    CHECK(e.retryable());
  }
  fs::remove_all(dir);
}

TEST_CASE("api keys come from the environment and stay out of cache keys") {
  TileClientConfig cfg;
  cfg.url_template = "http://example.test/t?lat={lat}&lon={lon}";
  cfg.cache_dir = "/tmp/gg_cache_key_test";
  cfg.api_key_env = "GROUNDGEN_TEST_KEY";
  TileClient client(cfg);

  const GeoLocation loc{50.0, 0.0};
  const std::string before = client.cache_path(loc, 10);
  setenv("GROUNDGEN_TEST_KEY", "sekrit", 1);
  const std::string after = client.cache_path(loc, 10);
  unsetenv("GROUNDGEN_TEST_KEY");
  CHECK(before == after);
  CHECK(before.find("sekrit") == std::string::npos);
}

TEST_CASE("client config validation") {
  TileClientConfig cfg;
  CHECK_THROWS_AS(TileClient{cfg}, ConfigError);
}
