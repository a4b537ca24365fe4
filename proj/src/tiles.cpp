#include "groundgen/tiles.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <httplib.h>

namespace fs = std::filesystem;

namespace groundgen::geo {

TileClient::TileClient(TileClientConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.url_template.empty() && cfg_.mosaic_png.empty())
    throw ConfigError("tile client needs a url_template or an offline mosaic");
  if (!cfg_.mosaic_png.empty() && cfg_.mosaic_world.empty())
    cfg_.mosaic_world = cfg_.mosaic_png + ".pgw";
}

OverheadPatch fetch_overhead_patch(TileClient& client,
                                   const GeoLocation& location,
                                   int patch_size) {
  return client.fetch(location, patch_size);
}

OverheadPatch TileClient::fetch(const GeoLocation& location, int patch_size) {
  location.validate();
  if (patch_size < 1) throw DimensionError("patch_size must be positive");
  return offline() ? fetch_offline(location, patch_size)
                   : fetch_online(location, patch_size);
}

OverheadPatch TileClient::fetch_offline(const GeoLocation& location,
                                        int patch_size) {
  std::call_once(mosaic_once_, [this] {
    mosaic_ = std::make_unique<ImageU8>(read_png(cfg_.mosaic_png));
    world_ = WorldFile::read(cfg_.mosaic_world);
  });
  double col, row;
  world_.geo_to_pixel(location, col, row);
  const int cx = static_cast<int>(std::lround(col));
  const int cy = static_cast<int>(std::lround(row));
  const int x0 = cx - patch_size / 2;
  const int y0 = cy - patch_size / 2;
  if (x0 < 0 || y0 < 0 || x0 + patch_size > mosaic_->w ||
      y0 + patch_size > mosaic_->h)
    throw CoverageError("location (" + std::to_string(location.lat) + ", " +
                        std::to_string(location.lon) +
                        ") not covered by offline mosaic");
  OverheadPatch patch;
  patch.pixels = ImageU8(patch_size, patch_size, 3);
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x)
      for (int c = 0; c < 3; ++c)
        patch.pixels.at(y, x, c) = mosaic_->at(y0 + y, x0 + x, c);
  patch.center = location;
  patch.patch_size = patch_size;
  return patch;
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos;
       pos += to.size())
    s.replace(pos, from.size(), to);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.8f", v);
  return buf;
}

void split_url(const std::string& url, std::string& host_port,
               std::string& path) {
  std::string rest = url;
  const auto scheme = rest.find("://");
  if (scheme != std::string::npos) {
    if (rest.substr(0, scheme) != "http")
      throw ConfigError("tile client supports http endpoints only: " + url);
    rest = rest.substr(scheme + 3);
  }
  const auto slash = rest.find('/');
  host_port = slash == std::string::npos ? rest : rest.substr(0, slash);
  path = slash == std::string::npos ? "/" : rest.substr(slash);
}

}  // namespace

std::string TileClient::build_url(const GeoLocation& location, int patch_size,
                                  bool with_key) const {
  std::string url = cfg_.url_template;
  replace_all(url, "{lat}", fmt_double(location.lat));
  replace_all(url, "{lon}", fmt_double(location.lon));
  replace_all(url, "{zoom}", std::to_string(cfg_.zoom));
  replace_all(url, "{size}", std::to_string(patch_size));
  if (with_key && !cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
      url += (url.find('?') == std::string::npos ? '?' : '&');
      url += cfg_.api_key_param + "=" + key;
    }
  }
  return url;
}

std::string TileClient::cache_path(const GeoLocation& location,
                                   int patch_size) const {
  // Keyed on the key-free request so the API secret never reaches disk.
  const std::string url = build_url(location, patch_size, false);
  return (fs::path(cfg_.cache_dir) / (hex64(fnv1a64(url)) + ".png")).string();
}

OverheadPatch TileClient::fetch_online(const GeoLocation& location,
                                       int patch_size) {
  if (cfg_.cache_dir.empty())
    throw ConfigError("online tile fetching requires a cache_dir");
  const std::string cpath = cache_path(location, patch_size);

  auto load_cached = [&]() -> OverheadPatch {
    OverheadPatch patch;
    patch.pixels = read_png(cpath);
    if (patch.pixels.h != patch_size || patch.pixels.w != patch_size)
      patch.pixels = resize_bilinear(patch.pixels, patch_size, patch_size);
    patch.center = location;
    patch.patch_size = patch_size;
    return patch;
  };
  if (fs::exists(cpath)) return load_cached();

  const std::string url = build_url(location, patch_size, true);
  std::string host_port, path;
  split_url(url, host_port, path);

  httplib::Client cli(host_port);
  cli.set_connection_timeout(10);
  cli.set_read_timeout(30);
  httplib::Result res;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    res = cli.Get(path);
    if (res && res->status == 200) break;
  }
  if (!res)
    throw TileError("tile request failed (network): " + host_port, true);
  if (res->status != 200)
    throw TileError("tile request returned HTTP " + std::to_string(res->status),
                    res->status >= 500);

  fs::create_directories(cfg_.cache_dir);
  {
    std::mutex& lock =
        write_locks_[fnv1a64(cpath) % static_cast<std::uint64_t>(kLockStripes)];
    std::scoped_lock guard(lock);
    if (!fs::exists(cpath)) {
      const std::string tmp = cpath + ".tmp";
      {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open cache file: " + tmp);
        f.write(res->body.data(),
                static_cast<std::streamsize>(res->body.size()));
      }
      fs::rename(tmp, cpath);
    }
  }
  return load_cached();
}

}  // namespace groundgen::geo
