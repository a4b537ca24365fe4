#ifndef GROUNDGEN_TILES_HPP
#define GROUNDGEN_TILES_HPP

#include <array>
#include <memory>
#include <mutex>
#include <string>

#include "groundgen/image.hpp"
#include "groundgen/imageio.hpp"

namespace groundgen::geo {

// Remote-imagery access. Online mode GETs a configurable URL template with
// {lat},{lon},{zoom},{size} placeholders (API key appended from an
// environment variable) and caches responses on disk keyed by a request
// hash. Offline mode crops from a georeferenced PNG mosaic + world file.
struct TileClientConfig {
  // Online endpoint; empty means offline-only.
  std::string url_template;
  std::string api_key_env;           // name of env var holding the key
  std::string api_key_param = "key"; // query parameter the key is sent as
  int zoom = 18;
  int max_retries = 2;

  std::string cache_dir;

  // Offline mosaic; a non-empty path enables offline mode.
  std::string mosaic_png;
  std::string mosaic_world;  // defaults to mosaic_png with a .pgw suffix
};

class TileClient {
 public:
  explicit TileClient(TileClientConfig cfg);

  // Returns the RGB patch centered at location. Repeated requests are
  // served from the cache. Network trouble throws TileError(retryable);
  // locations outside the offline mosaic throw CoverageError.
  OverheadPatch fetch(const GeoLocation& location,
                      int patch_size = kDefaultPatchSize);

  bool offline() const { return !cfg_.mosaic_png.empty(); }
  std::string cache_path(const GeoLocation& location, int patch_size) const;

 private:
  OverheadPatch fetch_offline(const GeoLocation& location, int patch_size);
  OverheadPatch fetch_online(const GeoLocation& location, int patch_size);
  std::string build_url(const GeoLocation& location, int patch_size,
                        bool with_key) const;

  TileClientConfig cfg_;

  std::once_flag mosaic_once_;
  std::unique_ptr<ImageU8> mosaic_;
  WorldFile world_;

  // Cache writes are serialized per key with striped locks.
  static constexpr int kLockStripes = 16;
  std::array<std::mutex, kLockStripes> write_locks_;
};

OverheadPatch fetch_overhead_patch(TileClient& client,
                                   const GeoLocation& location,
                                   int patch_size = kDefaultPatchSize);

}  // namespace groundgen::geo

#endif
