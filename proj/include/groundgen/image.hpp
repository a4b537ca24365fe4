#ifndef GROUNDGEN_IMAGE_HPP
#define GROUNDGEN_IMAGE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "groundgen/geo.hpp"

namespace groundgen::geo {

// 8-bit interleaved RGB image, row-major.
struct ImageU8 {
  int h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> px;

  ImageU8() = default;
  ImageU8(int h_, int w_, int c_)
      : h(h_), w(w_), c(c_),
        px(static_cast<std::size_t>(h_) * w_ * c_, 0) {}

  std::uint8_t& at(int y, int x, int ch) {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  std::uint8_t at(int y, int x, int ch) const {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }

  bool operator==(const ImageU8&) const = default;
};

// Bilinear resampling (pixel centers aligned); channels interpolated
// independently in double precision, rounded to nearest.
ImageU8 resize_bilinear(const ImageU8& src, int out_h, int out_w);

constexpr int kGroundImageSize = 64;
constexpr int kDefaultPatchSize = 10;

// Ground-level photo, stored post-resize at 64x64.
struct GroundImage {
  ImageU8 pixels;  // 64x64x3
  GeoLocation location;
  std::optional<LandCoverClass> label;

  void validate() const;
  bool operator==(const GroundImage&) const = default;
};

// Square overhead-imagery crop centered on a location.
struct OverheadPatch {
  ImageU8 pixels;  // patch_size x patch_size x 3
  GeoLocation center;
  int patch_size = kDefaultPatchSize;

  void validate() const;
  bool operator==(const OverheadPatch&) const = default;
};

// Co-located ground-level and overhead imagery with the owning grid cell.
struct PairedSample {
  GroundImage ground;
  OverheadPatch overhead;
  GridCell cell;

  void validate() const;
  bool operator==(const PairedSample&) const = default;
};

}  // namespace groundgen::geo

#endif
