#include "groundgen/image.hpp"

#include <algorithm>
#include <cmath>

namespace groundgen::geo {

ImageU8 resize_bilinear(const ImageU8& src, int out_h, int out_w) {
  if (src.h < 1 || src.w < 1 || src.c < 1)
    throw DimensionError("resize_bilinear: empty source image");
  if (out_h < 1 || out_w < 1)
    throw DimensionError("resize_bilinear: empty target size");
  ImageU8 dst(out_h, out_w, src.c);
  const double sy = static_cast<double>(src.h) / out_h;
  const double sx = static_cast<double>(src.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < src.c; ++ch) {
        const double top = (1.0 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch);
        const double bot = (1.0 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch);
        const double v = (1.0 - wy) * top + wy * bot;
        dst.at(y, x, ch) = static_cast<std::uint8_t>(
            std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return dst;
}

void GroundImage::validate() const {
  if (pixels.h != kGroundImageSize || pixels.w != kGroundImageSize ||
      pixels.c != 3)
    throw DimensionError("ground image must be 64x64x3 after preprocessing");
  location.validate();
}

void OverheadPatch::validate() const {
  if (patch_size < 1) throw DimensionError("patch_size must be positive");
  if (pixels.h != patch_size || pixels.w != patch_size || pixels.c != 3)
    throw DimensionError("overhead patch must be patch_size x patch_size x 3");
  center.validate();
}

void PairedSample::validate() const {
  ground.validate();
  overhead.validate();
  if (!cell.bounds.contains(overhead.center))
    throw OutOfBoundsError("overhead patch center outside its grid cell");
  if (!cell.bounds.contains(ground.location))
    throw OutOfBoundsError("ground image location outside its grid cell");
}

}  // namespace groundgen::geo
