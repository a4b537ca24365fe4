#include "groundgen/plot.hpp"

#include <algorithm>
#include <cmath>

namespace groundgen::plot {

namespace {

void put(geo::ImageU8& img, int y, int x, const std::array<std::uint8_t, 3>& c) {
  if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
  for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[static_cast<std::size_t>(ch)];
}

void line(geo::ImageU8& img, int y0, int x0, int y1, int x1,
          const std::array<std::uint8_t, 3>& c) {
  const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    put(img, static_cast<int>(std::lround(y0 + t * (y1 - y0))),
        static_cast<int>(std::lround(x0 + t * (x1 - x0))), c);
  }
}

}  // namespace

geo::ImageU8 line_chart(const std::vector<Series>& series, int width,
                        int height) {
  geo::ImageU8 img(height, width, 3);
  std::fill(img.px.begin(), img.px.end(), 255);

  const int pad = 24;
  const std::array<std::uint8_t, 3> frame{160, 160, 160};
  line(img, pad, pad, pad, width - pad, frame);
  line(img, height - pad, pad, height - pad, width - pad, frame);
  line(img, pad, pad, height - pad, pad, frame);
  line(img, pad, width - pad, height - pad, width - pad, frame);

  double lo = 0.0, hi = 1.0;
  bool first = true;
  std::size_t max_n = 0;
  for (const auto& s : series) {
    max_n = std::max(max_n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  if (max_n < 2) max_n = 2;

  auto ypix = [&](double v) {
    const double t = (v - lo) / (hi - lo);
    return static_cast<int>(std::lround((height - pad) - t * (height - 2 * pad)));
  };
  auto xpix = [&](std::size_t i) {
    const double t = static_cast<double>(i) / static_cast<double>(max_n - 1);
    return static_cast<int>(std::lround(pad + t * (width - 2 * pad)));
  };

  int swatch_y = pad + 6;
  for (const auto& s : series) {
    for (std::size_t i = 1; i < s.values.size(); ++i) {
      if (!std::isfinite(s.values[i - 1]) || !std::isfinite(s.values[i])) continue;
      line(img, ypix(s.values[i - 1]), xpix(i - 1), ypix(s.values[i]), xpix(i),
           s.color);
    }
    for (int dy = 0; dy < 6; ++dy)
      for (int dx = 0; dx < 18; ++dx)
        put(img, swatch_y + dy, width - pad - 20 + dx, s.color);
    swatch_y += 10;
  }
  return img;
}

}  // namespace groundgen::plot
