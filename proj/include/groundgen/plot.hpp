#ifndef GROUNDGEN_PLOT_HPP
#define GROUNDGEN_PLOT_HPP

#include <array>
#include <string>
#include <vector>

#include "groundgen/image.hpp"

namespace groundgen::plot {

struct Series {
  std::string name;
  std::vector<double> values;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

// Minimal line chart: white canvas, gray frame, one polyline per series,
// color swatches in the top-right corner. Deterministic pixels.
geo::ImageU8 line_chart(const std::vector<Series>& series, int width = 640,
                        int height = 360);

}  // namespace groundgen::plot

#endif
