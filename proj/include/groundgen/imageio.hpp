#ifndef GROUNDGEN_IMAGEIO_HPP
#define GROUNDGEN_IMAGEIO_HPP

#include <string>
#include <vector>

#include "groundgen/image.hpp"

namespace groundgen::geo {

// PNG codec. Encoding parameters are fixed so identical pixels always produce
// identical bytes.
std::vector<std::uint8_t> encode_png(const ImageU8& img);
ImageU8 decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

// Six-coefficient ESRI world file georeferencing a raster. Maps pixel
// (col, row) centers to geographic coordinates:
//   lon = a*col + b*row + c,  lat = d*col + e*row + f
struct WorldFile {
  double a = 0, b = 0, d = 0, e = 0, c = 0, f = 0;

  GeoLocation pixel_to_geo(double col, double row) const {
    return {d * col + e * row + f, a * col + b * row + c};
  }
  // Inverse for axis-aligned files (b == d == 0).
  void geo_to_pixel(const GeoLocation& p, double& col, double& row) const;

  static WorldFile read(const std::string& path);
  void write(const std::string& path) const;
};

}  // namespace groundgen::geo

#endif
