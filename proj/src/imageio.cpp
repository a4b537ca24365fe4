#include "groundgen/imageio.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <fstream>

namespace groundgen::geo {

namespace {

cv::Mat to_bgr_mat(const ImageU8& img) {
  if (img.c != 3) throw DimensionError("PNG codec expects 3-channel RGB");
  cv::Mat m(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      auto& px = m.at<cv::Vec3b>(y, x);
      px[0] = img.at(y, x, 2);
      px[1] = img.at(y, x, 1);
      px[2] = img.at(y, x, 0);
    }
  return m;
}

ImageU8 from_mat(const cv::Mat& m) {
  if (m.empty()) throw IoError("PNG decode produced an empty image");
  ImageU8 img(m.rows, m.cols, 3);
  if (m.type() == CV_8UC3) {
    for (int y = 0; y < m.rows; ++y)
      for (int x = 0; x < m.cols; ++x) {
        const auto& px = m.at<cv::Vec3b>(y, x);
        img.at(y, x, 0) = px[2];
        img.at(y, x, 1) = px[1];
        img.at(y, x, 2) = px[0];
      }
  } else if (m.type() == CV_8UC1) {
    for (int y = 0; y < m.rows; ++y)
      for (int x = 0; x < m.cols; ++x) {
        const std::uint8_t v = m.at<std::uint8_t>(y, x);
        img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = v;
      }
  } else {
    throw IoError("unsupported PNG pixel format");
  }
  return img;
}

const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 3};

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_bgr_mat(img), out, kPngParams))
    throw IoError("PNG encode failed");
  return out;
}

ImageU8 decode_png(const std::vector<std::uint8_t>& bytes) {
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
  if (m.type() == CV_8UC4) {
    cv::Mat rgb;
    cv::mixChannels({m}, {rgb = cv::Mat(m.rows, m.cols, CV_8UC3)},
                    {0, 0, 1, 1, 2, 2});
    m = rgb;
  }
  return from_mat(m);
}

void write_png(const std::string& path, const ImageU8& img) {
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write: " + path);
}

ImageU8 read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void WorldFile::geo_to_pixel(const GeoLocation& p, double& col,
                             double& row) const {
  if (b != 0.0 || d != 0.0)
    throw ConfigError("rotated world files are not supported");
  if (a == 0.0 || e == 0.0) throw ConfigError("degenerate world file");
  col = (p.lon - c) / a;
  row = (p.lat - f) / e;
}

WorldFile WorldFile::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world file: " + path);
  WorldFile w;
  // ESRI order: A, D, B, E, C, F.
  if (!(in >> w.a >> w.d >> w.b >> w.e >> w.c >> w.f))
    throw ParseError("world file must contain six numbers: " + path);
  return w;
}

void WorldFile::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.precision(17);
  out << a << "\n" << d << "\n" << b << "\n" << e << "\n" << c << "\n" << f
      << "\n";
}

}  // namespace groundgen::geo
