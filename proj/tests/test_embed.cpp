#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "groundgen/embed.hpp"
#include "groundgen/rng.hpp"

using namespace groundgen;
using namespace groundgen::embed;

namespace {

geo::OverheadPatch uniform_patch(std::uint8_t r, std::uint8_t g,
                                 std::uint8_t b) {
  geo::OverheadPatch p;
  p.pixels = geo::ImageU8(10, 10, 3);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      p.pixels.at(y, x, 0) = r;
      p.pixels.at(y, x, 1) = g;
      p.pixels.at(y, x, 2) = b;
    }
  return p;
}

geo::OverheadPatch random_patch(Rng& rng) {
  geo::OverheadPatch p;
  p.pixels = geo::ImageU8(10, 10, 3);
  for (auto& v : p.pixels.px) v = static_cast<std::uint8_t>(rng.below(256));
  return p;
}

// Alternative RGB->HSV path (hexcone construction via sector lookup) used
// as the conversion oracle.
void oracle_hsv(double r, double g, double b, double& h, double& s, double& v) {
  v = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = v - mn;
  s = v == 0.0 ? 0.0 : d / v;
  if (d == 0.0) {
    h = 0.0;
    return;
  }
  double hp;
  if (v == r)
    hp = std::fmod((g - b) / d + 6.0, 6.0);
  else if (v == g)
    hp = (b - r) / d + 2.0;
  else
    hp = (r - g) / d + 4.0;
  h = 60.0 * hp;
  if (h >= 360.0) h -= 360.0;
}

}  // namespace

TEST_CASE("grayscale embedding endpoints and arithmetic") {
  const Embedding white = embed_grayscale(uniform_patch(255, 255, 255));
  CHECK(white.nef() == 100);
  for (long i = 0; i < 100; ++i) CHECK(white.values[i] == 1.0);

  const Embedding black = embed_grayscale(uniform_patch(0, 0, 0));
  for (long i = 0; i < 100; ++i) CHECK(black.values[i] == -1.0);

  // mean(30,60,90) = 60, 2*60/255 - 1
  const Embedding mid = embed_grayscale(uniform_patch(30, 60, 90));
  for (long i = 0; i < 100; ++i)
    CHECK(mid.values[i] == doctest::Approx(-0.5294117647058824).epsilon(1e-12));
}

TEST_CASE("grayscale flattening is row-major") {
  geo::OverheadPatch p = uniform_patch(0, 0, 0);
  p.pixels.at(0, 3, 0) = p.pixels.at(0, 3, 1) = p.pixels.at(0, 3, 2) = 255;
  p.pixels.at(2, 0, 0) = p.pixels.at(2, 0, 1) = p.pixels.at(2, 0, 2) = 255;
  const Embedding e = embed_grayscale(p);
  CHECK(e.values[3] == 1.0);
  CHECK(e.values[20] == 1.0);
  CHECK(e.values[0] == -1.0);
}

TEST_CASE("hsv embedding endpoints") {
  const Embedding black = embed_hsv(uniform_patch(0, 0, 0));
  CHECK(black.nef() == 300);
  for (long i = 0; i < 300; ++i) CHECK(black.values[i] == -1.0);

  const Embedding red = embed_hsv(uniform_patch(255, 0, 0));
  for (int px = 0; px < 100; ++px) {
    CHECK(red.values[3 * px + 0] == -1.0);  // H = 0
    CHECK(red.values[3 * px + 1] == 1.0);   // S = 1
    CHECK(red.values[3 * px + 2] == 1.0);   // V = 1
  }

  const Embedding gray = embed_hsv(uniform_patch(128, 128, 128));
  for (int px = 0; px < 100; ++px) {
    CHECK(gray.values[3 * px + 0] == -1.0);
    CHECK(gray.values[3 * px + 1] == -1.0);
    CHECK(gray.values[3 * px + 2] ==
          doctest::Approx(2.0 * 128.0 / 255.0 - 1.0).epsilon(1e-12));
  }
}

TEST_CASE("hsv embedding agrees with an independent conversion oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = static_cast<std::uint8_t>(rng.below(256));
    const auto g = static_cast<std::uint8_t>(rng.below(256));
    const auto b = static_cast<std::uint8_t>(rng.below(256));
    const Embedding e = embed_hsv(uniform_patch(r, g, b));
    double h, s, v;
    oracle_hsv(r / 255.0, g / 255.0, b / 255.0, h, s, v);
    CHECK(e.values[0] == doctest::Approx(2.0 * h / 360.0 - 1.0).epsilon(1e-9));
    CHECK(e.values[1] == doctest::Approx(2.0 * s - 1.0).epsilon(1e-9));
    CHECK(e.values[2] == doctest::Approx(2.0 * v - 1.0).epsilon(1e-9));
  }
}

TEST_CASE("embeddings are pixel-permutation equivariant") {
  Rng rng(32);
  geo::OverheadPatch p = random_patch(rng);
  geo::OverheadPatch q = p;
  // Swap pixels (0,0) and (5, 7).
  for (int c = 0; c < 3; ++c)
    std::swap(q.pixels.at(0, 0, c), q.pixels.at(5, 7, c));
  const Embedding ep = embed_grayscale(p), eq = embed_grayscale(q);
  CHECK(ep.values[0] == eq.values[57]);
  CHECK(ep.values[57] == eq.values[0]);
  const Embedding hp = embed_hsv(p), hq = embed_hsv(q);
  for (int c = 0; c < 3; ++c) {
    CHECK(hp.values[c] == hq.values[3 * 57 + c]);
    CHECK(hp.values[3 * 57 + c] == hq.values[c]);
  }
}

TEST_CASE("embedding dimensions and range over random patches") {
  Rng rng(33);
  for (int i = 0; i < 300; ++i) {
    const auto p = random_patch(rng);
    const Embedding g = embed_grayscale(p);
    const Embedding h = embed_hsv(p);
    CHECK(g.nef() == 100);
    CHECK(h.nef() == 300);
    g.validate();
    h.validate();
  }
}

TEST_CASE("wrong patch size is a dimension error") {
  geo::OverheadPatch p;
  p.pixels = geo::ImageU8(8, 8, 3);
  p.patch_size = 8;
  CHECK_THROWS_AS(embed_grayscale(p), DimensionError);
  CHECK_THROWS_AS(embed_hsv(p), DimensionError);
}

TEST_CASE("pca basics: centering, orthonormality, determinism") {
  Rng rng(34);
  Eigen::MatrixXd X(60, 40);
  for (long i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();

  const PcaProjection p = PcaProjection::fit(X, 10);
  CHECK(p.fitted());
  CHECK(p.out_dim() == 10);

  // Projecting the training mean gives the zero vector.
  const Eigen::VectorXd z = p.project(X.colwise().mean());
  CHECK(z.lpNorm<Eigen::Infinity>() < 1e-9);

  // Component rows orthonormal.
  const Eigen::MatrixXd gram = p.components() * p.components().transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(10, 10)).lpNorm<Eigen::Infinity>() <
        1e-6);

  // Projected training data has zero mean per coordinate.
  Eigen::MatrixXd proj(X.rows(), 10);
  for (long i = 0; i < X.rows(); ++i)
    proj.row(i) = p.project(X.row(i).transpose()).transpose();
  CHECK(proj.colwise().mean().lpNorm<Eigen::Infinity>() < 1e-9);

  const PcaProjection q = PcaProjection::fit(X, 10);
  CHECK(p.components() == q.components());
  CHECK(p.mean() == q.mean());
}

TEST_CASE("pca reconstructs exact-rank data (svd oracle)") {
  Rng rng(35);
  Eigen::MatrixXd A(80, 25), B(25, 100);
  for (long i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
  for (long i = 0; i < B.size(); ++i) B.data()[i] = rng.normal();
  const Eigen::MatrixXd X = A * B;  // rank 25 by construction

  const PcaProjection p = PcaProjection::fit(X, 25);
  Eigen::MatrixXd rec(X.rows(), X.cols());
  for (long i = 0; i < X.rows(); ++i)
    rec.row(i) = (p.mean() +
                  p.components().transpose() * p.project(X.row(i).transpose()))
                     .transpose();
  CHECK((rec - X).norm() / X.norm() < 1e-6);
}

TEST_CASE("pca rejects too few samples") {
  Eigen::MatrixXd X(10, 50);
  X.setRandom();
  CHECK_THROWS_AS(PcaProjection::fit(X, 25), InsufficientSamplesError);
}

TEST_CASE("pca round-trips through its file format") {
  Rng rng(36);
  Eigen::MatrixXd X(40, 30);
  for (long i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const PcaProjection p = PcaProjection::fit(X, 5);
  const auto dir = std::filesystem::temp_directory_path() / "gg_pca_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "p.pca").string();
  p.save(path);
  const PcaProjection q = PcaProjection::load(path);
  CHECK(q.mean() == p.mean());
  CHECK(q.components() == p.components());
  CHECK(q.proj_min() == p.proj_min());
  CHECK(q.proj_max() == p.proj_max());
  CHECK(q.fingerprint() == p.fingerprint());
  std::filesystem::remove_all(dir);
}

TEST_CASE("cnn embedding contract: 25D in [-1,1], deterministic") {
  Rng rng(37);
  auto encoder = make_default_encoder(99);

  Eigen::MatrixXd D(40, kDescriptorDim);
  std::vector<geo::OverheadPatch> train;
  for (int i = 0; i < 40; ++i) {
    train.push_back(random_patch(rng));
    D.row(i) = encoder->descriptor(train.back()).transpose();
  }
  const PcaProjection pca = PcaProjection::fit(D, kCnnDim);
  const CnnEmbedder embedder(encoder, pca);

  for (int i = 0; i < 20; ++i) {
    const auto p = random_patch(rng);
    const Embedding e = embedder(p);
    CHECK(e.nef() == kCnnDim);
    e.validate();
    const Embedding e2 = embedder(p);
    CHECK(e.values == e2.values);
  }

  // Training patches embed strictly inside the scale; the patch attaining
  // the train-set max in a coordinate hits exactly +1.
  Eigen::MatrixXd proj(40, kCnnDim);
  for (int i = 0; i < 40; ++i)
    proj.row(i) = pca.project(D.row(i).transpose()).transpose();
  long imax;
  proj.col(0).maxCoeff(&imax);
  const Embedding top = embedder(train[static_cast<std::size_t>(imax)]);
  CHECK(top.values[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cnn embedding requires a fitted pca") {
  auto encoder = make_default_encoder(1);
  PcaProjection unfitted;
  Rng rng(38);
  const auto p = random_patch(rng);
  CHECK_THROWS_AS(embed_cnn(p, *encoder, unfitted), StateError);
}

TEST_CASE("seeded encoder is reproducible across instances") {
  Rng rng(39);
  const auto p = random_patch(rng);
  SeededConvEncoder a(1234), b(1234), c(77);
  CHECK(a.descriptor(p) == b.descriptor(p));
  CHECK(a.descriptor(p) != c.descriptor(p));
}
