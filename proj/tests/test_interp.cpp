#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "groundgen/interp.hpp"
#include "groundgen/rng.hpp"

using namespace groundgen;
using namespace groundgen::interp;

namespace {

// Places a point `km` kilometers east of the origin along the equator,
// where the haversine distance is exactly R * delta_lon.
geo::GeoLocation east_of_origin(double km) {
  constexpr double kEarthRadiusKm = 6371.0088;
  return {0.0, km / kEarthRadiusKm * 180.0 / 3.14159265358979323846};
}

SparseFeatureField scalar_field(const std::vector<geo::GeoLocation>& locs,
                                const std::vector<double>& values,
                                double sigma) {
  SparseFeatureField f;
  f.locations = locs;
  f.features.resize(static_cast<long>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i)
    f.features(static_cast<long>(i), 0) = values[i];
  f.sigma_km = sigma;
  return f;
}

}  // namespace

TEST_CASE("single anchor returns its feature exactly") {
  const auto f = scalar_field({{10.0, 20.0}}, {3.25}, 2.0);
  CHECK(interpolate(f, {10.5, 20.5})[0] == 3.25);
  CHECK(interpolate(f, {10.0, 20.0})[0] == 3.25);
}

TEST_CASE("equidistant anchors with equal features return that feature") {
  const auto f =
      scalar_field({east_of_origin(1.0), east_of_origin(-1.0)}, {7.5, 7.5}, 1.0);
  CHECK(interpolate(f, {0.0, 0.0})[0] == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("two-anchor weights reproduce the closed-form value") {
  // Anchors 1 km and 2 km from the query with sigma = 1:
  // w1 = e^{-0.5} / (e^{-0.5} + e^{-2}) = 0.8176...
  const auto f =
      scalar_field({east_of_origin(1.0), east_of_origin(2.0)}, {1.0, 0.0}, 1.0);
  const double w1 = interpolate(f, {0.0, 0.0})[0];
  CHECK(w1 == doctest::Approx(0.8176).epsilon(1e-4));
  const double expect = std::exp(-0.5) / (std::exp(-0.5) + std::exp(-2.0));
  CHECK(w1 == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("kernel weights are nonnegative and sum to one") {
  Rng rng(61);
  SparseFeatureField f;
  for (int i = 0; i < 25; ++i) {
    f.locations.push_back({rng.uniform(50.0, 50.2), rng.uniform(-0.2, 0.0)});
  }
  f.features = Eigen::MatrixXd::Random(25, 4);
  f.sigma_km = 2.0;
  for (int t = 0; t < 2000; ++t) {
    const geo::GeoLocation q{rng.uniform(50.0, 50.2), rng.uniform(-0.2, 0.0)};
    bool underflow = false;
    const Eigen::VectorXd w = kernel_weights(f, q, underflow);
    REQUIRE(!underflow);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(std::abs(w.sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("interpolation contracts into the convex hull per coordinate") {
  Rng rng(62);
  SparseFeatureField f;
  for (int i = 0; i < 10; ++i)
    f.locations.push_back({rng.uniform(0.0, 0.1), rng.uniform(0.0, 0.1)});
  f.features = Eigen::MatrixXd::Random(10, 3);
  f.sigma_km = 1.0;
  for (int t = 0; t < 500; ++t) {
    const geo::GeoLocation q{rng.uniform(-0.05, 0.15), rng.uniform(-0.05, 0.15)};
    const Eigen::VectorXd v = interpolate(f, q);
    for (int j = 0; j < 3; ++j) {
      CHECK(v[j] >= f.features.col(j).minCoeff() - 1e-12);
      CHECK(v[j] <= f.features.col(j).maxCoeff() + 1e-12);
    }
  }
}

TEST_CASE("vanishing bandwidth converges to the nearest anchor") {
  Rng rng(63);
  SparseFeatureField f;
  for (int i = 0; i < 12; ++i)
    f.locations.push_back({rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)});
  f.features = Eigen::MatrixXd::Random(12, 2);
  f.sigma_km = 1e-6;
  for (int t = 0; t < 200; ++t) {
    const geo::GeoLocation q{rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)};
    // Nearest-neighbor oracle.
    int best = 0;
    double best_d = 1e300;
    for (int i = 0; i < 12; ++i) {
      const double d = geo::haversine_km(q, f.locations[static_cast<std::size_t>(i)]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    const Eigen::VectorXd v = interpolate(f, q);
    CHECK((v - f.features.row(best).transpose()).lpNorm<Eigen::Infinity>() <
          1e-9);
  }
}

TEST_CASE("planar metric approximates great-circle over short ranges") {
  const geo::GeoLocation a{51.0, -0.5}, b{51.01, -0.49};
  const double gc = distance_km(a, b, DistanceMetric::GreatCircle);
  const double pl = distance_km(a, b, DistanceMetric::PlanarEquirect);
  CHECK(pl == doctest::Approx(gc).epsilon(1e-4));
}

TEST_CASE("interpolate_then_classify composes probe and field") {
  Rng rng(64);
  // Anchors carry 2D features; class 1 when the first coordinate > 0.
  Eigen::MatrixXd Xtr(40, 2);
  std::vector<int> ytr;
  for (int i = 0; i < 40; ++i) {
    Xtr(i, 0) = i < 20 ? rng.uniform(-3.0, -1.0) : rng.uniform(1.0, 3.0);
    Xtr(i, 1) = rng.uniform(-1.0, 1.0);
    ytr.push_back(i < 20 ? 0 : 1);
  }
  const auto probe = probes::train_probe(Xtr, ytr, probes::SvmHyper{});

  SUBCASE("constant field sends every query to probe(f)") {
    SparseFeatureField f;
    f.locations = {{0.0, 0.0}, {0.0, 0.1}};
    f.features.resize(2, 2);
    f.features << 2.0, 0.0, 2.0, 0.0;
    f.sigma_km = 2.0;
    const auto labels = interpolate_then_classify(
        f, probe, {{0.0, 0.05}, {0.02, 0.03}, {0.0, 0.0}});
    for (int v : labels) CHECK(v == 1);
  }

  SUBCASE("tiny sigma at an anchor reproduces the anchor's class") {
    SparseFeatureField f;
    f.locations = {{0.0, 0.0}, {0.0, 0.1}};
    f.features.resize(2, 2);
    f.features << -2.0, 0.0, 2.0, 0.0;
    f.sigma_km = 1e-6;
    const auto labels =
        interpolate_then_classify(f, probe, {{0.0, 0.0}, {0.0, 0.1}});
    CHECK(labels[0] == 0);
    CHECK(labels[1] == 1);
  }

  SUBCASE("dimension mismatches are rejected") {
    SparseFeatureField f;
    f.locations = {{0.0, 0.0}};
    f.features = Eigen::MatrixXd::Random(1, 5);
    f.sigma_km = 1.0;
    CHECK_THROWS_AS(interpolate_then_classify(f, probe, {{0.0, 0.0}}),
                    DimensionError);
  }
}

TEST_CASE("field validation rejects bad inputs") {
  SparseFeatureField f;
  CHECK_THROWS_AS(f.validate(), ConfigError);
  f.locations = {{0, 0}};
  f.features = Eigen::MatrixXd::Random(1, 2);
  f.sigma_km = 0.0;
  CHECK_THROWS_AS(f.validate(), ConfigError);
  f.sigma_km = 1.0;
  f.validate();
}
