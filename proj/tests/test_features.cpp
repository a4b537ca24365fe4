#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "groundgen/dataset.hpp"
#include "groundgen/features.hpp"
#include "groundgen/rng.hpp"

using namespace groundgen;
using namespace groundgen::features;
namespace fs = std::filesystem;

namespace {

gan::GanArch tiny_arch() {
  gan::GanArch a;
  a.nef = embed::kGrayscaleDim;
  a.base_channels = 32;
  return a;
}

std::vector<geo::PairedSample> tiny_world() {
  geo::SyntheticWorldSpec spec;
  spec.grid_h = spec.grid_w = 2;
  spec.images_per_cell = 2;
  spec.seed = 81;
  return geo::generate_synthetic_world(spec).samples;
}

}  // namespace

TEST_CASE("feature head pools the activations entering the output layer") {
  const auto arch = tiny_arch();
  gan::Discriminator d(arch, 82);
  // Zero everything, then give the batchnorm in front of the output conv a
  // constant shift: the pooled activation map is exactly that constant.
  auto params = d.params();
  for (auto& p : params) std::fill(p.value->begin(), p.value->end(), 0.0);
  for (auto& p : params)
    if (p.name == "d.trunk.7.beta")
      std::fill(p.value->begin(), p.value->end(), 0.7);

  const auto samples = tiny_world();
  embed::GrayscaleEmbedder embedder;
  const FeatureVector f =
      extract_feature(d, samples[0].ground.pixels, embedder(samples[0].overhead));
  CHECK(f.dim() == arch.feature_dim());
  for (int j = 0; j < f.dim(); ++j)
    CHECK(f.values[j] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("identical inputs give identical features") {
  const auto arch = tiny_arch();
  gan::Discriminator d(arch, 83);
  const auto samples = tiny_world();
  embed::GrayscaleEmbedder embedder;
  const auto e = embedder(samples[0].overhead);
  const FeatureVector a = extract_feature(d, samples[0].ground.pixels, e);
  const FeatureVector b = extract_feature(d, samples[0].ground.pixels, e);
  CHECK(a.values == b.values);
  a.validate();
}

TEST_CASE("overhead featurization is deterministic under fixed policies") {
  const auto arch = tiny_arch();
  gan::Generator g(arch, 84);
  gan::Discriminator d(arch, 85);
  const auto samples = tiny_world();
  embed::GrayscaleEmbedder embedder;

  const auto zp = ZPolicy::fixed_seed(7);
  const FeatureVector a =
      extract_feature_from_overhead(g, d, samples[0].overhead, embedder, zp);
  const FeatureVector b =
      extract_feature_from_overhead(g, d, samples[0].overhead, embedder, zp);
  CHECK(a.values == b.values);
  CHECK(a.location.has_value());
  CHECK(a.location->lat == samples[0].overhead.center.lat);

  // average-of-1 with the same seed equals fixed-seed.
  const FeatureVector c = extract_feature_from_overhead(
      g, d, samples[0].overhead, embedder, ZPolicy::average_of_k(1, 7));
  CHECK(c.values == a.values);
}

TEST_CASE("equal embeddings give equal features under fixed noise") {
  const auto arch = tiny_arch();
  gan::Generator g(arch, 86);
  gan::Discriminator d(arch, 87);
  const auto samples = tiny_world();
  embed::GrayscaleEmbedder embedder;

  // Two patch objects with identical pixels at different centers.
  geo::OverheadPatch p1 = samples[0].overhead;
  geo::OverheadPatch p2 = p1;
  p2.center = {p1.center.lat + 0.001, p1.center.lon};

  const auto zp = ZPolicy::fixed_zero();
  const FeatureVector a = extract_feature_from_overhead(g, d, p1, embedder, zp);
  const FeatureVector b = extract_feature_from_overhead(g, d, p2, embedder, zp);
  CHECK(a.values == b.values);
}

TEST_CASE("batched extraction agrees with the single-sample path") {
  const auto arch = tiny_arch();
  gan::Generator g(arch, 88);
  gan::Discriminator d(arch, 89);
  const auto samples = tiny_world();
  embed::GrayscaleEmbedder embedder;
  const auto zp = ZPolicy::average_of_k(2, 11);

  const auto batched =
      extract_features_from_overheads(g, d, samples, embedder, zp, 3);
  REQUIRE(batched.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const FeatureVector single = extract_feature_from_overhead(
        g, d, samples[i].overhead, embedder, zp);
    CHECK((batched[i].values - single.values).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("real-image featurization covers every sample") {
  const auto arch = tiny_arch();
  gan::Discriminator d(arch, 90);
  const auto samples = tiny_world();
  embed::GrayscaleEmbedder embedder;
  const auto feats = extract_features_from_ground_images(d, samples, embedder, 3);
  REQUIRE(feats.size() == samples.size());
  for (const auto& f : feats) {
    CHECK(f.dim() == arch.feature_dim());
    f.validate();
  }
}

TEST_CASE("feature csv and binary round trips") {
  Rng rng(91);
  std::vector<FeatureVector> feats;
  for (int i = 0; i < 7; ++i) {
    FeatureVector f;
    f.values.resize(5);
    for (int j = 0; j < 5; ++j) f.values[j] = rng.normal();
    f.location = geo::GeoLocation{rng.uniform(-80, 80), rng.uniform(-170, 170)};
    feats.push_back(std::move(f));
  }
  const auto dir = fs::temp_directory_path() / "gg_feat_test";
  fs::create_directories(dir);

  const std::string csv = (dir / "f.csv").string();
  save_features_csv(csv, feats);
  const auto back = load_features_csv(csv);
  REQUIRE(back.size() == feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    CHECK(back[i].values == feats[i].values);
    CHECK(back[i].location->lat == feats[i].location->lat);
    CHECK(back[i].location->lon == feats[i].location->lon);
  }

  const std::string bin = (dir / "f.bin").string();
  save_features_bin(bin, feats);
  const auto back2 = load_features_bin(bin);
  REQUIRE(back2.size() == feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i)
    CHECK(back2[i].values == feats[i].values);
  fs::remove_all(dir);
}

TEST_CASE("feature matrix stacking validates dimensions") {
  FeatureVector a, b;
  a.values.resize(3);
  b.values.resize(4);
  CHECK_THROWS_AS(feature_matrix({a, b}), DimensionError);
  CHECK_THROWS_AS(feature_matrix({}), DimensionError);
}
