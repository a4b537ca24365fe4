#ifndef GROUNDGEN_FEATURES_HPP
#define GROUNDGEN_FEATURES_HPP

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "groundgen/gan.hpp"

namespace groundgen::features {

// Learned representation of one location, read off the modified (sigmoid
// head removed, average-pooled) discriminator. 1024D at reference scale.
struct FeatureVector {
  Eigen::VectorXd values;
  std::optional<geo::GeoLocation> location;

  int dim() const { return static_cast<int>(values.size()); }
  void validate() const;
};

// Noise handling when featurizing an overhead patch through the generator.
// average-of-k (fixed seeds) is the default; k=1 degenerates to fixed-seed.
struct ZPolicy {
  enum class Kind { FixedZero, FixedSeed, AverageOfK };
  Kind kind = Kind::AverageOfK;
  int k = 4;
  std::uint64_t seed = 0;

  static ZPolicy fixed_zero() { return {Kind::FixedZero, 1, 0}; }
  static ZPolicy fixed_seed(std::uint64_t s) { return {Kind::FixedSeed, 1, s}; }
  static ZPolicy average_of_k(int k, std::uint64_t s) {
    return {Kind::AverageOfK, k, s};
  }
  std::string describe() const;
};

// Average-pooled activations entering the discriminator's output layer,
// batched. imgs: [B,3,64,64] in [-1,1]; emb rows match the discriminator.
Eigen::MatrixXd extract_feature_batch(gan::Discriminator& d,
                                      const nn::Tensor& imgs,
                                      const nn::Tensor& emb);

FeatureVector extract_feature(gan::Discriminator& d, const geo::ImageU8& img,
                              const embed::Embedding& e);

// Featurizes a bare overhead patch: embed it, generate a ground-level view
// (noise per policy), and pool the discriminator activations on the result.
FeatureVector extract_feature_from_overhead(gan::Generator& g,
                                            gan::Discriminator& d,
                                            const geo::OverheadPatch& patch,
                                            const embed::Embedder& embedder,
                                            const ZPolicy& z_policy);

// Batched pipeline over samples; features keep the sample locations.
std::vector<FeatureVector> extract_features_from_overheads(
    gan::Generator& g, gan::Discriminator& d,
    const std::vector<geo::PairedSample>& samples,
    const embed::Embedder& embedder, const ZPolicy& z_policy,
    int batch_size = 32);

// The alternative path: featurize the real ground-level images instead of
// generated ones (both readings of the protocol are supported).
std::vector<FeatureVector> extract_features_from_ground_images(
    gan::Discriminator& d, const std::vector<geo::PairedSample>& samples,
    const embed::Embedder& embedder, int batch_size = 32);

// CSV: header "lat,lon,f0..fD-1", one feature per row, full precision.
void save_features_csv(const std::string& path,
                       const std::vector<FeatureVector>& feats);
std::vector<FeatureVector> load_features_csv(const std::string& path);

// Flat binary variant with a text header.
void save_features_bin(const std::string& path,
                       const std::vector<FeatureVector>& feats);
std::vector<FeatureVector> load_features_bin(const std::string& path);

Eigen::MatrixXd feature_matrix(const std::vector<FeatureVector>& feats);

}  // namespace groundgen::features

#endif
