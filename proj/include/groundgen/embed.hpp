#ifndef GROUNDGEN_EMBED_HPP
#define GROUNDGEN_EMBED_HPP

#include <Eigen/Core>

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "groundgen/common.hpp"
#include "groundgen/image.hpp"

namespace groundgen::embed {

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

enum class EmbeddingKind { Grayscale, Hsv, Cnn };

std::string to_string(EmbeddingKind k);
EmbeddingKind embedding_kind_from_string(const std::string& s);

// 1D conditioning vector for one overhead patch; every value in [-1, 1].
struct Embedding {
  Eigen::VectorXd values;
  EmbeddingKind kind = EmbeddingKind::Grayscale;

  int nef() const { return static_cast<int>(values.size()); }
  void validate() const;
};

constexpr int kGrayscaleDim = 100;
constexpr int kHsvDim = 300;
constexpr int kCnnDim = 25;
constexpr int kDescriptorDim = 1024;

// Per pixel, the RGB mean rescaled to [-1, 1]; row-major flattening. 100D.
Embedding embed_grayscale(const geo::OverheadPatch& patch);

// Per pixel, standard RGB->HSV with H in [0,360) (achromatic pixels get
// H = 0), each channel rescaled affinely to [-1, 1]; channel-interleaved,
// row-major. 300D.
Embedding embed_hsv(const geo::OverheadPatch& patch);

// Mean-centered principal components of a descriptor set, ordered by
// descending explained variance. Component rows are orthonormal; each row's
// largest-magnitude coordinate is made positive so repeated fits agree.
class PcaProjection {
 public:
  PcaProjection() = default;

  static PcaProjection fit(const Eigen::MatrixXd& features,
                           int out_dim = kCnnDim);

  bool fitted() const { return fitted_; }
  int in_dim() const { return static_cast<int>(mean_.size()); }
  int out_dim() const { return static_cast<int>(components_.rows()); }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& components() const { return components_; }
  const Eigen::VectorXd& proj_min() const { return proj_min_; }
  const Eigen::VectorXd& proj_max() const { return proj_max_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  void save(const std::string& path) const;
  static PcaProjection load(const std::string& path);

 private:
  bool fitted_ = false;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd components_;           // out_dim x in_dim
  Eigen::VectorXd proj_min_, proj_max_;  // train-set range per coordinate
  std::uint64_t fingerprint_ = 0;
};

// Fixed-descriptor encoder contract for the CNN embedding. The paper-scale
// pretrained encoder is not shipped; the default is a seeded random
// convolutional encoder with the same 1024D descriptor contract.
class PatchEncoder {
 public:
  virtual ~PatchEncoder() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd descriptor(const geo::OverheadPatch& patch) const = 0;
  virtual std::string recipe() const = 0;
};

// Three conv+relu stages ending in global average pooling over 1024
// channels. Weights are drawn once from the seed and never trained.
class SeededConvEncoder : public PatchEncoder {
 public:
  explicit SeededConvEncoder(std::uint64_t seed);
  ~SeededConvEncoder() override;

  int dim() const override { return kDescriptorDim; }
  Eigen::VectorXd descriptor(const geo::OverheadPatch& patch) const override;
  std::string recipe() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint64_t seed_;
};

std::shared_ptr<PatchEncoder> make_default_encoder(std::uint64_t seed);

// Projects the encoder descriptor through the fitted PCA and rescales each
// coordinate to [-1, 1] with the train-set range. Out-of-range test values
// are clamped and counted.
Embedding embed_cnn(const geo::OverheadPatch& patch, const PatchEncoder& encoder,
                    const PcaProjection& pca,
                    std::atomic<long>* clamp_count = nullptr,
                    std::atomic<long>* total_count = nullptr);

// Uniform handle over the three embedding functions.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingKind kind() const = 0;
  virtual int nef() const = 0;
  virtual Embedding operator()(const geo::OverheadPatch& patch) const = 0;
};

class GrayscaleEmbedder : public Embedder {
 public:
  EmbeddingKind kind() const override { return EmbeddingKind::Grayscale; }
  int nef() const override { return kGrayscaleDim; }
  Embedding operator()(const geo::OverheadPatch& p) const override {
    return embed_grayscale(p);
  }
};

class HsvEmbedder : public Embedder {
 public:
  EmbeddingKind kind() const override { return EmbeddingKind::Hsv; }
  int nef() const override { return kHsvDim; }
  Embedding operator()(const geo::OverheadPatch& p) const override {
    return embed_hsv(p);
  }
};

class CnnEmbedder : public Embedder {
 public:
  CnnEmbedder(std::shared_ptr<PatchEncoder> encoder, PcaProjection pca);

  EmbeddingKind kind() const override { return EmbeddingKind::Cnn; }
  int nef() const override { return kCnnDim; }
  Embedding operator()(const geo::OverheadPatch& p) const override;

  // Fraction of projected coordinates clamped so far; logged by callers.
  double clamp_rate() const;

 private:
  std::shared_ptr<PatchEncoder> encoder_;
  PcaProjection pca_;
  mutable std::atomic<long> clamped_{0};
  mutable std::atomic<long> total_{0};
};

}  // namespace groundgen::embed

#endif
