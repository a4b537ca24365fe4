#ifndef GROUNDGEN_GAN_HPP
#define GROUNDGEN_GAN_HPP

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "groundgen/embed.hpp"
#include "groundgen/image.hpp"
#include "groundgen/nn.hpp"

namespace groundgen::gan {

constexpr int kNoiseDim = 100;
constexpr int kImageSize = 64;
constexpr int kPaperBaseChannels = 1024;
constexpr double kProbEps = 1e-7;

// One row of the architecture audit (mirrors the layer tables the networks
// are specified by).
struct LayerShape {
  std::string name;
  std::string kernel;  // "4x4" or "batchnorm"
  int c_in = 0, c_out = 0;
  int res_in = 0, res_out = 0;
  std::string input;
};

// Channel plan for generator and discriminator. base_channels = 1024 is the
// reference configuration; smaller (divisible-by-16) bases shrink every
// width by the same factor for CPU-scale training while preserving the
// resolution ladder. The discriminator feature dimension equals
// base_channels (1024 at reference scale).
struct GanArch {
  int nef = embed::kGrayscaleDim;
  int base_channels = kPaperBaseChannels;
  int noise_dim = kNoiseDim;

  void validate() const;

  // Generator deconv widths: base, base/2, base/4, base/8, then 3.
  int g_ch(int block) const { return base_channels >> block; }
  // Discriminator widths: each input branch base/16, trunk base/4, base/2, base.
  int d_branch_ch() const { return base_channels / 16; }
  int d_ch2() const { return base_channels / 4; }
  int d_ch3() const { return base_channels / 2; }
  int d_ch4() const { return base_channels; }
  int feature_dim() const { return base_channels; }

  std::vector<LayerShape> generator_shapes() const;
  std::vector<LayerShape> discriminator_shapes() const;
  long generator_param_count() const;
  long discriminator_param_count() const;

  std::string describe_generator() const;
  std::string describe_discriminator() const;

  bool operator==(const GanArch&) const = default;
};

// Upsampling stack from a 1x1 (nef+noise) input to a 64x64 RGB image in
// [-1,1]. Interior blocks are deconv+batchnorm+relu; the output layer is
// deconv+tanh.
class Generator {
 public:
  Generator(const GanArch& arch, std::uint64_t init_seed);

  const GanArch& arch() const { return arch_; }

  // z: [B, noise_dim], e: [B, nef] -> [B, 3, 64, 64]
  nn::Tensor forward(const nn::Tensor& z, const nn::Tensor& e,
                     const nn::Context& ctx);
  // Accumulates parameter gradients; the input gradient is discarded.
  void backward(const nn::Tensor& dimg);

  std::vector<nn::ParamRef> params();
  std::vector<nn::BufferRef> buffers();
  long param_count();
  std::string describe() const { return arch_.describe_generator(); }

 private:
  GanArch arch_;
  nn::Sequential net_;
  // Serializes calls so concurrent inference over a shared trained model is
  // safe; training remains single-writer by contract.
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

class EmbeddingBranchConv;

// Two-branch downsampling stack: the image and the (spatially broadcast)
// embedding each pass a conv+batchnorm+leakyrelu branch to 32x32, are
// concatenated, and descend to a single sigmoid belief. The embedding
// branch convolution is evaluated in closed form over the constant
// channels rather than materializing the broadcast.
class Discriminator {
 public:
  Discriminator(const GanArch& arch, std::uint64_t init_seed);
  Discriminator(Discriminator&&) noexcept;
  Discriminator& operator=(Discriminator&&) noexcept;
  ~Discriminator();

  const GanArch& arch() const { return arch_; }

  // img: [B, 3, 64, 64] in [-1,1], e: [B, nef] -> probabilities [B]
  nn::Tensor forward(const nn::Tensor& img, const nn::Tensor& e,
                     const nn::Context& ctx);
  // dprob: [B] -> gradient w.r.t. the image input [B, 3, 64, 64]
  nn::Tensor backward(const nn::Tensor& dprob);

  // Feature head: the sigmoid output layer is dropped and the activations
  // entering it are average-pooled, giving [B, feature_dim]. Eval mode.
  nn::Tensor features(const nn::Tensor& img, const nn::Tensor& e);

  std::vector<nn::ParamRef> params();
  std::vector<nn::BufferRef> buffers();
  long param_count();
  std::string describe() const { return arch_.describe_discriminator(); }

 private:
  nn::Tensor trunk_forward(const nn::Tensor& img, const nn::Tensor& e,
                           const nn::Context& ctx);

  GanArch arch_;
  nn::Conv2d conv1_img_;
  nn::BatchNorm2d bn1_img_;
  nn::Activation act_img_;
  std::unique_ptr<EmbeddingBranchConv> conv1_emb_;
  nn::BatchNorm2d bn1_emb_;
  nn::Activation act_emb_;
  nn::Sequential trunk_;
  nn::Conv2d conv5_;
  nn::Activation sigmoid_;
  int branch_ch_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

// Adversarial losses over sigmoid outputs. Probabilities are clamped to
// [eps, 1-eps] inside the logs; the clamped region has zero gradient.
double d_loss(const std::vector<double>& p_real,
              const std::vector<double>& p_fake);
void d_loss_grads(const std::vector<double>& p_real,
                  const std::vector<double>& p_fake,
                  std::vector<double>& dp_real, std::vector<double>& dp_fake);
// Non-saturating by default (maximize log D(G(z))); `saturating` selects the
// minimax form log(1 - D(G(z))).
double g_loss(const std::vector<double>& p_fake, bool saturating = false);
void g_loss_grad(const std::vector<double>& p_fake, bool saturating,
                 std::vector<double>& dp);

enum class DUpdate { Summed, Separate };

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 128;
  int epochs = 400;
  long max_steps = 0;  // 0 = run every epoch to completion
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  bool saturating_g = false;
  DUpdate d_update = DUpdate::Summed;

  void validate() const;
};

struct StepLoss {
  long step = 0;
  double d = 0.0;
  double g = 0.0;
};

struct LossHistory {
  std::vector<StepLoss> steps;

  std::string to_csv() const;
  void save_csv(const std::string& path) const;
  static LossHistory load_csv(const std::string& path);
};

// Alternating updates: per step the discriminator sees one real batch and
// one fake batch generated from the same overhead patches, then the
// generator updates through the discriminator. Deterministic given the seed.
// Throws DivergenceError if a loss goes non-finite.
LossHistory train(Generator& g, Discriminator& d,
                  const std::vector<geo::PairedSample>& samples,
                  const embed::Embedder& embedder, const TrainConfig& cfg);

// Held-out real-vs-fake accuracy of the discriminator (eval mode, seeded
// fresh noise); the smoke-training health signal.
double real_fake_accuracy(Generator& g, Discriminator& d,
                          const std::vector<geo::PairedSample>& samples,
                          const embed::Embedder& embedder, std::uint64_t seed);

// Image <-> tensor conversions ([-1,1] normalized).
nn::Tensor image_to_tensor(const geo::ImageU8& img);
nn::Tensor images_to_tensor(const std::vector<const geo::ImageU8*>& batch);
geo::ImageU8 tensor_to_image(const nn::Tensor& t, int n);
nn::Tensor embeddings_to_tensor(const std::vector<embed::Embedding>& rows);

// Checkpoints: text header (kind, architecture descriptor + hash, nef, base
// channels, seed, step) followed by the raw little-endian parameter and
// buffer blobs.
void save_generator(Generator& g, const std::string& path, std::uint64_t seed,
                    long step);
void save_discriminator(Discriminator& d, const std::string& path,
                        std::uint64_t seed, long step);
Generator load_generator(const std::string& path);
Discriminator load_discriminator(const std::string& path);

}  // namespace groundgen::gan

#endif
