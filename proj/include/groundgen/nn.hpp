#ifndef GROUNDGEN_NN_HPP
#define GROUNDGEN_NN_HPP

#include <memory>
#include <string>
#include <vector>

#include "groundgen/common.hpp"
#include "groundgen/rng.hpp"

namespace groundgen::nn {

// Dense row-major tensor of doubles. Activations use [N, C, H, W]; vectors
// use [N, D]. Double precision throughout so analytic gradients can be
// checked against central finite differences.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  long size() const { return static_cast<long>(v.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int batch() const { return shape.empty() ? 0 : shape[0]; }
  long sample_size() const { return batch() ? size() / batch() : 0; }

  double* sample(int n) { return v.data() + n * sample_size(); }
  const double* sample(int n) const { return v.data() + n * sample_size(); }

  // [N,C,H,W] accessor.
  double& at(int n, int c, int h, int w);
  double at(int n, int c, int h, int w) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Mode flags threaded through every forward pass. track_stats lets the
// trainer freeze batchnorm running statistics (a zero learning rate must
// leave the model bit-identical). bn_momentum overrides the layer momentum
// when non-negative; feeding 1/t over a fixed pass turns the running
// statistics into an exact average over that pass (post-training refresh).
struct Context {
  bool training = false;
  bool track_stats = true;
  double bn_momentum = -1.0;
};

struct ParamRef {
  std::string name;
  std::vector<double>* value;
  std::vector<double>* grad;
};

struct BufferRef {
  std::string name;
  std::vector<double>* value;
};

// Weight initialization style. Dcgan is the N(0, 0.02) convention the
// adversarial networks specify; He scales by fan-in so classifier
// activations carry unit-order variance from the first step (batchnorm
// running statistics then start near their steady state).
enum class Init { Dcgan, He };

class Layer {
 public:
  virtual ~Layer() = default;
  // Takes the input by value so a chain holds one copy of each activation.
  virtual Tensor forward(Tensor x, const Context& ctx) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(const std::string& prefix,
                              std::vector<ParamRef>& out) {}
  virtual void collect_buffers(const std::string& prefix,
                               std::vector<BufferRef>& out) {}
  virtual std::string describe() const = 0;
};

// 2D convolution, square kernel, zero padding.
class Conv2d : public Layer {
 public:
  Conv2d(int c_in, int c_out, int k, int stride, int pad,
         Rng* init = nullptr, Init style = Init::Dcgan);

  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  std::string describe() const override;

  static int out_res(int in_res, int k, int stride, int pad) {
    return (in_res + 2 * pad - k) / stride + 1;
  }

  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }

  std::vector<double> weight;  // [c_out][c_in][k][k]
  std::vector<double> bias;    // [c_out]
  std::vector<double> dweight, dbias;

 private:
  int c_in_, c_out_, k_, stride_, pad_;
  Tensor x_;
};

// Transposed 2D convolution (fractionally strided); the upsampling layer.
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(int c_in, int c_out, int k, int stride, int pad,
                  Rng* init = nullptr, Init style = Init::Dcgan);

  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  std::string describe() const override;

  static int out_res(int in_res, int k, int stride, int pad) {
    return (in_res - 1) * stride - 2 * pad + k;
  }

  std::vector<double> weight;  // [c_in][c_out][k][k]
  std::vector<double> bias;    // [c_out]
  std::vector<double> dweight, dbias;

 private:
  int c_in_, c_out_, k_, stride_, pad_;
  Tensor x_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, Rng* init = nullptr, double eps = 1e-5,
                       double momentum = 0.1);

  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix,
                       std::vector<BufferRef>& out) override;
  std::string describe() const override;

  std::vector<double> gamma, beta;
  std::vector<double> dgamma, dbeta;
  std::vector<double> running_mean, running_var;

 private:
  int channels_;
  double eps_, momentum_;
  bool trained_forward_ = false;
  Tensor xhat_;
  std::vector<double> invstd_;
};

enum class Act { ReLU, LeakyReLU, Tanh, Sigmoid };

class Activation : public Layer {
 public:
  explicit Activation(Act kind, double slope = 0.2)
      : kind_(kind), slope_(slope) {}

  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  std::string describe() const override;

 private:
  Act kind_;
  double slope_;
  Tensor y_;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  std::string describe() const override { return "gap"; }

 private:
  std::vector<int> in_shape_;
};

class Linear : public Layer {
 public:
  Linear(int d_in, int d_out, Rng* init = nullptr,
         Init style = Init::Dcgan);

  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  std::string describe() const override;

  std::vector<double> weight;  // [d_out][d_in]
  std::vector<double> bias;
  std::vector<double> dweight, dbias;

 private:
  int d_in_, d_out_;
  Tensor x_;
};

class Sequential : public Layer {
 public:
  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* p = layer.get();
    layers_.push_back(std::move(layer));
    return p;
  }

  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix,
                       std::vector<BufferRef>& out) override;
  std::string describe() const override;

  std::size_t size() const { return layers_.size(); }
  Layer* at(std::size_t i) { return layers_[i].get(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Two 3x3 convolutions with a (possibly projected) shortcut.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(int c_in, int c_out, int stride, Rng* init,
                Init style = Init::He);

  Tensor forward(Tensor x, const Context& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix,
                      std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix,
                       std::vector<BufferRef>& out) override;
  std::string describe() const override;

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  bool has_proj_;
  std::unique_ptr<Conv2d> proj_;
  std::unique_ptr<BatchNorm2d> bn_proj_;
  Activation relu1_{Act::ReLU};
  Tensor x_in_, sum_;
};

class Adam {
 public:
  Adam(std::vector<ParamRef> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void zero_grad();
  void step();

 private:
  std::vector<ParamRef> params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// DCGAN-style initialization: conv/deconv weights N(0, 0.02), biases zero,
// batchnorm scale N(1, 0.02), shift zero.
void init_conv_weights(std::vector<double>& w, Rng& rng);
void init_weights(std::vector<double>& w, Rng& rng, Init style, long fan_in);
void init_bn_params(std::vector<double>& gamma, std::vector<double>& beta,
                    Rng& rng);

// Softmax cross-entropy over logits [N, K]; returns mean loss and writes
// dloss/dlogits.
double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels, Tensor* dlogits);

long param_count(const std::vector<ParamRef>& params);

}  // namespace groundgen::nn

#endif
