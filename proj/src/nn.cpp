#include "groundgen/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace groundgen::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using Mat = Eigen::MatrixXd;

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  long n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dims must be positive");
    n *= d;
  }
  v.assign(static_cast<std::size_t>(n), 0.0);
}

double& Tensor::at(int n, int c, int h, int w) {
  return v[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) *
               shape[3] +
           w];
}

double Tensor::at(int n, int c, int h, int w) const {
  return const_cast<Tensor*>(this)->at(n, c, h, w);
}

namespace {

// Unrolls k x k patches of a C x H x W image into a (C*k*k) x (Ho*Wo)
// matrix; out-of-image taps are zero. Row index is (ci*k + kh)*k + kw, which
// matches the flattened weight layout.
void im2col(const double* img, int C, int H, int W, int k, int s, int p,
            Mat& cols) {
  const int Ho = (H + 2 * p - k) / s + 1;
  const int Wo = (W + 2 * p - k) / s + 1;
  cols.resize(static_cast<long>(C) * k * k, static_cast<long>(Ho) * Wo);
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      double* col = cols.data() +
                    static_cast<std::size_t>(oy * Wo + ox) * cols.rows();
      std::size_t r = 0;
      for (int ci = 0; ci < C; ++ci) {
        for (int kh = 0; kh < k; ++kh) {
          const int iy = oy * s - p + kh;
          if (iy < 0 || iy >= H) {
            for (int kw = 0; kw < k; ++kw) col[r++] = 0.0;
            continue;
          }
          const double* row = img + (static_cast<std::size_t>(ci) * H + iy) * W;
          for (int kw = 0; kw < k; ++kw) {
            const int ix = ox * s - p + kw;
            col[r++] = (ix >= 0 && ix < W) ? row[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col. Zeroes the target image first.
void col2im(const Mat& cols, int C, int H, int W, int k, int s, int p,
            double* img) {
  const int Ho = (H + 2 * p - k) / s + 1;
  const int Wo = (W + 2 * p - k) / s + 1;
  std::fill(img, img + static_cast<std::size_t>(C) * H * W, 0.0);
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const double* col = cols.data() +
                          static_cast<std::size_t>(oy * Wo + ox) * cols.rows();
      std::size_t r = 0;
      for (int ci = 0; ci < C; ++ci) {
        for (int kh = 0; kh < k; ++kh) {
          const int iy = oy * s - p + kh;
          if (iy < 0 || iy >= H) {
            r += static_cast<std::size_t>(k);
            continue;
          }
          double* row = img + (static_cast<std::size_t>(ci) * H + iy) * W;
          for (int kw = 0; kw < k; ++kw) {
            const int ix = ox * s - p + kw;
            if (ix >= 0 && ix < W) row[ix] += col[r];
            ++r;
          }
        }
      }
    }
  }
}

void check_4d(const Tensor& x, int channels, const char* who) {
  if (x.shape.size() != 4 || x.dim(1) != channels)
    throw DimensionError(std::string(who) + ": expected [N," +
                         std::to_string(channels) + ",H,W] input");
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int c_in, int c_out, int k, int stride, int pad, Rng* init,
               Init style)
    : weight(static_cast<std::size_t>(c_out) * c_in * k * k, 0.0),
      bias(static_cast<std::size_t>(c_out), 0.0),
      dweight(weight.size(), 0.0),
      dbias(bias.size(), 0.0),
      c_in_(c_in),
      c_out_(c_out),
      k_(k),
      stride_(stride),
      pad_(pad) {
  if (init) init_weights(weight, *init, style, static_cast<long>(c_in) * k * k);
}

Tensor Conv2d::forward(Tensor x, const Context&) {
  check_4d(x, c_in_, "conv");
  x_ = std::move(x);
  const int N = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
  const int Ho = out_res(H, k_, stride_, pad_);
  const int Wo = out_res(W, k_, stride_, pad_);
  if (Ho < 1 || Wo < 1) throw DimensionError("conv: input too small");
  Tensor y({N, c_out_, Ho, Wo});
  CMapRM Wm(weight.data(), c_out_, static_cast<long>(c_in_) * k_ * k_);
  Mat cols;
  for (int n = 0; n < N; ++n) {
    im2col(x_.sample(n), c_in_, H, W, k_, stride_, pad_, cols);
    MapRM Ym(y.sample(n), c_out_, static_cast<long>(Ho) * Wo);
    Ym.noalias() = Wm * cols;
    for (int co = 0; co < c_out_; ++co) Ym.row(co).array() += bias[co];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const int N = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
  const int Ho = dy.dim(2), Wo = dy.dim(3);
  Tensor dx(x_.shape);
  CMapRM Wm(weight.data(), c_out_, static_cast<long>(c_in_) * k_ * k_);
  MapRM dWm(dweight.data(), c_out_, static_cast<long>(c_in_) * k_ * k_);
  Mat cols, dcols;
  for (int n = 0; n < N; ++n) {
    CMapRM dYm(dy.sample(n), c_out_, static_cast<long>(Ho) * Wo);
    im2col(x_.sample(n), c_in_, H, W, k_, stride_, pad_, cols);
    dWm.noalias() += dYm * cols.transpose();
    for (int co = 0; co < c_out_; ++co) dbias[co] += dYm.row(co).sum();
    dcols.noalias() = Wm.transpose() * dYm;
    col2im(dcols, c_in_, H, W, k_, stride_, pad_, dx.sample(n));
  }
  return dx;
}

void Conv2d::collect_params(const std::string& prefix,
                            std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &dweight});
  out.push_back({prefix + ".bias", &bias, &dbias});
}

std::string Conv2d::describe() const {
  return "conv(" + std::to_string(c_in_) + "->" + std::to_string(c_out_) +
         ",k" + std::to_string(k_) + ",s" + std::to_string(stride_) + ",p" +
         std::to_string(pad_) + ")";
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int c_in, int c_out, int k, int stride,
                                 int pad, Rng* init, Init style)
    : weight(static_cast<std::size_t>(c_in) * c_out * k * k, 0.0),
      bias(static_cast<std::size_t>(c_out), 0.0),
      dweight(weight.size(), 0.0),
      dbias(bias.size(), 0.0),
      c_in_(c_in),
      c_out_(c_out),
      k_(k),
      stride_(stride),
      pad_(pad) {
  if (init) init_weights(weight, *init, style, static_cast<long>(c_in) * k * k);
}

Tensor ConvTranspose2d::forward(Tensor x, const Context&) {
  check_4d(x, c_in_, "deconv");
  x_ = std::move(x);
  const int N = x_.dim(0), Hi = x_.dim(2), Wi = x_.dim(3);
  const int Ho = out_res(Hi, k_, stride_, pad_);
  const int Wo = out_res(Wi, k_, stride_, pad_);
  if (Ho < 1 || Wo < 1) throw DimensionError("deconv: invalid geometry");
  Tensor y({N, c_out_, Ho, Wo});
  CMapRM Wm(weight.data(), c_in_, static_cast<long>(c_out_) * k_ * k_);
  Mat cols;
  for (int n = 0; n < N; ++n) {
    CMapRM Xm(x_.sample(n), c_in_, static_cast<long>(Hi) * Wi);
    cols.noalias() = Wm.transpose() * Xm;
    col2im(cols, c_out_, Ho, Wo, k_, stride_, pad_, y.sample(n));
    MapRM Ym(y.sample(n), c_out_, static_cast<long>(Ho) * Wo);
    for (int co = 0; co < c_out_; ++co) Ym.row(co).array() += bias[co];
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
  const int N = x_.dim(0), Hi = x_.dim(2), Wi = x_.dim(3);
  const int Ho = dy.dim(2), Wo = dy.dim(3);
  Tensor dx(x_.shape);
  CMapRM Wm(weight.data(), c_in_, static_cast<long>(c_out_) * k_ * k_);
  MapRM dWm(dweight.data(), c_in_, static_cast<long>(c_out_) * k_ * k_);
  Mat dcols;
  for (int n = 0; n < N; ++n) {
    im2col(dy.sample(n), c_out_, Ho, Wo, k_, stride_, pad_, dcols);
    CMapRM Xm(x_.sample(n), c_in_, static_cast<long>(Hi) * Wi);
    dWm.noalias() += Xm * dcols.transpose();
    CMapRM dYm(dy.sample(n), c_out_, static_cast<long>(Ho) * Wo);
    for (int co = 0; co < c_out_; ++co) dbias[co] += dYm.row(co).sum();
    MapRM dXm(dx.sample(n), c_in_, static_cast<long>(Hi) * Wi);
    dXm.noalias() = Wm * dcols;
  }
  return dx;
}

void ConvTranspose2d::collect_params(const std::string& prefix,
                                     std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &dweight});
  out.push_back({prefix + ".bias", &bias, &dbias});
}

std::string ConvTranspose2d::describe() const {
  return "deconv(" + std::to_string(c_in_) + "->" + std::to_string(c_out_) +
         ",k" + std::to_string(k_) + ",s" + std::to_string(stride_) + ",p" +
         std::to_string(pad_) + ")";
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, Rng* init, double eps, double momentum)
    : gamma(static_cast<std::size_t>(channels), 1.0),
      beta(static_cast<std::size_t>(channels), 0.0),
      dgamma(gamma.size(), 0.0),
      dbeta(beta.size(), 0.0),
      running_mean(gamma.size(), 0.0),
      running_var(gamma.size(), 1.0),
      channels_(channels),
      eps_(eps),
      momentum_(momentum),
      invstd_(gamma.size(), 0.0) {
  if (init) init_bn_params(gamma, beta, *init);
}

Tensor BatchNorm2d::forward(Tensor x, const Context& ctx) {
  check_4d(x, channels_, "batchnorm");
  const int N = x.dim(0), C = channels_, H = x.dim(2), W = x.dim(3);
  const long plane = static_cast<long>(H) * W;
  const long m = static_cast<long>(N) * plane;
  trained_forward_ = ctx.training;
  Tensor y(x.shape);
  if (ctx.training) {
    if (m < 2) throw StateError("batchnorm needs more than one value per channel");
    xhat_ = Tensor(x.shape);
    for (int c = 0; c < C; ++c) {
      double mean = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x.sample(n) + c * plane;
        for (long i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x.sample(n) + c * plane;
        for (long i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      invstd_[c] = 1.0 / std::sqrt(var + eps_);
      for (int n = 0; n < N; ++n) {
        const double* p = x.sample(n) + c * plane;
        double* xh = xhat_.sample(n) + c * plane;
        double* yp = y.sample(n) + c * plane;
        for (long i = 0; i < plane; ++i) {
          xh[i] = (p[i] - mean) * invstd_[c];
          yp[i] = gamma[c] * xh[i] + beta[c];
        }
      }
      if (ctx.track_stats) {
        const double mom = ctx.bn_momentum >= 0.0 ? ctx.bn_momentum : momentum_;
        const double unbiased = var * static_cast<double>(m) / (m - 1);
        running_mean[c] = (1.0 - mom) * running_mean[c] + mom * mean;
        running_var[c] = (1.0 - mom) * running_var[c] + mom * unbiased;
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(running_var[c] + eps_);
      invstd_[c] = inv;
      for (int n = 0; n < N; ++n) {
        const double* p = x.sample(n) + c * plane;
        double* yp = y.sample(n) + c * plane;
        for (long i = 0; i < plane; ++i)
          yp[i] = gamma[c] * (p[i] - running_mean[c]) * inv + beta[c];
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const int N = dy.dim(0), C = channels_, H = dy.dim(2), W = dy.dim(3);
  const long plane = static_cast<long>(H) * W;
  const long m = static_cast<long>(N) * plane;
  Tensor dx(dy.shape);
  if (!trained_forward_) {
    for (int c = 0; c < C; ++c) {
      const double g = gamma[c] * invstd_[c];
      for (int n = 0; n < N; ++n) {
        const double* dp = dy.sample(n) + c * plane;
        double* dxp = dx.sample(n) + c * plane;
        for (long i = 0; i < plane; ++i) dxp[i] = g * dp[i];
      }
    }
    return dx;
  }
  for (int c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* dp = dy.sample(n) + c * plane;
      const double* xh = xhat_.sample(n) + c * plane;
      for (long i = 0; i < plane; ++i) {
        sum_dy += dp[i];
        sum_dy_xhat += dp[i] * xh[i];
      }
    }
    dgamma[c] += sum_dy_xhat;
    dbeta[c] += sum_dy;
    const double scale = gamma[c] * invstd_[c] / static_cast<double>(m);
    for (int n = 0; n < N; ++n) {
      const double* dp = dy.sample(n) + c * plane;
      const double* xh = xhat_.sample(n) + c * plane;
      double* dxp = dx.sample(n) + c * plane;
      for (long i = 0; i < plane; ++i)
        dxp[i] = scale * (m * dp[i] - sum_dy - xh[i] * sum_dy_xhat);
    }
  }
  return dx;
}

void BatchNorm2d::collect_params(const std::string& prefix,
                                 std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &dgamma});
  out.push_back({prefix + ".beta", &beta, &dbeta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix,
                                  std::vector<BufferRef>& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

std::string BatchNorm2d::describe() const {
  return "bn(" + std::to_string(channels_) + ")";
}

// ---------------------------------------------------------------------------
// Activation

Tensor Activation::forward(Tensor x, const Context&) {
  y_ = std::move(x);
  for (double& v : y_.v) {
    switch (kind_) {
      case Act::ReLU:
        v = v > 0.0 ? v : 0.0;
        break;
      case Act::LeakyReLU:
        v = v > 0.0 ? v : slope_ * v;
        break;
      case Act::Tanh:
        v = std::tanh(v);
        break;
      case Act::Sigmoid:
        v = 1.0 / (1.0 + std::exp(-v));
        break;
    }
  }
  return y_;
}

Tensor Activation::backward(const Tensor& dy) {
  Tensor dx(dy.shape);
  for (long i = 0; i < dy.size(); ++i) {
    const double y = y_.v[static_cast<std::size_t>(i)];
    double g = 0.0;
    switch (kind_) {
      case Act::ReLU:
        g = y > 0.0 ? 1.0 : 0.0;
        break;
      case Act::LeakyReLU:
        g = y > 0.0 ? 1.0 : slope_;
        break;
      case Act::Tanh:
        g = 1.0 - y * y;
        break;
      case Act::Sigmoid:
        g = y * (1.0 - y);
        break;
    }
    dx.v[static_cast<std::size_t>(i)] = g * dy.v[static_cast<std::size_t>(i)];
  }
  return dx;
}

std::string Activation::describe() const {
  switch (kind_) {
    case Act::ReLU:
      return "relu";
    case Act::LeakyReLU:
      return "lrelu(" + std::to_string(slope_) + ")";
    case Act::Tanh:
      return "tanh";
    case Act::Sigmoid:
      return "sigmoid";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// GlobalAvgPool / Linear

Tensor GlobalAvgPool::forward(Tensor x, const Context&) {
  if (x.shape.size() != 4) throw DimensionError("gap: expected 4D input");
  in_shape_ = x.shape;
  const int N = x.dim(0), C = x.dim(1);
  const long plane = static_cast<long>(x.dim(2)) * x.dim(3);
  Tensor y({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* p = x.sample(n) + c * plane;
      double s = 0.0;
      for (long i = 0; i < plane; ++i) s += p[i];
      y.v[static_cast<std::size_t>(n) * C + c] = s / static_cast<double>(plane);
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
  Tensor dx(in_shape_);
  const int N = in_shape_[0], C = in_shape_[1];
  const long plane = static_cast<long>(in_shape_[2]) * in_shape_[3];
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double g =
          dy.v[static_cast<std::size_t>(n) * C + c] / static_cast<double>(plane);
      double* p = dx.sample(n) + c * plane;
      for (long i = 0; i < plane; ++i) p[i] = g;
    }
  return dx;
}

Linear::Linear(int d_in, int d_out, Rng* init, Init style)
    : weight(static_cast<std::size_t>(d_out) * d_in, 0.0),
      bias(static_cast<std::size_t>(d_out), 0.0),
      dweight(weight.size(), 0.0),
      dbias(bias.size(), 0.0),
      d_in_(d_in),
      d_out_(d_out) {
  if (init) init_weights(weight, *init, style, d_in);
}

Tensor Linear::forward(Tensor x, const Context&) {
  if (x.shape.size() != 2 || x.dim(1) != d_in_)
    throw DimensionError("linear: expected [N," + std::to_string(d_in_) + "]");
  x_ = std::move(x);
  const int N = x_.dim(0);
  Tensor y({N, d_out_});
  CMapRM Xm(x_.v.data(), N, d_in_);
  CMapRM Wm(weight.data(), d_out_, d_in_);
  MapRM Ym(y.v.data(), N, d_out_);
  Ym.noalias() = Xm * Wm.transpose();
  for (int n = 0; n < N; ++n) Ym.row(n) += CMapRM(bias.data(), 1, d_out_);
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const int N = x_.dim(0);
  Tensor dx(x_.shape);
  CMapRM dYm(dy.v.data(), N, d_out_);
  CMapRM Xm(x_.v.data(), N, d_in_);
  CMapRM Wm(weight.data(), d_out_, d_in_);
  MapRM dWm(dweight.data(), d_out_, d_in_);
  MapRM dXm(dx.v.data(), N, d_in_);
  dWm.noalias() += dYm.transpose() * Xm;
  for (int j = 0; j < d_out_; ++j) dbias[j] += dYm.col(j).sum();
  dXm.noalias() = dYm * Wm;
  return dx;
}

void Linear::collect_params(const std::string& prefix,
                            std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &dweight});
  out.push_back({prefix + ".bias", &bias, &dbias});
}

std::string Linear::describe() const {
  return "linear(" + std::to_string(d_in_) + "->" + std::to_string(d_out_) + ")";
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::forward(Tensor x, const Context& ctx) {
  for (auto& l : layers_) x = l->forward(std::move(x), ctx);
  return x;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = (*it)->backward(g);
  return g;
}

void Sequential::collect_params(const std::string& prefix,
                                std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_params(prefix + "." + std::to_string(i), out);
}

void Sequential::collect_buffers(const std::string& prefix,
                                 std::vector<BufferRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_buffers(prefix + "." + std::to_string(i), out);
}

std::string Sequential::describe() const {
  std::string s;
  for (const auto& l : layers_) {
    if (!s.empty()) s += "|";
    s += l->describe();
  }
  return s;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int c_in, int c_out, int stride, Rng* init,
                             Init style)
    : conv1_(c_in, c_out, 3, stride, 1, init, style),
      bn1_(c_out, init),
      conv2_(c_out, c_out, 3, 1, 1, init, style),
      bn2_(c_out, init),
      has_proj_(stride != 1 || c_in != c_out) {
  if (has_proj_) {
    proj_ = std::make_unique<Conv2d>(c_in, c_out, 1, stride, 0, init, style);
    bn_proj_ = std::make_unique<BatchNorm2d>(c_out, init);
  }
}

Tensor ResidualBlock::forward(Tensor x, const Context& ctx) {
  x_in_ = x;
  Tensor h = conv1_.forward(std::move(x), ctx);
  h = bn1_.forward(std::move(h), ctx);
  h = relu1_.forward(std::move(h), ctx);
  h = conv2_.forward(std::move(h), ctx);
  h = bn2_.forward(std::move(h), ctx);
  Tensor shortcut;
  if (has_proj_) {
    shortcut = proj_->forward(x_in_, ctx);
    shortcut = bn_proj_->forward(std::move(shortcut), ctx);
  } else {
    shortcut = x_in_;
  }
  if (!h.same_shape(shortcut))
    throw DimensionError("residual block: branch shape mismatch");
  sum_ = std::move(h);
  for (long i = 0; i < sum_.size(); ++i)
    sum_.v[static_cast<std::size_t>(i)] += shortcut.v[static_cast<std::size_t>(i)];
  Tensor y = sum_;
  for (double& v : y.v) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  Tensor dsum(dy.shape);
  for (long i = 0; i < dy.size(); ++i)
    dsum.v[static_cast<std::size_t>(i)] =
        sum_.v[static_cast<std::size_t>(i)] > 0.0
            ? dy.v[static_cast<std::size_t>(i)]
            : 0.0;
  Tensor dmain = bn2_.backward(dsum);
  dmain = conv2_.backward(dmain);
  dmain = relu1_.backward(dmain);
  dmain = bn1_.backward(dmain);
  Tensor dx = conv1_.backward(dmain);
  if (has_proj_) {
    Tensor dshort = bn_proj_->backward(dsum);
    dshort = proj_->backward(dshort);
    for (long i = 0; i < dx.size(); ++i)
      dx.v[static_cast<std::size_t>(i)] += dshort.v[static_cast<std::size_t>(i)];
  } else {
    for (long i = 0; i < dx.size(); ++i)
      dx.v[static_cast<std::size_t>(i)] += dsum.v[static_cast<std::size_t>(i)];
  }
  return dx;
}

void ResidualBlock::collect_params(const std::string& prefix,
                                   std::vector<ParamRef>& out) {
  conv1_.collect_params(prefix + ".conv1", out);
  bn1_.collect_params(prefix + ".bn1", out);
  conv2_.collect_params(prefix + ".conv2", out);
  bn2_.collect_params(prefix + ".bn2", out);
  if (has_proj_) {
    proj_->collect_params(prefix + ".proj", out);
    bn_proj_->collect_params(prefix + ".bn_proj", out);
  }
}

void ResidualBlock::collect_buffers(const std::string& prefix,
                                    std::vector<BufferRef>& out) {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
  if (has_proj_) bn_proj_->collect_buffers(prefix + ".bn_proj", out);
}

std::string ResidualBlock::describe() const {
  return "res[" + conv1_.describe() + "," + conv2_.describe() +
         (has_proj_ ? ",proj" : "") + "]";
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<ParamRef> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value->size(), 0.0);
    v_.emplace_back(p.value->size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

void Adam::step() {
  if (lr_ == 0.0) return;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& value = *params_[i].value;
    auto& grad = *params_[i].grad;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// helpers

void init_conv_weights(std::vector<double>& w, Rng& rng) {
  for (double& x : w) x = rng.normal(0.0, 0.02);
}

void init_weights(std::vector<double>& w, Rng& rng, Init style, long fan_in) {
  const double std =
      style == Init::He ? std::sqrt(2.0 / static_cast<double>(fan_in)) : 0.02;
  for (double& x : w) x = rng.normal(0.0, std);
}

void init_bn_params(std::vector<double>& gamma, std::vector<double>& beta,
                    Rng& rng) {
  for (double& g : gamma) g = rng.normal(1.0, 0.02);
  std::fill(beta.begin(), beta.end(), 0.0);
}

double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels, Tensor* dlogits) {
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw DimensionError("labels do not match logits batch");
  if (dlogits) *dlogits = Tensor(logits.shape);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const double* row = logits.v.data() + static_cast<std::size_t>(n) * K;
    double mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const double logz = std::log(z) + mx;
    total += logz - row[labels[static_cast<std::size_t>(n)]];
    if (dlogits) {
      double* drow = dlogits->v.data() + static_cast<std::size_t>(n) * K;
      for (int k = 0; k < K; ++k) {
        const double p = std::exp(row[k] - logz);
        drow[k] = (p - (k == labels[static_cast<std::size_t>(n)] ? 1.0 : 0.0)) /
                  static_cast<double>(N);
      }
    }
  }
  return total / static_cast<double>(N);
}

long param_count(const std::vector<ParamRef>& params) {
  long n = 0;
  for (const auto& p : params) n += static_cast<long>(p.value->size());
  return n;
}

}  // namespace groundgen::nn
