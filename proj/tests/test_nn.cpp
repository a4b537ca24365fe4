#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "groundgen/nn.hpp"
#include "groundgen/rng.hpp"

using namespace groundgen;
using namespace groundgen::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.v) v = scale * rng.normal();
  return t;
}

// Direct-summation convolution; the independent oracle for the im2col path.
Tensor naive_conv(const Tensor& x, const std::vector<double>& w,
                  const std::vector<double>& b, int c_out, int k, int s,
                  int p) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  Tensor y({N, c_out, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < c_out; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = b[co];
          for (int ci = 0; ci < C; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int iy = oy * s - p + kh;
                const int ix = ox * s - p + kw;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += w[((static_cast<std::size_t>(co) * C + ci) * k + kh) * k +
                         kw] *
                       x.at(n, ci, iy, ix);
              }
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

// Direct-summation transposed convolution.
Tensor naive_deconv(const Tensor& x, const std::vector<double>& w,
                    const std::vector<double>& b, int c_out, int k, int s,
                    int p) {
  const int N = x.dim(0), C = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
  const int Ho = (Hi - 1) * s - 2 * p + k, Wo = (Wi - 1) * s - 2 * p + k;
  Tensor y({N, c_out, Ho, Wo});
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < c_out; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) y.at(n, co, oy, ox) = b[co];
    for (int ci = 0; ci < C; ++ci)
      for (int iy = 0; iy < Hi; ++iy)
        for (int ix = 0; ix < Wi; ++ix)
          for (int co = 0; co < c_out; ++co)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int oy = iy * s - p + kh;
                const int ox = ix * s - p + kw;
                if (oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
                y.at(n, co, oy, ox) +=
                    w[((static_cast<std::size_t>(ci) * c_out + co) * k + kh) * k +
                      kw] *
                    x.at(n, ci, iy, ix);
              }
  }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (long i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.v[static_cast<std::size_t>(i)] -
                             b.v[static_cast<std::size_t>(i)]));
  return m;
}

// Central-difference gradient check of a scalar loss against every entry of
// `param`, after the analytic backward has filled `grad`. The absolute floor
// covers degenerate directions (a conv bias feeding a batchnorm has an
// exactly-zero gradient that finite differences only see as roundoff).
void check_param_grads(std::vector<double>& param, const std::vector<double>& grad,
                       const std::function<double()>& loss_fn,
                       double rtol = 1e-6, double atol = 1e-7) {
  const double h = 1e-5;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + h;
    const double lp = loss_fn();
    param[i] = keep - h;
    const double lm = loss_fn();
    param[i] = keep;
    const double num = (lp - lm) / (2 * h);
    const double err = std::abs(num - grad[i]);
    const double bound = atol + rtol * std::max(std::abs(num), std::abs(grad[i]));
    CHECK(err < bound);
  }
}

// Scalar test loss: 0.5 * sum(y^2), whose gradient w.r.t. y is y itself.
double half_sq(const Tensor& y) {
  double s = 0.0;
  for (double v : y.v) s += v * v;
  return 0.5 * s;
}

}  // namespace

TEST_CASE("conv forward matches the direct-summation oracle") {
  Rng rng(10);
  for (auto [k, s, p] : {std::tuple{4, 2, 1}, {3, 1, 1}, {1, 1, 0}, {4, 1, 0}}) {
    Conv2d conv(3, 5, k, s, p, &rng);
    for (auto& b : conv.bias) b = rng.normal();
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Context ctx;
    Tensor y = conv.forward(x, ctx);
    Tensor ref = naive_conv(x, conv.weight, conv.bias, 5, k, s, p);
    CHECK(max_abs_diff(y, ref) < 1e-12);
  }
}

TEST_CASE("deconv forward matches the direct-summation oracle") {
  Rng rng(11);
  for (auto [k, s, p] : {std::tuple{4, 2, 1}, {4, 1, 0}, {3, 2, 1}}) {
    ConvTranspose2d deconv(4, 3, k, s, p, &rng);
    for (auto& b : deconv.bias) b = rng.normal();
    Tensor x = random_tensor({2, 4, 5, 5}, rng);
    Context ctx;
    Tensor y = deconv.forward(x, ctx);
    Tensor ref = naive_deconv(x, deconv.weight, deconv.bias, 3, k, s, p);
    CHECK(max_abs_diff(y, ref) < 1e-12);
  }
}

TEST_CASE("deconv inverts conv geometry") {
  CHECK(Conv2d::out_res(64, 4, 2, 1) == 32);
  CHECK(Conv2d::out_res(4, 4, 1, 0) == 1);
  CHECK(ConvTranspose2d::out_res(1, 4, 1, 0) == 4);
  CHECK(ConvTranspose2d::out_res(32, 4, 2, 1) == 64);
}

TEST_CASE("conv gradients match finite differences") {
  Rng rng(12);
  Conv2d conv(2, 3, 3, 2, 1, &rng);
  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  Context ctx;

  auto loss_fn = [&]() { return half_sq(conv.forward(x, ctx)); };
  Tensor y = conv.forward(x, ctx);
  std::fill(conv.dweight.begin(), conv.dweight.end(), 0.0);
  std::fill(conv.dbias.begin(), conv.dbias.end(), 0.0);
  Tensor dx = conv.backward(y);

  check_param_grads(conv.weight, conv.dweight, loss_fn);
  check_param_grads(conv.bias, conv.dbias, loss_fn);
  check_param_grads(x.v, dx.v, loss_fn);
}

TEST_CASE("deconv gradients match finite differences") {
  Rng rng(13);
  ConvTranspose2d deconv(3, 2, 4, 2, 1, &rng);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Context ctx;

  auto loss_fn = [&]() { return half_sq(deconv.forward(x, ctx)); };
  Tensor y = deconv.forward(x, ctx);
  std::fill(deconv.dweight.begin(), deconv.dweight.end(), 0.0);
  std::fill(deconv.dbias.begin(), deconv.dbias.end(), 0.0);
  Tensor dx = deconv.backward(y);

  check_param_grads(deconv.weight, deconv.dweight, loss_fn);
  check_param_grads(deconv.bias, deconv.dbias, loss_fn);
  check_param_grads(x.v, dx.v, loss_fn);
}

TEST_CASE("batchnorm normalizes in train mode and freezes when asked") {
  Rng rng(14);
  BatchNorm2d bn(3);
  Tensor x = random_tensor({4, 3, 5, 5}, rng, 2.0);
  for (auto& v : x.v) v += 1.5;

  Context train{true, true};
  Tensor y = bn.forward(x, train);
  const long plane = 25;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int n = 0; n < 4; ++n)
      for (long i = 0; i < plane; ++i) mean += y.sample(n)[c * plane + i];
    mean /= 4 * plane;
    for (int n = 0; n < 4; ++n)
      for (long i = 0; i < plane; ++i) {
        const double d = y.sample(n)[c * plane + i] - mean;
        var += d * d;
      }
    var /= 4 * plane;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    // The eps inside the normalizer pulls the variance slightly under 1.
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
  CHECK(bn.running_mean[0] != 0.0);

  const auto rm = bn.running_mean;
  const auto rv = bn.running_var;
  Context frozen{true, false};
  bn.forward(x, frozen);
  CHECK(bn.running_mean == rm);
  CHECK(bn.running_var == rv);
}

TEST_CASE("batchnorm gradients match finite differences (train mode)") {
  Rng rng(15);
  BatchNorm2d bn(2, &rng);
  Tensor x = random_tensor({3, 2, 4, 4}, rng);
  Context train{true, false};

  auto loss_fn = [&]() { return half_sq(bn.forward(x, train)); };
  Tensor y = bn.forward(x, train);
  std::fill(bn.dgamma.begin(), bn.dgamma.end(), 0.0);
  std::fill(bn.dbeta.begin(), bn.dbeta.end(), 0.0);
  Tensor dx = bn.backward(y);

  check_param_grads(bn.gamma, bn.dgamma, loss_fn, 1e-5);
  check_param_grads(bn.beta, bn.dbeta, loss_fn, 1e-5);
  check_param_grads(x.v, dx.v, loss_fn, 1e-5);
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(16);
  for (Act kind : {Act::ReLU, Act::LeakyReLU, Act::Tanh, Act::Sigmoid}) {
    Activation act(kind);
    Tensor x = random_tensor({2, 3, 3, 3}, rng);
    // Keep away from the ReLU kink where finite differences are invalid.
    for (auto& v : x.v)
      if (std::abs(v) < 1e-3) v += 0.1;
    Context ctx;
    auto loss_fn = [&]() { return half_sq(act.forward(x, ctx)); };
    Tensor y = act.forward(x, ctx);
    Tensor dx = act.backward(y);
    check_param_grads(x.v, dx.v, loss_fn);
  }
}

TEST_CASE("linear and pooling gradients match finite differences") {
  Rng rng(17);
  Linear fc(6, 4, &rng);
  Tensor x = random_tensor({3, 6}, rng);
  Context ctx;
  auto loss_fn = [&]() { return half_sq(fc.forward(x, ctx)); };
  Tensor y = fc.forward(x, ctx);
  std::fill(fc.dweight.begin(), fc.dweight.end(), 0.0);
  std::fill(fc.dbias.begin(), fc.dbias.end(), 0.0);
  Tensor dx = fc.backward(y);
  check_param_grads(fc.weight, fc.dweight, loss_fn);
  check_param_grads(fc.bias, fc.dbias, loss_fn);
  check_param_grads(x.v, dx.v, loss_fn);

  GlobalAvgPool gap;
  Tensor xg = random_tensor({2, 3, 4, 4}, rng);
  auto gap_loss = [&]() { return half_sq(gap.forward(xg, ctx)); };
  Tensor yg = gap.forward(xg, ctx);
  Tensor dxg = gap.backward(yg);
  check_param_grads(xg.v, dxg.v, gap_loss);
}

TEST_CASE("residual block gradients match finite differences") {
  Rng rng(18);
  ResidualBlock block(3, 5, 2, &rng);
  Tensor x = random_tensor({2, 3, 6, 6}, rng);
  Context train{true, false};

  auto loss_fn = [&]() { return half_sq(block.forward(x, train)); };
  Tensor y = block.forward(x, train);
  std::vector<ParamRef> params;
  block.collect_params("rb", params);
  for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
  Tensor dx = block.backward(y);
  for (auto& p : params) check_param_grads(*p.value, *p.grad, loss_fn, 1e-4);
  check_param_grads(x.v, dx.v, loss_fn, 1e-4);
}

TEST_CASE("softmax cross entropy value and gradient") {
  Tensor logits({2, 3});
  logits.v = {1.0, 2.0, 0.5, -1.0, 0.0, 3.0};
  std::vector<int> labels{1, 2};
  Tensor dlogits;
  const double loss = softmax_cross_entropy(logits, labels, &dlogits);
  CHECK(loss > 0.0);

  const double h = 1e-6;
  for (std::size_t i = 0; i < logits.v.size(); ++i) {
    const double keep = logits.v[i];
    logits.v[i] = keep + h;
    const double lp = softmax_cross_entropy(logits, labels, nullptr);
    logits.v[i] = keep - h;
    const double lm = softmax_cross_entropy(logits, labels, nullptr);
    logits.v[i] = keep;
    CHECK(dlogits.v[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("adam with zero learning rate is a null update") {
  Rng rng(19);
  Linear fc(4, 2, &rng);
  const auto w0 = fc.weight;
  std::vector<ParamRef> params;
  fc.collect_params("fc", params);
  Adam opt(params, 0.0);
  for (auto& g : fc.dweight) g = 1.0;
  opt.step();
  CHECK(fc.weight == w0);
}

TEST_CASE("adam minimizes a quadratic") {
  std::vector<double> x{5.0, -3.0};
  std::vector<double> g(2, 0.0);
  std::vector<ParamRef> params{{"x", &x, &g}};
  Adam opt(params, 0.05);
  for (int i = 0; i < 2000; ++i) {
    g[0] = x[0];
    g[1] = 4.0 * x[1];
    opt.step();
  }
  CHECK(std::abs(x[0]) < 1e-3);
  CHECK(std::abs(x[1]) < 1e-3);
}

TEST_CASE("sequential chains forwards and backwards") {
  Rng rng(20);
  Sequential net;
  net.add<Conv2d>(2, 4, 3, 1, 1, &rng);
  net.add<BatchNorm2d>(4, &rng);
  net.add<Activation>(Act::LeakyReLU);
  net.add<Conv2d>(4, 2, 3, 2, 1, &rng);
  net.add<Activation>(Act::Tanh);

  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  Context train{true, false};
  auto loss_fn = [&]() { return half_sq(net.forward(x, train)); };
  Tensor y = net.forward(x, train);
  std::vector<ParamRef> params;
  net.collect_params("net", params);
  for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
  Tensor dx = net.backward(y);
  for (auto& p : params) check_param_grads(*p.value, *p.grad, loss_fn, 1e-4);
  check_param_grads(x.v, dx.v, loss_fn, 1e-4);
}
