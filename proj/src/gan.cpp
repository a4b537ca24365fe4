#include "groundgen/gan.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <fstream>
#include <numeric>
#include <sstream>

#include "groundgen/rng.hpp"

namespace groundgen::gan {

// ---------------------------------------------------------------------------
// GanArch

void GanArch::validate() const {
  if (nef < 1) throw ConfigError("nef must be positive");
  if (noise_dim < 1) throw ConfigError("noise_dim must be positive");
  if (base_channels < 16 || base_channels % 16 != 0)
    throw ConfigError("base_channels must be a positive multiple of 16");
}

std::vector<LayerShape> GanArch::generator_shapes() const {
  std::vector<LayerShape> rows;
  const int res[] = {1, 4, 8, 16, 32, 64};
  int c_prev = nef + noise_dim;
  std::string input = "embedding+ random noise";
  for (int i = 0; i < 5; ++i) {
    const int c_out = i < 4 ? g_ch(i) : 3;
    const std::string name = "deconv" + std::to_string(i + 1);
    rows.push_back({name, "4x4", c_prev, c_out, res[i], res[i + 1], input});
    if (i < 4) {
      rows.push_back({name + "_bn", "batchnorm", c_out, c_out, res[i + 1],
                      res[i + 1], name});
      input = name + "_bn";
    }
    c_prev = c_out;
  }
  return rows;
}

std::vector<LayerShape> GanArch::discriminator_shapes() const {
  std::vector<LayerShape> rows;
  const int cb = d_branch_ch();
  rows.push_back({"conv1_1", "4x4", 3, cb, 64, 32, "image"});
  rows.push_back({"conv1_bn1", "batchnorm", cb, cb, 32, 32, "conv1_1"});
  rows.push_back({"conv1_2", "4x4", nef, cb, 64, 32, "embedding"});
  rows.push_back({"conv1_bn2", "batchnorm", cb, cb, 32, 32, "conv1_2"});
  rows.push_back({"conv2", "4x4", 2 * cb, d_ch2(), 32, 16,
                  "conv1_bn1+ conv1_bn2"});
  rows.push_back({"conv2_bn", "batchnorm", d_ch2(), d_ch2(), 16, 16, "conv2"});
  rows.push_back({"conv3", "4x4", d_ch2(), d_ch3(), 16, 8, "conv2_bn"});
  rows.push_back({"conv3_bn", "batchnorm", d_ch3(), d_ch3(), 8, 8, "conv3"});
  rows.push_back({"conv4", "4x4", d_ch3(), d_ch4(), 8, 4, "conv3_bn"});
  rows.push_back({"conv4_bn", "batchnorm", d_ch4(), d_ch4(), 4, 4, "conv4"});
  rows.push_back({"conv5", "4x4", d_ch4(), 1, 4, 1, "conv4_bn"});
  return rows;
}

long GanArch::generator_param_count() const {
  long total = 0;
  int c_prev = nef + noise_dim;
  for (int i = 0; i < 5; ++i) {
    const int c_out = i < 4 ? g_ch(i) : 3;
    total += static_cast<long>(c_prev) * c_out * 16 + c_out;
    if (i < 4) total += 2L * c_out;  // batchnorm scale + shift
    c_prev = c_out;
  }
  return total;
}

long GanArch::discriminator_param_count() const {
  const long cb = d_branch_ch();
  long total = 0;
  total += 3 * cb * 16 + cb + 2 * cb;          // conv1_1 + bn
  total += nef * cb * 16 + cb + 2 * cb;        // conv1_2 + bn
  total += 2 * cb * d_ch2() * 16L + d_ch2() + 2L * d_ch2();
  total += static_cast<long>(d_ch2()) * d_ch3() * 16 + d_ch3() + 2L * d_ch3();
  total += static_cast<long>(d_ch3()) * d_ch4() * 16 + d_ch4() + 2L * d_ch4();
  total += static_cast<long>(d_ch4()) * 16 + 1;  // conv5
  return total;
}

std::string GanArch::describe_generator() const {
  std::ostringstream s;
  s << "g:nef=" << nef << ":base=" << base_channels << ":noise=" << noise_dim;
  return s.str();
}

std::string GanArch::describe_discriminator() const {
  std::ostringstream s;
  s << "d:nef=" << nef << ":base=" << base_channels << ":noise=" << noise_dim;
  return s.str();
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(const GanArch& arch, std::uint64_t init_seed)
    : arch_(arch) {
  arch_.validate();
  Rng rng(init_seed);
  int c_prev = arch_.nef + arch_.noise_dim;
  for (int i = 0; i < 4; ++i) {
    const int c_out = arch_.g_ch(i);
    if (i == 0)
      net_.add<nn::ConvTranspose2d>(c_prev, c_out, 4, 1, 0, &rng);
    else
      net_.add<nn::ConvTranspose2d>(c_prev, c_out, 4, 2, 1, &rng);
    net_.add<nn::BatchNorm2d>(c_out, &rng);
    net_.add<nn::Activation>(nn::Act::ReLU);
    c_prev = c_out;
  }
  net_.add<nn::ConvTranspose2d>(c_prev, 3, 4, 2, 1, &rng);
  net_.add<nn::Activation>(nn::Act::Tanh);
}

nn::Tensor Generator::forward(const nn::Tensor& z, const nn::Tensor& e,
                              const nn::Context& ctx) {
  std::scoped_lock lock(*mu_);
  if (z.shape.size() != 2 || z.dim(1) != arch_.noise_dim)
    throw DimensionError("generator noise must be [N," +
                         std::to_string(arch_.noise_dim) + "]");
  if (e.shape.size() != 2 || e.dim(1) != arch_.nef)
    throw DimensionError("generator embedding must be [N," +
                         std::to_string(arch_.nef) + "] (nef mismatch)");
  if (z.dim(0) != e.dim(0))
    throw DimensionError("noise/embedding batch mismatch");
  const int B = z.dim(0);
  const int d = arch_.nef + arch_.noise_dim;
  // Embedding first, then noise, as a (nef+noise)x1x1 spatial map.
  nn::Tensor x({B, d, 1, 1});
  for (int n = 0; n < B; ++n) {
    double* row = x.sample(n);
    const double* ep = e.sample(n);
    const double* zp = z.sample(n);
    std::copy(ep, ep + arch_.nef, row);
    std::copy(zp, zp + arch_.noise_dim, row + arch_.nef);
  }
  return net_.forward(std::move(x), ctx);
}

void Generator::backward(const nn::Tensor& dimg) {
  std::scoped_lock lock(*mu_);
  net_.backward(dimg);
}

std::vector<nn::ParamRef> Generator::params() {
  std::vector<nn::ParamRef> out;
  net_.collect_params("g", out);
  return out;
}

std::vector<nn::BufferRef> Generator::buffers() {
  std::vector<nn::BufferRef> out;
  net_.collect_buffers("g", out);
  return out;
}

long Generator::param_count() {
  auto p = params();
  const long n = nn::param_count(p);
  if (n != arch_.generator_param_count())
    throw StateError("generator parameter count mismatch vs formula");
  return n;
}

// ---------------------------------------------------------------------------
// Discriminator

namespace {

nn::Tensor concat_channels(const nn::Tensor& a, const nn::Tensor& b) {
  const int B = a.dim(0), H = a.dim(2), W = a.dim(3);
  nn::Tensor out({B, a.dim(1) + b.dim(1), H, W});
  const long pa = a.sample_size(), pb = b.sample_size();
  for (int n = 0; n < B; ++n) {
    std::copy(a.sample(n), a.sample(n) + pa, out.sample(n));
    std::copy(b.sample(n), b.sample(n) + pb, out.sample(n) + pa);
  }
  return out;
}

void split_channels(const nn::Tensor& cat, int c_first, nn::Tensor& a,
                    nn::Tensor& b) {
  const int B = cat.dim(0), H = cat.dim(2), W = cat.dim(3);
  const int c_second = cat.dim(1) - c_first;
  a = nn::Tensor({B, c_first, H, W});
  b = nn::Tensor({B, c_second, H, W});
  for (int n = 0; n < B; ++n) {
    std::copy(cat.sample(n), cat.sample(n) + a.sample_size(), a.sample(n));
    std::copy(cat.sample(n) + a.sample_size(),
              cat.sample(n) + cat.sample_size(), b.sample(n));
  }
}

}  // namespace

// Convolution over an embedding broadcast to nef constant-valued 64x64
// channels, evaluated without materializing the broadcast. For the
// 64->32 (k4, s2, p1) geometry every interior output position sees the full
// kernel, so the map reduces to nine (edge-pattern x edge-pattern) matrices
// of partial kernel sums applied to the embedding. Exactly equal to Conv2d
// on the broadcast image; unit tests pin that equivalence.
class EmbeddingBranchConv {
 public:
  EmbeddingBranchConv(int nef, int c_out)
      : weight(static_cast<std::size_t>(c_out) * nef * 16, 0.0),
        bias(static_cast<std::size_t>(c_out), 0.0),
        dweight(weight.size(), 0.0),
        dbias(bias.size(), 0.0),
        nef_(nef),
        c_out_(c_out) {}

  static constexpr int kOut = kImageSize / 2;

  // Edge pattern along one axis: 0 = first position (tap 0 clipped),
  // 1 = last position (tap 3 clipped), 2 = interior.
  static int pattern(int o) { return o == 0 ? 0 : (o == kOut - 1 ? 1 : 2); }
  static bool tap_in(int p, int t) {
    return p == 2 || (p == 0 ? t >= 1 : t <= 2);
  }

  nn::Tensor forward(const nn::Tensor& e) {
    const int B = e.dim(0);
    if (e.dim(1) != nef_) throw DimensionError("embedding branch nef mismatch");
    e_ = e;
    // Partial kernel sums per (row pattern, col pattern).
    Eigen::MatrixXd S[3][3];
    for (auto& row : S)
      for (auto& m : row) m = Eigen::MatrixXd::Zero(c_out_, nef_);
    for (int co = 0; co < c_out_; ++co)
      for (int ci = 0; ci < nef_; ++ci)
        for (int kh = 0; kh < 4; ++kh)
          for (int kw = 0; kw < 4; ++kw) {
            const double w =
                weight[((static_cast<std::size_t>(co) * nef_ + ci) * 4 + kh) * 4 +
                       kw];
            for (int pr = 0; pr < 3; ++pr)
              for (int pc = 0; pc < 3; ++pc)
                if (tap_in(pr, kh) && tap_in(pc, kw)) S[pr][pc](co, ci) += w;
          }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        E(e.v.data(), B, nef_);
    Eigen::MatrixXd M[3][3];
    for (int pr = 0; pr < 3; ++pr)
      for (int pc = 0; pc < 3; ++pc) M[pr][pc] = E * S[pr][pc].transpose();

    nn::Tensor y({B, c_out_, kOut, kOut});
    for (int b = 0; b < B; ++b) {
      double* yp = y.sample(b);
      for (int co = 0; co < c_out_; ++co)
        for (int oy = 0; oy < kOut; ++oy) {
          const int pr = pattern(oy);
          double* row = yp + (static_cast<std::size_t>(co) * kOut + oy) * kOut;
          const double interior = M[pr][2](b, co) + bias[co];
          row[0] = M[pr][0](b, co) + bias[co];
          for (int ox = 1; ox < kOut - 1; ++ox) row[ox] = interior;
          row[kOut - 1] = M[pr][1](b, co) + bias[co];
        }
    }
    return y;
  }

  // Accumulates dweight/dbias. The embedding is an input, not a learnable
  // quantity, so no input gradient is produced.
  void backward(const nn::Tensor& dy) {
    const int B = dy.dim(0);
    // Per tap (kh,kw) the valid output region excludes the first row/col
    // when the tap index is 0 and the last when it is 3. Reduce dy to the
    // total plus its four edge sums and corners, then assemble.
    Eigen::MatrixXd R[4][4];
    for (auto& row : R)
      for (auto& m : row) m = Eigen::MatrixXd::Zero(B, c_out_);
    for (int b = 0; b < B; ++b) {
      const double* dp = dy.sample(b);
      for (int co = 0; co < c_out_; ++co) {
        const double* plane = dp + static_cast<std::size_t>(co) * kOut * kOut;
        double total = 0, top = 0, bottom = 0, left = 0, right = 0;
        for (int oy = 0; oy < kOut; ++oy)
          for (int ox = 0; ox < kOut; ++ox) {
            const double v = plane[oy * kOut + ox];
            total += v;
            if (oy == 0) top += v;
            if (oy == kOut - 1) bottom += v;
            if (ox == 0) left += v;
            if (ox == kOut - 1) right += v;
          }
        const double c00 = plane[0];
        const double c0r = plane[kOut - 1];
        const double cb0 = plane[(kOut - 1) * kOut];
        const double cbr = plane[(kOut - 1) * kOut + kOut - 1];
        dbias[co] += total;
        for (int kh = 0; kh < 4; ++kh)
          for (int kw = 0; kw < 4; ++kw) {
            double r = total;
            if (kh == 0) r -= top;
            if (kh == 3) r -= bottom;
            if (kw == 0) r -= left;
            if (kw == 3) r -= right;
            if (kh == 0 && kw == 0) r += c00;
            if (kh == 0 && kw == 3) r += c0r;
            if (kh == 3 && kw == 0) r += cb0;
            if (kh == 3 && kw == 3) r += cbr;
            R[kh][kw](b, co) = r;
          }
      }
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        E(e_.v.data(), B, nef_);
    for (int kh = 0; kh < 4; ++kh)
      for (int kw = 0; kw < 4; ++kw) {
        const Eigen::MatrixXd dW = R[kh][kw].transpose() * E;  // c_out x nef
        for (int co = 0; co < c_out_; ++co)
          for (int ci = 0; ci < nef_; ++ci)
            dweight[((static_cast<std::size_t>(co) * nef_ + ci) * 4 + kh) * 4 +
                    kw] += dW(co, ci);
      }
  }

  void collect_params(const std::string& prefix, std::vector<nn::ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight, &dweight});
    out.push_back({prefix + ".bias", &bias, &dbias});
  }

  std::vector<double> weight, bias, dweight, dbias;

 private:
  int nef_, c_out_;
  nn::Tensor e_;
};

Discriminator::Discriminator(const GanArch& arch, std::uint64_t init_seed)
    : arch_(arch),
      conv1_img_(3, arch.d_branch_ch(), 4, 2, 1),
      bn1_img_(arch.d_branch_ch()),
      act_img_(nn::Act::LeakyReLU),
      conv1_emb_(std::make_unique<EmbeddingBranchConv>(arch.nef,
                                                       arch.d_branch_ch())),
      bn1_emb_(arch.d_branch_ch()),
      act_emb_(nn::Act::LeakyReLU),
      conv5_(arch.d_ch4(), 1, 4, 1, 0),
      sigmoid_(nn::Act::Sigmoid),
      branch_ch_(arch.d_branch_ch()) {
  arch_.validate();
  Rng rng(init_seed);
  nn::init_conv_weights(conv1_img_.weight, rng);
  nn::init_bn_params(bn1_img_.gamma, bn1_img_.beta, rng);
  nn::init_conv_weights(conv1_emb_->weight, rng);
  nn::init_bn_params(bn1_emb_.gamma, bn1_emb_.beta, rng);
  const int chans[] = {2 * arch.d_branch_ch(), arch.d_ch2(), arch.d_ch3(),
                       arch.d_ch4()};
  for (int i = 0; i < 3; ++i) {
    trunk_.add<nn::Conv2d>(chans[i], chans[i + 1], 4, 2, 1, &rng);
    trunk_.add<nn::BatchNorm2d>(chans[i + 1], &rng);
    trunk_.add<nn::Activation>(nn::Act::LeakyReLU);
  }
  nn::init_conv_weights(conv5_.weight, rng);
}

Discriminator::Discriminator(Discriminator&&) noexcept = default;
Discriminator& Discriminator::operator=(Discriminator&&) noexcept = default;
Discriminator::~Discriminator() = default;

nn::Tensor Discriminator::trunk_forward(const nn::Tensor& img,
                                        const nn::Tensor& e,
                                        const nn::Context& ctx) {
  if (img.shape.size() != 4 || img.dim(1) != 3 || img.dim(2) != kImageSize ||
      img.dim(3) != kImageSize)
    throw DimensionError("discriminator image must be [N,3,64,64]");
  if (e.shape.size() != 2 || e.dim(1) != arch_.nef)
    throw DimensionError("discriminator embedding must be [N," +
                         std::to_string(arch_.nef) + "] (nef mismatch)");
  if (img.dim(0) != e.dim(0))
    throw DimensionError("image/embedding batch mismatch");
  nn::Tensor a = conv1_img_.forward(img, ctx);
  a = bn1_img_.forward(std::move(a), ctx);
  a = act_img_.forward(std::move(a), ctx);
  nn::Tensor b = conv1_emb_->forward(e);
  b = bn1_emb_.forward(std::move(b), ctx);
  b = act_emb_.forward(std::move(b), ctx);
  return trunk_.forward(concat_channels(a, b), ctx);
}

nn::Tensor Discriminator::forward(const nn::Tensor& img, const nn::Tensor& e,
                                  const nn::Context& ctx) {
  std::scoped_lock lock(*mu_);
  nn::Tensor t = trunk_forward(img, e, ctx);
  t = conv5_.forward(std::move(t), ctx);
  t = sigmoid_.forward(std::move(t), ctx);
  nn::Tensor p({img.dim(0)});
  for (int n = 0; n < img.dim(0); ++n) p.v[static_cast<std::size_t>(n)] = t.sample(n)[0];
  return p;
}

nn::Tensor Discriminator::backward(const nn::Tensor& dprob) {
  std::scoped_lock lock(*mu_);
  const int B = dprob.dim(0);
  nn::Tensor d4({B, 1, 1, 1});
  for (int n = 0; n < B; ++n) d4.sample(n)[0] = dprob.v[static_cast<std::size_t>(n)];
  nn::Tensor g = sigmoid_.backward(d4);
  g = conv5_.backward(g);
  g = trunk_.backward(g);
  nn::Tensor da, db;
  split_channels(g, branch_ch_, da, db);
  da = act_img_.backward(da);
  da = bn1_img_.backward(da);
  nn::Tensor dimg = conv1_img_.backward(da);
  // The embedding branch backward only accumulates parameter gradients; the
  // embedding itself is an input, not a learnable quantity.
  db = act_emb_.backward(db);
  db = bn1_emb_.backward(db);
  conv1_emb_->backward(db);
  return dimg;
}

nn::Tensor Discriminator::features(const nn::Tensor& img, const nn::Tensor& e) {
  std::scoped_lock lock(*mu_);
  nn::Context eval;
  nn::Tensor t = trunk_forward(img, e, eval);
  const int B = t.dim(0), C = t.dim(1);
  const long plane = static_cast<long>(t.dim(2)) * t.dim(3);
  nn::Tensor f({B, C});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const double* p = t.sample(n) + c * plane;
      double s = 0.0;
      for (long i = 0; i < plane; ++i) s += p[i];
      f.v[static_cast<std::size_t>(n) * C + c] = s / static_cast<double>(plane);
    }
  return f;
}

std::vector<nn::ParamRef> Discriminator::params() {
  std::vector<nn::ParamRef> out;
  conv1_img_.collect_params("d.conv1_1", out);
  bn1_img_.collect_params("d.conv1_bn1", out);
  conv1_emb_->collect_params("d.conv1_2", out);
  bn1_emb_.collect_params("d.conv1_bn2", out);
  trunk_.collect_params("d.trunk", out);
  conv5_.collect_params("d.conv5", out);
  return out;
}

std::vector<nn::BufferRef> Discriminator::buffers() {
  std::vector<nn::BufferRef> out;
  bn1_img_.collect_buffers("d.conv1_bn1", out);
  bn1_emb_.collect_buffers("d.conv1_bn2", out);
  trunk_.collect_buffers("d.trunk", out);
  return out;
}

long Discriminator::param_count() {
  auto p = params();
  const long n = nn::param_count(p);
  if (n != arch_.discriminator_param_count())
    throw StateError("discriminator parameter count mismatch vs formula");
  return n;
}

// ---------------------------------------------------------------------------
// Losses

namespace {
double clamped(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }
}  // namespace

double d_loss(const std::vector<double>& p_real,
              const std::vector<double>& p_fake) {
  if (p_real.empty() || p_real.size() != p_fake.size())
    throw DimensionError("d_loss: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p_real.size(); ++i)
    total += -(std::log(clamped(p_real[i])) + std::log(1.0 - clamped(p_fake[i])));
  return total / static_cast<double>(p_real.size());
}

void d_loss_grads(const std::vector<double>& p_real,
                  const std::vector<double>& p_fake,
                  std::vector<double>& dp_real, std::vector<double>& dp_fake) {
  const double inv_b = 1.0 / static_cast<double>(p_real.size());
  dp_real.resize(p_real.size());
  dp_fake.resize(p_fake.size());
  for (std::size_t i = 0; i < p_real.size(); ++i) {
    dp_real[i] = (p_real[i] < kProbEps || p_real[i] > 1.0 - kProbEps)
                     ? 0.0
                     : -inv_b / p_real[i];
    dp_fake[i] = (p_fake[i] < kProbEps || p_fake[i] > 1.0 - kProbEps)
                     ? 0.0
                     : inv_b / (1.0 - p_fake[i]);
  }
}

double g_loss(const std::vector<double>& p_fake, bool saturating) {
  if (p_fake.empty()) throw DimensionError("g_loss: empty batch");
  double total = 0.0;
  for (double p : p_fake)
    total += saturating ? std::log(1.0 - clamped(p)) : -std::log(clamped(p));
  return total / static_cast<double>(p_fake.size());
}

void g_loss_grad(const std::vector<double>& p_fake, bool saturating,
                 std::vector<double>& dp) {
  const double inv_b = 1.0 / static_cast<double>(p_fake.size());
  dp.resize(p_fake.size());
  for (std::size_t i = 0; i < p_fake.size(); ++i) {
    const double p = p_fake[i];
    if (p < kProbEps || p > 1.0 - kProbEps) {
      dp[i] = 0.0;
    } else {
      dp[i] = saturating ? -inv_b / (1.0 - p) : -inv_b / p;
    }
  }
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 2)
    throw ConfigError("batch_size must be at least 2 (batchnorm)");
  if (epochs < 1 && max_steps < 1)
    throw ConfigError("nothing to train: epochs and max_steps both empty");
}

std::string LossHistory::to_csv() const {
  std::ostringstream s;
  s << "step,d_loss,g_loss\n";
  char buf[80];
  for (const auto& r : steps) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g\n", r.step, r.d, r.g);
    s << buf;
  }
  return s.str();
}

void LossHistory::save_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << to_csv();
}

LossHistory LossHistory::load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  LossHistory h;
  std::string line;
  std::getline(f, line);  // header
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    StepLoss r;
    if (std::sscanf(line.c_str(), "%ld,%lg,%lg", &r.step, &r.d, &r.g) != 3)
      throw ParseError("bad loss row", lineno);
    h.steps.push_back(r);
  }
  return h;
}

namespace {

nn::Tensor batch_images(const std::vector<geo::PairedSample>& samples,
                        const std::vector<int>& idx, int start, int B) {
  std::vector<const geo::ImageU8*> ptrs;
  ptrs.reserve(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i)
    ptrs.push_back(&samples[static_cast<std::size_t>(idx[start + i])].ground.pixels);
  return images_to_tensor(ptrs);
}

nn::Tensor batch_embeddings(const std::vector<embed::Embedding>& embs,
                            const std::vector<int>& idx, int start, int B) {
  const int nef = embs.front().nef();
  nn::Tensor e({B, nef});
  for (int i = 0; i < B; ++i) {
    const auto& v = embs[static_cast<std::size_t>(idx[start + i])].values;
    std::copy(v.data(), v.data() + nef, e.sample(i));
  }
  return e;
}

nn::Tensor draw_noise(Rng& rng, int B, int dim) {
  nn::Tensor z({B, dim});
  for (double& v : z.v) v = rng.normal();
  return z;
}

nn::Tensor to_grad_tensor(const std::vector<double>& dp) {
  nn::Tensor t({static_cast<int>(dp.size())});
  std::copy(dp.begin(), dp.end(), t.v.begin());
  return t;
}

}  // namespace

LossHistory train(Generator& g, Discriminator& d,
                  const std::vector<geo::PairedSample>& samples,
                  const embed::Embedder& embedder, const TrainConfig& cfg) {
  cfg.validate();
  if (g.arch().nef != embedder.nef() || d.arch().nef != embedder.nef())
    throw DimensionError("model nef does not match the embedding function");
  const int B = cfg.batch_size;
  const int n = static_cast<int>(samples.size());
  if (n < B) throw ConfigError("need at least batch_size samples to train");

  std::vector<embed::Embedding> embs;
  embs.reserve(samples.size());
  for (const auto& s : samples) embs.push_back(embedder(s.overhead));

  Rng rng(derive_seed(cfg.seed, "gan/train"));
  const bool learning = cfg.learning_rate > 0.0;
  nn::Context tctx{true, learning};

  nn::Adam adam_g(g.params(), cfg.learning_rate, cfg.beta1, cfg.beta2);
  nn::Adam adam_d(d.params(), cfg.learning_rate, cfg.beta1, cfg.beta2);

  LossHistory hist;
  long step = 0;
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(idx);
    for (int start = 0; start + B <= n; start += B) {
      nn::Tensor x = batch_images(samples, idx, start, B);
      nn::Tensor e = batch_embeddings(embs, idx, start, B);

      // Discriminator: one real batch, one fake batch from the same patches.
      nn::Tensor z = draw_noise(rng, B, g.arch().noise_dim);
      nn::Tensor fake = g.forward(z, e, tctx);

      // The real backward must run before the fake forward; a forward pass
      // overwrites the layer caches its backward needs.
      std::vector<double> p_real, p_fake;
      std::vector<double> dp_real(static_cast<std::size_t>(B));
      std::vector<double> dp_fake(static_cast<std::size_t>(B));
      const double inv_b = 1.0 / static_cast<double>(B);
      adam_d.zero_grad();
      {
        nn::Tensor pr = d.forward(x, e, tctx);
        p_real.assign(pr.v.begin(), pr.v.end());
      }
      for (int i = 0; i < B; ++i) {
        const double p = p_real[static_cast<std::size_t>(i)];
        dp_real[static_cast<std::size_t>(i)] =
            (p < kProbEps || p > 1.0 - kProbEps) ? 0.0 : -inv_b / p;
      }
      d.backward(to_grad_tensor(dp_real));
      if (cfg.d_update == DUpdate::Separate) {
        adam_d.step();
        adam_d.zero_grad();
      }
      {
        nn::Tensor pf = d.forward(fake, e, tctx);
        p_fake.assign(pf.v.begin(), pf.v.end());
      }
      for (int i = 0; i < B; ++i) {
        const double p = p_fake[static_cast<std::size_t>(i)];
        dp_fake[static_cast<std::size_t>(i)] =
            (p < kProbEps || p > 1.0 - kProbEps) ? 0.0 : inv_b / (1.0 - p);
      }
      d.backward(to_grad_tensor(dp_fake));
      adam_d.step();
      const double ld = d_loss(p_real, p_fake);

      // Generator through the discriminator, fresh noise.
      nn::Tensor z2 = draw_noise(rng, B, g.arch().noise_dim);
      nn::Tensor fake2 = g.forward(z2, e, tctx);
      std::vector<double> p_g, dp_g;
      {
        nn::Tensor pg = d.forward(fake2, e, tctx);
        p_g.assign(pg.v.begin(), pg.v.end());
      }
      const double lg = g_loss(p_g, cfg.saturating_g);
      g_loss_grad(p_g, cfg.saturating_g, dp_g);
      nn::Tensor dimg = d.backward(to_grad_tensor(dp_g));
      adam_d.zero_grad();  // that pass trains G only
      adam_g.zero_grad();
      g.backward(dimg);
      adam_g.step();

      ++step;
      if (!std::isfinite(ld) || !std::isfinite(lg))
        throw DivergenceError("non-finite loss", step);
      hist.steps.push_back({step, ld, lg});
      if (cfg.max_steps > 0 && step >= cfg.max_steps) return hist;
    }
  }
  return hist;
}

double real_fake_accuracy(Generator& g, Discriminator& d,
                          const std::vector<geo::PairedSample>& samples,
                          const embed::Embedder& embedder, std::uint64_t seed) {
  if (samples.empty()) throw ConfigError("no samples for evaluation");
  Rng rng(derive_seed(seed, "gan/eval"));
  nn::Context eval;
  const int chunk = 32;
  long correct = 0, total = 0;
  std::vector<embed::Embedding> embs;
  for (const auto& s : samples) embs.push_back(embedder(s.overhead));
  std::vector<int> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int start = 0; start < static_cast<int>(samples.size()); start += chunk) {
    const int B = std::min<int>(chunk, static_cast<int>(samples.size()) - start);
    nn::Tensor x = batch_images(samples, idx, start, B);
    nn::Tensor e = batch_embeddings(embs, idx, start, B);
    nn::Tensor z = draw_noise(rng, B, g.arch().noise_dim);
    nn::Tensor fake = g.forward(z, e, eval);
    nn::Tensor pr = d.forward(x, e, eval);
    nn::Tensor pf = d.forward(fake, e, eval);
    for (int i = 0; i < B; ++i) {
      if (pr.v[static_cast<std::size_t>(i)] > 0.5) ++correct;
      if (pf.v[static_cast<std::size_t>(i)] < 0.5) ++correct;
      total += 2;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Conversions

nn::Tensor image_to_tensor(const geo::ImageU8& img) {
  std::vector<const geo::ImageU8*> one{&img};
  return images_to_tensor(one);
}

nn::Tensor images_to_tensor(const std::vector<const geo::ImageU8*>& batch) {
  if (batch.empty()) throw DimensionError("empty image batch");
  const int H = batch[0]->h, W = batch[0]->w, C = batch[0]->c;
  nn::Tensor t({static_cast<int>(batch.size()), C, H, W});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const geo::ImageU8& img = *batch[n];
    if (img.h != H || img.w != W || img.c != C)
      throw DimensionError("image batch shapes differ");
    double* p = t.sample(static_cast<int>(n));
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          *p++ = img.at(y, x, c) / 127.5 - 1.0;
  }
  return t;
}

geo::ImageU8 tensor_to_image(const nn::Tensor& t, int n) {
  const int C = t.dim(1), H = t.dim(2), W = t.dim(3);
  geo::ImageU8 img(H, W, C);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double v = (t.at(n, c, y, x) + 1.0) * 127.5;
        img.at(y, x, c) =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
  return img;
}

nn::Tensor embeddings_to_tensor(const std::vector<embed::Embedding>& rows) {
  if (rows.empty()) throw DimensionError("empty embedding batch");
  const int nef = rows.front().nef();
  nn::Tensor e({static_cast<int>(rows.size()), nef});
  for (std::size_t n = 0; n < rows.size(); ++n) {
    if (rows[n].nef() != nef) throw DimensionError("embedding sizes differ");
    std::copy(rows[n].values.data(), rows[n].values.data() + nef,
              e.sample(static_cast<int>(n)));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_blob(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_blob(std::ifstream& f, std::vector<double>& v, const std::string& path) {
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw ParseError("truncated checkpoint blob: " + path);
}

struct HeaderInfo {
  std::string kind, arch;
  int nef = 0, base = 0, noise = 0;
  std::uint64_t seed = 0;
  long step = 0;
  std::vector<std::pair<std::string, long>> tensors;
};

void save_model(const std::string& path, const std::string& kind,
                const std::string& arch_desc, const GanArch& arch,
                std::vector<nn::ParamRef> params,
                std::vector<nn::BufferRef> buffers, std::uint64_t seed,
                long step) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "groundgen checkpoint v1\n";
  f << "kind = " << kind << "\n";
  f << "arch = " << arch_desc << "\n";
  f << "arch_hash = " << hex64(fnv1a64(arch_desc)) << "\n";
  f << "nef = " << arch.nef << "\n";
  f << "base_channels = " << arch.base_channels << "\n";
  f << "noise_dim = " << arch.noise_dim << "\n";
  f << "seed = " << seed << "\n";
  f << "step = " << step << "\n";
  for (const auto& p : params)
    f << "tensor = " << p.name << " " << p.value->size() << "\n";
  for (const auto& b : buffers)
    f << "tensor = " << b.name << " " << b.value->size() << "\n";
  f << "end\n";
  for (const auto& p : params) write_blob(f, *p.value);
  for (const auto& b : buffers) write_blob(f, *b.value);
  if (!f) throw IoError("short write: " + path);
}

HeaderInfo read_header(std::ifstream& f, const std::string& path) {
  std::string line;
  if (!std::getline(f, line) || line != "groundgen checkpoint v1")
    throw ParseError("not a groundgen checkpoint: " + path);
  HeaderInfo h;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line == "end") return h;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError("bad checkpoint header", lineno);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    if (key == "kind") h.kind = val;
    else if (key == "arch") h.arch = val;
    else if (key == "nef") h.nef = std::stoi(val);
    else if (key == "base_channels") h.base = std::stoi(val);
    else if (key == "noise_dim") h.noise = std::stoi(val);
    else if (key == "seed") h.seed = std::stoull(val);
    else if (key == "step") h.step = std::stol(val);
    else if (key == "tensor") {
      const auto sp = val.rfind(' ');
      h.tensors.emplace_back(val.substr(0, sp), std::stol(val.substr(sp + 1)));
    }
  }
  throw ParseError("checkpoint header missing 'end': " + path);
}

void load_model(const std::string& path, const std::string& expect_kind,
                const std::string& arch_desc, std::vector<nn::ParamRef> params,
                std::vector<nn::BufferRef> buffers) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  HeaderInfo h = read_header(f, path);
  if (h.kind != expect_kind)
    throw ParseError("checkpoint kind is '" + h.kind + "', expected '" +
                     expect_kind + "'");
  if (h.arch != arch_desc)
    throw ParseError("checkpoint architecture mismatch: " + h.arch + " vs " +
                     arch_desc);
  std::size_t t = 0;
  auto check = [&](const std::string& name, std::size_t size) {
    if (t >= h.tensors.size() || h.tensors[t].first != name ||
        h.tensors[t].second != static_cast<long>(size))
      throw ParseError("checkpoint tensor table mismatch at " + name);
    ++t;
  };
  for (const auto& p : params) check(p.name, p.value->size());
  for (const auto& b : buffers) check(b.name, b.value->size());
  for (auto& p : params) read_blob(f, *p.value, path);
  for (auto& b : buffers) read_blob(f, *b.value, path);
}

GanArch arch_from_header(const std::string& path, const std::string& kind) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  HeaderInfo h = read_header(f, path);
  if (h.kind != kind)
    throw ParseError("checkpoint kind is '" + h.kind + "', expected '" + kind +
                     "'");
  GanArch arch;
  arch.nef = h.nef;
  arch.base_channels = h.base;
  arch.noise_dim = h.noise;
  arch.validate();
  return arch;
}

}  // namespace

void save_generator(Generator& g, const std::string& path, std::uint64_t seed,
                    long step) {
  save_model(path, "generator", g.describe(), g.arch(), g.params(),
             g.buffers(), seed, step);
}

void save_discriminator(Discriminator& d, const std::string& path,
                        std::uint64_t seed, long step) {
  save_model(path, "discriminator", d.describe(), d.arch(), d.params(),
             d.buffers(), seed, step);
}

Generator load_generator(const std::string& path) {
  Generator g(arch_from_header(path, "generator"), 0);
  load_model(path, "generator", g.describe(), g.params(), g.buffers());
  return g;
}

Discriminator load_discriminator(const std::string& path) {
  Discriminator d(arch_from_header(path, "discriminator"), 0);
  load_model(path, "discriminator", d.describe(), d.params(), d.buffers());
  return d;
}

}  // namespace groundgen::gan
