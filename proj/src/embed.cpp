#include "groundgen/embed.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>

#include "groundgen/nn.hpp"
#include "groundgen/rng.hpp"

namespace groundgen::embed {

std::string to_string(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::Grayscale:
      return "grayscale";
    case EmbeddingKind::Hsv:
      return "hsv";
    case EmbeddingKind::Cnn:
      return "cnn";
  }
  return "?";
}

EmbeddingKind embedding_kind_from_string(const std::string& s) {
  if (s == "grayscale") return EmbeddingKind::Grayscale;
  if (s == "hsv") return EmbeddingKind::Hsv;
  if (s == "cnn") return EmbeddingKind::Cnn;
  throw ConfigError("unknown embedding kind: " + s);
}

void Embedding::validate() const {
  for (long i = 0; i < values.size(); ++i)
    if (!(values[i] >= -1.0 && values[i] <= 1.0))
      throw OutOfBoundsError("embedding value outside [-1,1] at " +
                             std::to_string(i));
}

namespace {

void require_patch(const geo::OverheadPatch& patch) {
  if (patch.pixels.h != geo::kDefaultPatchSize ||
      patch.pixels.w != geo::kDefaultPatchSize || patch.pixels.c != 3)
    throw DimensionError("embedding expects a 10x10x3 overhead patch");
}

// Standard RGB->HSV; inputs in [0,1], H in [0,360). Achromatic pixels get
// H = 0 so the map stays deterministic.
void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  v = mx;
  s = mx == 0.0 ? 0.0 : delta / mx;
  if (delta == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = 60.0 * std::fmod((g - b) / delta, 6.0);
  else if (mx == g)
    h = 60.0 * ((b - r) / delta + 2.0);
  else
    h = 60.0 * ((r - g) / delta + 4.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
}

}  // namespace

Embedding embed_grayscale(const geo::OverheadPatch& patch) {
  require_patch(patch);
  const int s = patch.patch_size;
  Embedding e;
  e.kind = EmbeddingKind::Grayscale;
  e.values.resize(static_cast<long>(s) * s);
  long i = 0;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double gray = (patch.pixels.at(y, x, 0) + patch.pixels.at(y, x, 1) +
                           patch.pixels.at(y, x, 2)) /
                          3.0;
      e.values[i++] = 2.0 * gray / 255.0 - 1.0;
    }
  return e;
}

Embedding embed_hsv(const geo::OverheadPatch& patch) {
  require_patch(patch);
  const int s = patch.patch_size;
  Embedding e;
  e.kind = EmbeddingKind::Hsv;
  e.values.resize(static_cast<long>(s) * s * 3);
  long i = 0;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double h, sat, val;
      rgb_to_hsv(patch.pixels.at(y, x, 0) / 255.0,
                 patch.pixels.at(y, x, 1) / 255.0,
                 patch.pixels.at(y, x, 2) / 255.0, h, sat, val);
      e.values[i++] = 2.0 * h / 360.0 - 1.0;
      e.values[i++] = 2.0 * sat - 1.0;
      e.values[i++] = 2.0 * val - 1.0;
    }
  return e;
}

// ---------------------------------------------------------------------------
// PCA

PcaProjection PcaProjection::fit(const Eigen::MatrixXd& features, int out_dim) {
  const long n = features.rows();
  const long d = features.cols();
  if (n < out_dim)
    throw InsufficientSamplesError("PCA needs at least " +
                                   std::to_string(out_dim) + " samples, got " +
                                   std::to_string(n));
  if (!features.allFinite()) throw Error("PCA input has non-finite values");

  PcaProjection p;
  p.mean_ = features.colwise().mean();
  Eigen::MatrixXd centered = features.rowwise() - p.mean_.transpose();
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");

  // Eigenvalues come back ascending; take the trailing out_dim, descending.
  p.components_.resize(out_dim, d);
  for (int k = 0; k < out_dim; ++k) {
    Eigen::VectorXd comp = eig.eigenvectors().col(d - 1 - k);
    // Sign convention: largest-magnitude coordinate positive.
    long imax = 0;
    comp.cwiseAbs().maxCoeff(&imax);
    if (comp[imax] < 0.0) comp = -comp;
    p.components_.row(k) = comp.transpose();
  }

  Eigen::MatrixXd proj = centered * p.components_.transpose();  // n x out_dim
  p.proj_min_ = proj.colwise().minCoeff();
  p.proj_max_ = proj.colwise().maxCoeff();
  p.fingerprint_ = fnv1a64(features.data(),
                           static_cast<std::size_t>(n * d) * sizeof(double));
  p.fitted_ = true;
  return p;
}

Eigen::VectorXd PcaProjection::project(const Eigen::VectorXd& x) const {
  if (!fitted_) throw StateError("PCA projection not fitted");
  if (x.size() != mean_.size())
    throw DimensionError("PCA input dimension mismatch");
  return components_ * (x - mean_);
}

void PcaProjection::save(const std::string& path) const {
  if (!fitted_) throw StateError("cannot save an unfitted PCA projection");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "groundgen pca v1\n";
  f << "in_dim = " << in_dim() << "\n";
  f << "out_dim = " << out_dim() << "\n";
  f << "sign_convention = largest-coordinate-positive\n";
  f << "fingerprint = " << hex64(fingerprint_) << "\n";
  f << "end\n";
  auto blob = [&](const double* p, long count) {
    f.write(reinterpret_cast<const char*>(p),
            static_cast<std::streamsize>(count * sizeof(double)));
  };
  blob(mean_.data(), mean_.size());
  blob(components_.data(), components_.size());
  blob(proj_min_.data(), proj_min_.size());
  blob(proj_max_.data(), proj_max_.size());
  if (!f) throw IoError("short write: " + path);
}

PcaProjection PcaProjection::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "groundgen pca v1")
    throw ParseError("not a groundgen pca file: " + path);
  int in_dim = 0, out_dim = 0;
  std::uint64_t fp = 0;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line == "end") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("bad header line", lineno);
    const std::string key = line.substr(0, line.find(' '));
    const std::string val = line.substr(eq + 2);
    if (key == "in_dim") in_dim = std::stoi(val);
    if (key == "out_dim") out_dim = std::stoi(val);
    if (key == "fingerprint") fp = std::stoull(val, nullptr, 16);
  }
  if (in_dim <= 0 || out_dim <= 0)
    throw ParseError("pca header missing dimensions: " + path);
  PcaProjection p;
  p.mean_.resize(in_dim);
  p.components_.resize(out_dim, in_dim);
  p.proj_min_.resize(out_dim);
  p.proj_max_.resize(out_dim);
  p.fingerprint_ = fp;
  auto blob = [&](double* dst, long count) {
    f.read(reinterpret_cast<char*>(dst),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw ParseError("truncated pca blob: " + path);
  };
  blob(p.mean_.data(), p.mean_.size());
  blob(p.components_.data(), p.components_.size());
  blob(p.proj_min_.data(), p.proj_min_.size());
  blob(p.proj_max_.data(), p.proj_max_.size());
  p.fitted_ = true;
  return p;
}

// ---------------------------------------------------------------------------
// Seeded conv encoder

struct SeededConvEncoder::Impl {
  nn::Sequential net;
};

SeededConvEncoder::SeededConvEncoder(std::uint64_t seed)
    : impl_(std::make_unique<Impl>()), seed_(seed) {
  Rng rng(seed);
  impl_->net.add<nn::Conv2d>(3, 32, 3, 1, 1, &rng, nn::Init::He);
  impl_->net.add<nn::Activation>(nn::Act::ReLU);
  impl_->net.add<nn::Conv2d>(32, 128, 3, 2, 1, &rng, nn::Init::He);
  impl_->net.add<nn::Activation>(nn::Act::ReLU);
  impl_->net.add<nn::Conv2d>(128, kDescriptorDim, 3, 2, 1, &rng, nn::Init::He);
  impl_->net.add<nn::Activation>(nn::Act::ReLU);
  impl_->net.add<nn::GlobalAvgPool>();
}

SeededConvEncoder::~SeededConvEncoder() = default;

Eigen::VectorXd SeededConvEncoder::descriptor(
    const geo::OverheadPatch& patch) const {
  require_patch(patch);
  const int s = patch.patch_size;
  nn::Tensor x({1, 3, s, s});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < s; ++y)
      for (int xx = 0; xx < s; ++xx)
        x.at(0, ch, y, xx) = patch.pixels.at(y, xx, ch) / 127.5 - 1.0;
  nn::Context ctx;  // eval
  nn::Tensor out = impl_->net.forward(std::move(x), ctx);
  Eigen::VectorXd d(kDescriptorDim);
  for (int i = 0; i < kDescriptorDim; ++i) d[i] = out.v[static_cast<std::size_t>(i)];
  return d;
}

std::string SeededConvEncoder::recipe() const {
  return "seeded-conv(seed=" + std::to_string(seed_) +
         ",conv3x3:3-32/s1,relu,conv3x3:32-128/s2,relu,conv3x3:128-1024/s2,"
         "relu,gap)";
}

std::shared_ptr<PatchEncoder> make_default_encoder(std::uint64_t seed) {
  return std::make_shared<SeededConvEncoder>(seed);
}

Embedding embed_cnn(const geo::OverheadPatch& patch, const PatchEncoder& encoder,
                    const PcaProjection& pca, std::atomic<long>* clamp_count,
                    std::atomic<long>* total_count) {
  if (!pca.fitted()) throw StateError("CNN embedding requires a fitted PCA");
  if (encoder.dim() != pca.in_dim())
    throw DimensionError("encoder descriptor does not match PCA input");
  const Eigen::VectorXd proj = pca.project(encoder.descriptor(patch));
  Embedding e;
  e.kind = EmbeddingKind::Cnn;
  e.values.resize(proj.size());
  long clamped = 0;
  for (long i = 0; i < proj.size(); ++i) {
    const double span = pca.proj_max()[i] - pca.proj_min()[i];
    double v = span > 0.0 ? 2.0 * (proj[i] - pca.proj_min()[i]) / span - 1.0 : 0.0;
    if (v < -1.0 || v > 1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++clamped;
    }
    e.values[i] = v;
  }
  if (clamp_count) *clamp_count += clamped;
  if (total_count) *total_count += proj.size();
  return e;
}

CnnEmbedder::CnnEmbedder(std::shared_ptr<PatchEncoder> encoder,
                         PcaProjection pca)
    : encoder_(std::move(encoder)), pca_(std::move(pca)) {
  if (!encoder_)
    throw DependencyError(
        "CNN patch encoder unavailable; use the grayscale or hsv embedding");
  if (!pca_.fitted()) throw StateError("CNN embedder requires a fitted PCA");
}

Embedding CnnEmbedder::operator()(const geo::OverheadPatch& p) const {
  return embed_cnn(p, *encoder_, pca_, &clamped_, &total_);
}

double CnnEmbedder::clamp_rate() const {
  const long t = total_.load();
  return t == 0 ? 0.0 : static_cast<double>(clamped_.load()) / static_cast<double>(t);
}

}  // namespace groundgen::embed
