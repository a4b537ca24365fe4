#include "groundgen/features.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "groundgen/rng.hpp"

namespace groundgen::features {

void FeatureVector::validate() const {
  for (long i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw Error("non-finite feature value at " + std::to_string(i));
}

std::string ZPolicy::describe() const {
  switch (kind) {
    case Kind::FixedZero:
      return "fixed-zero";
    case Kind::FixedSeed:
      return "fixed-seed(" + std::to_string(seed) + ")";
    case Kind::AverageOfK:
      return "average-of-" + std::to_string(k) + "(" + std::to_string(seed) + ")";
  }
  return "?";
}

Eigen::MatrixXd extract_feature_batch(gan::Discriminator& d,
                                      const nn::Tensor& imgs,
                                      const nn::Tensor& emb) {
  const nn::Tensor f = d.features(imgs, emb);
  const int B = f.dim(0), D = f.dim(1);
  Eigen::MatrixXd out(B, D);
  for (int n = 0; n < B; ++n)
    for (int j = 0; j < D; ++j)
      out(n, j) = f.v[static_cast<std::size_t>(n) * D + j];
  return out;
}

FeatureVector extract_feature(gan::Discriminator& d, const geo::ImageU8& img,
                              const embed::Embedding& e) {
  const nn::Tensor x = gan::image_to_tensor(img);
  const nn::Tensor emb = gan::embeddings_to_tensor({e});
  const Eigen::MatrixXd f = extract_feature_batch(d, x, emb);
  FeatureVector out;
  out.values = f.row(0).transpose();
  return out;
}

namespace {

// The fixed noise set a policy stands for; identical for every patch so the
// pipeline is a pure function of the patch.
std::vector<nn::Tensor> policy_noise(const ZPolicy& p, int noise_dim) {
  std::vector<nn::Tensor> zs;
  const int k = p.kind == ZPolicy::Kind::AverageOfK ? p.k : 1;
  if (k < 1) throw ConfigError("z policy needs k >= 1");
  for (int j = 0; j < k; ++j) {
    nn::Tensor z({1, noise_dim});
    if (p.kind != ZPolicy::Kind::FixedZero) {
      Rng rng(derive_seed(p.seed, "features/z/" + std::to_string(j)));
      for (auto& v : z.v) v = rng.normal();
    }
    zs.push_back(std::move(z));
  }
  return zs;
}

}  // namespace

FeatureVector extract_feature_from_overhead(gan::Generator& g,
                                            gan::Discriminator& d,
                                            const geo::OverheadPatch& patch,
                                            const embed::Embedder& embedder,
                                            const ZPolicy& z_policy) {
  if (g.arch().nef != d.arch().nef)
    throw DimensionError("generator/discriminator nef mismatch");
  const embed::Embedding e = embedder(patch);
  const nn::Tensor emb = gan::embeddings_to_tensor({e});
  const auto zs = policy_noise(z_policy, g.arch().noise_dim);
  nn::Context eval;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d.arch().feature_dim());
  for (const auto& z : zs) {
    const nn::Tensor fake = g.forward(z, emb, eval);
    acc += extract_feature_batch(d, fake, emb).row(0).transpose();
  }
  FeatureVector out;
  out.values = acc / static_cast<double>(zs.size());
  out.location = patch.center;
  return out;
}

std::vector<FeatureVector> extract_features_from_overheads(
    gan::Generator& g, gan::Discriminator& d,
    const std::vector<geo::PairedSample>& samples,
    const embed::Embedder& embedder, const ZPolicy& z_policy, int batch_size) {
  const auto zs = policy_noise(z_policy, g.arch().noise_dim);
  nn::Context eval;
  const int n = static_cast<int>(samples.size());
  std::vector<FeatureVector> out(static_cast<std::size_t>(n));
  for (int start = 0; start < n; start += batch_size) {
    const int B = std::min(batch_size, n - start);
    std::vector<embed::Embedding> embs;
    embs.reserve(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i)
      embs.push_back(embedder(samples[static_cast<std::size_t>(start + i)].overhead));
    const nn::Tensor emb = gan::embeddings_to_tensor(embs);
    Eigen::MatrixXd acc =
        Eigen::MatrixXd::Zero(B, d.arch().feature_dim());
    for (const auto& z1 : zs) {
      nn::Tensor z({B, g.arch().noise_dim});
      for (int i = 0; i < B; ++i)
        std::copy(z1.v.begin(), z1.v.end(), z.sample(i));
      const nn::Tensor fake = g.forward(z, emb, eval);
      acc += extract_feature_batch(d, fake, emb);
    }
    acc /= static_cast<double>(zs.size());
    for (int i = 0; i < B; ++i) {
      out[static_cast<std::size_t>(start + i)].values = acc.row(i).transpose();
      out[static_cast<std::size_t>(start + i)].location =
          samples[static_cast<std::size_t>(start + i)].overhead.center;
    }
  }
  return out;
}

std::vector<FeatureVector> extract_features_from_ground_images(
    gan::Discriminator& d, const std::vector<geo::PairedSample>& samples,
    const embed::Embedder& embedder, int batch_size) {
  const int n = static_cast<int>(samples.size());
  std::vector<FeatureVector> out(static_cast<std::size_t>(n));
  for (int start = 0; start < n; start += batch_size) {
    const int B = std::min(batch_size, n - start);
    std::vector<const geo::ImageU8*> imgs;
    std::vector<embed::Embedding> embs;
    for (int i = 0; i < B; ++i) {
      const auto& s = samples[static_cast<std::size_t>(start + i)];
      imgs.push_back(&s.ground.pixels);
      embs.push_back(embedder(s.overhead));
    }
    const Eigen::MatrixXd f = extract_feature_batch(
        d, gan::images_to_tensor(imgs), gan::embeddings_to_tensor(embs));
    for (int i = 0; i < B; ++i) {
      out[static_cast<std::size_t>(start + i)].values = f.row(i).transpose();
      out[static_cast<std::size_t>(start + i)].location =
          samples[static_cast<std::size_t>(start + i)].ground.location;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void save_features_csv(const std::string& path,
                       const std::vector<FeatureVector>& feats) {
  if (feats.empty()) throw ConfigError("refusing to write an empty feature set");
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  const int D = feats.front().dim();
  f << "lat,lon";
  for (int j = 0; j < D; ++j) f << ",f" << j;
  f << "\n";
  char buf[40];
  for (const auto& fv : feats) {
    if (fv.dim() != D) throw DimensionError("feature dimensions differ");
    const geo::GeoLocation loc = fv.location.value_or(geo::GeoLocation{0, 0});
    std::snprintf(buf, sizeof(buf), "%.17g", loc.lat);
    f << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", loc.lon);
    f << "," << buf;
    for (int j = 0; j < D; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", fv.values[j]);
      f << "," << buf;
    }
    f << "\n";
  }
}

std::vector<FeatureVector> load_features_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("lat,lon", 0) != 0)
    throw ParseError("not a groundgen features csv: " + path);
  int D = -1;  // feature columns = commas - 1 (lat,lon lead the header)
  for (char c : line) D += c == ',';
  if (D < 1) throw ParseError("features csv has no feature columns: " + path);
  std::vector<FeatureVector> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    FeatureVector fv;
    fv.values.resize(D);
    geo::GeoLocation loc;
    if (!std::getline(row, cell, ',')) throw ParseError("bad feature row", lineno);
    loc.lat = std::stod(cell);
    if (!std::getline(row, cell, ',')) throw ParseError("bad feature row", lineno);
    loc.lon = std::stod(cell);
    for (int j = 0; j < D; ++j) {
      if (!std::getline(row, cell, ','))
        throw ParseError("feature row too short", lineno);
      fv.values[j] = std::stod(cell);
    }
    fv.location = loc;
    out.push_back(std::move(fv));
  }
  return out;
}

void save_features_bin(const std::string& path,
                       const std::vector<FeatureVector>& feats) {
  if (feats.empty()) throw ConfigError("refusing to write an empty feature set");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  const int D = feats.front().dim();
  f << "groundgen features v1\n";
  f << "count = " << feats.size() << "\n";
  f << "dim = " << D << "\n";
  f << "layout = lat lon f[dim] per record, little-endian doubles\n";
  f << "end\n";
  for (const auto& fv : feats) {
    if (fv.dim() != D) throw DimensionError("feature dimensions differ");
    const geo::GeoLocation loc = fv.location.value_or(geo::GeoLocation{0, 0});
    const double head[2] = {loc.lat, loc.lon};
    f.write(reinterpret_cast<const char*>(head), sizeof(head));
    f.write(reinterpret_cast<const char*>(fv.values.data()),
            static_cast<std::streamsize>(sizeof(double) * D));
  }
  if (!f) throw IoError("short write: " + path);
}

std::vector<FeatureVector> load_features_bin(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "groundgen features v1")
    throw ParseError("not a groundgen features file: " + path);
  long count = -1;
  int D = -1;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line == "end") break;
    if (line.rfind("count = ", 0) == 0) count = std::stol(line.substr(8));
    if (line.rfind("dim = ", 0) == 0) D = std::stoi(line.substr(6));
  }
  if (count < 0 || D < 1) throw ParseError("features header incomplete: " + path);
  std::vector<FeatureVector> out(static_cast<std::size_t>(count));
  for (auto& fv : out) {
    double head[2];
    f.read(reinterpret_cast<char*>(head), sizeof(head));
    fv.values.resize(D);
    f.read(reinterpret_cast<char*>(fv.values.data()),
           static_cast<std::streamsize>(sizeof(double) * D));
    if (!f) throw ParseError("truncated features blob: " + path);
    fv.location = geo::GeoLocation{head[0], head[1]};
  }
  return out;
}

Eigen::MatrixXd feature_matrix(const std::vector<FeatureVector>& feats) {
  if (feats.empty()) throw DimensionError("empty feature set");
  const int D = feats.front().dim();
  Eigen::MatrixXd X(static_cast<long>(feats.size()), D);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].dim() != D) throw DimensionError("feature dimensions differ");
    X.row(static_cast<long>(i)) = feats[i].values.transpose();
  }
  return X;
}

}  // namespace groundgen::features
