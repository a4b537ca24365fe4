#include "groundgen/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "groundgen/gan.hpp"
#include "groundgen/rng.hpp"

namespace groundgen::probes {

std::string to_string(ProbeKind k) {
  return k == ProbeKind::SvmRbf ? "svm-rbf" : "reference-cnn";
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw DimensionError("prediction/label size mismatch");
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

namespace {

int count_classes(const std::vector<int>& y) {
  std::set<int> seen(y.begin(), y.end());
  if (seen.empty()) throw DegenerateLabelsError("no labels");
  if (*seen.begin() < 0) throw OutOfBoundsError("negative class id");
  if (seen.size() < 2)
    throw DegenerateLabelsError("training labels contain a single class");
  return *seen.rbegin() + 1;
}

double scale_gamma(const Eigen::MatrixXd& X) {
  const double mean = X.mean();
  const double var = (X.array() - mean).square().mean();
  if (var <= 0.0) return 1.0;
  return 1.0 / (static_cast<double>(X.cols()) * var);
}

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           double gamma) {
  const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
  Eigen::MatrixXd K = -2.0 * (A * B.transpose());
  K.colwise() += a2;
  K.rowwise() += b2.transpose();
  return (-gamma * K.array()).exp();
}

}  // namespace

// ---------------------------------------------------------------------------
// SMO solver

void SvmRbf::fit_binary(const Eigen::MatrixXd& X, const std::vector<int>& pm1,
                        const SvmHyper& hp, Machine& out) const {
  const long n = X.rows();
  const double C = hp.C;
  constexpr double kTau = 1e-12;
  const Eigen::MatrixXd K = rbf_kernel(X, X, gamma_);

  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
  // Gradient of 1/2 a'Qa - e'a in Q-space, Q_ij = y_i y_j K_ij.
  std::vector<double> G(static_cast<std::size_t>(n), -1.0);
  const auto& y = pm1;

  auto is_upper = [&](long t) { return alpha[static_cast<std::size_t>(t)] >= C; };
  auto is_lower = [&](long t) { return alpha[static_cast<std::size_t>(t)] <= 0.0; };

  long iter = 0;
  for (; iter < hp.max_iter; ++iter) {
    // Maximal violating pair.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    long i = -1, j = -1;
    for (long t = 0; t < n; ++t) {
      const double yg = y[static_cast<std::size_t>(t)] * G[static_cast<std::size_t>(t)];
      const bool up = y[static_cast<std::size_t>(t)] == 1 ? !is_upper(t) : !is_lower(t);
      const bool low = y[static_cast<std::size_t>(t)] == 1 ? !is_lower(t) : !is_upper(t);
      if (up && -yg > gmax) {
        gmax = -yg;
        i = t;
      }
      if (low && yg > gmax2) {
        gmax2 = yg;
        j = t;
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < hp.tol) break;

    const auto si = static_cast<std::size_t>(i);
    const auto sj = static_cast<std::size_t>(j);
    const double old_ai = alpha[si], old_aj = alpha[sj];
    const double Qij = y[si] * y[sj] * K(i, j);

    if (y[si] != y[sj]) {
      double quad = K(i, i) + K(j, j) + 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[si] - G[sj]) / quad;
      const double diff = alpha[si] - alpha[sj];
      alpha[si] += delta;
      alpha[sj] += delta;
      if (diff > 0.0) {
        if (alpha[sj] < 0.0) {
          alpha[sj] = 0.0;
          alpha[si] = diff;
        }
      } else {
        if (alpha[si] < 0.0) {
          alpha[si] = 0.0;
          alpha[sj] = -diff;
        }
      }
      if (diff > 0.0) {
        if (alpha[si] > C) {
          alpha[si] = C;
          alpha[sj] = C - diff;
        }
      } else {
        if (alpha[sj] > C) {
          alpha[sj] = C;
          alpha[si] = C + diff;
        }
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[si] - G[sj]) / quad;
      const double sum = alpha[si] + alpha[sj];
      alpha[si] -= delta;
      alpha[sj] += delta;
      if (sum > C) {
        if (alpha[si] > C) {
          alpha[si] = C;
          alpha[sj] = sum - C;
        }
      } else {
        if (alpha[sj] < 0.0) {
          alpha[sj] = 0.0;
          alpha[si] = sum;
        }
      }
      if (sum > C) {
        if (alpha[sj] > C) {
          alpha[sj] = C;
          alpha[si] = sum - C;
        }
      } else {
        if (alpha[si] < 0.0) {
          alpha[si] = 0.0;
          alpha[sj] = sum;
        }
      }
    }

    const double dai = alpha[si] - old_ai;
    const double daj = alpha[sj] - old_aj;
    for (long t = 0; t < n; ++t) {
      const auto st = static_cast<std::size_t>(t);
      G[st] += y[si] * y[st] * K(i, t) * dai + y[sj] * y[st] * K(j, t) * daj;
    }
  }
  if (iter >= hp.max_iter)
    log_warn("svm solver hit max_iter before reaching tolerance");

  // rho so that free support vectors satisfy y*(f(x)) = 1 exactly.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  long n_free = 0;
  for (long t = 0; t < n; ++t) {
    const auto st = static_cast<std::size_t>(t);
    const double yg = y[st] * G[st];
    if (is_upper(t)) {
      if (y[st] == -1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (y[st] == 1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  out.rho = n_free > 0 ? sum_free / static_cast<double>(n_free)
                       : 0.5 * (ub + lb);

  long n_sv = 0;
  for (double a : alpha) n_sv += a > 0.0;
  out.support.resize(n_sv, X.cols());
  out.coeff.resize(n_sv);
  long s = 0;
  for (long t = 0; t < n; ++t) {
    const auto st = static_cast<std::size_t>(t);
    if (alpha[st] > 0.0) {
      out.support.row(s) = X.row(t);
      out.coeff[s] = alpha[st] * y[st];
      ++s;
    }
  }
}

void SvmRbf::fit(const Eigen::MatrixXd& X, const std::vector<int>& y,
                 const SvmHyper& hp, std::uint64_t seed) {
  if (X.rows() != static_cast<long>(y.size()))
    throw DimensionError("feature rows do not match label count");
  if (!X.allFinite()) throw Error("svm features contain non-finite values");
  n_classes_ = count_classes(y);
  dim_ = static_cast<int>(X.cols());
  hp_ = hp;

  if (hp.grid_search) {
    // Small deterministic 3-fold CV over C and a gamma multiplier.
    const double base_gamma = hp.gamma > 0.0 ? hp.gamma : scale_gamma(X);
    const int folds = 3;
    std::vector<int> fold(y.size());
    {
      std::vector<int> order(y.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(seed, "svm/grid-folds"));
      rng.shuffle(order);
      std::vector<int> per_class_count(static_cast<std::size_t>(n_classes_), 0);
      for (int idx : order) {
        auto& c = per_class_count[static_cast<std::size_t>(y[static_cast<std::size_t>(idx)])];
        fold[static_cast<std::size_t>(idx)] = c % folds;
        ++c;
      }
    }
    double best_acc = -1.0;
    SvmHyper best = hp;
    best.grid_search = false;
    for (double c_cand : {0.1, 1.0, 10.0}) {
      for (double gm : {0.5, 1.0, 2.0}) {
        SvmHyper cand = hp;
        cand.grid_search = false;
        cand.C = c_cand;
        cand.gamma = base_gamma * gm;
        double acc_sum = 0.0;
        for (int f = 0; f < folds; ++f) {
          std::vector<long> tr, te;
          for (long t = 0; t < X.rows(); ++t)
            (fold[static_cast<std::size_t>(t)] == f ? te : tr).push_back(t);
          if (te.empty() || tr.empty()) continue;
          Eigen::MatrixXd Xtr(static_cast<long>(tr.size()), X.cols());
          Eigen::MatrixXd Xte(static_cast<long>(te.size()), X.cols());
          std::vector<int> ytr, yte;
          for (std::size_t t = 0; t < tr.size(); ++t) {
            Xtr.row(static_cast<long>(t)) = X.row(tr[t]);
            ytr.push_back(y[static_cast<std::size_t>(tr[t])]);
          }
          for (std::size_t t = 0; t < te.size(); ++t) {
            Xte.row(static_cast<long>(t)) = X.row(te[t]);
            yte.push_back(y[static_cast<std::size_t>(te[t])]);
          }
          SvmRbf m;
          m.fit(Xtr, ytr, cand, seed);
          acc_sum += accuracy(m.predict_all(Xte), yte);
        }
        if (acc_sum > best_acc) {
          best_acc = acc_sum;
          best = cand;
        }
      }
    }
    fit(X, y, best, seed);
    hp_.grid_search = true;
    return;
  }

  gamma_ = hp.gamma > 0.0 ? hp.gamma : scale_gamma(X);
  machines_.clear();
  const int n_machines = n_classes_ == 2 ? 1 : n_classes_;
  for (int k = 0; k < n_machines; ++k) {
    const int positive = n_classes_ == 2 ? 1 : k;
    std::vector<int> pm1(y.size());
    for (std::size_t t = 0; t < y.size(); ++t)
      pm1[t] = y[t] == positive ? 1 : -1;
    Machine m;
    fit_binary(X, pm1, hp, m);
    machines_.push_back(std::move(m));
  }
  trained_ = true;
}

Eigen::VectorXd SvmRbf::decision(const Eigen::VectorXd& x) const {
  if (!trained_) throw StateError("svm probe is not trained");
  if (x.size() != dim_) throw DimensionError("svm feature dimension mismatch");
  Eigen::VectorXd out(static_cast<long>(machines_.size()));
  for (std::size_t m = 0; m < machines_.size(); ++m) {
    const auto& mach = machines_[m];
    const Eigen::MatrixXd k =
        rbf_kernel(mach.support, x.transpose(), gamma_);  // n_sv x 1
    out[static_cast<long>(m)] = mach.coeff.dot(k.col(0)) - mach.rho;
  }
  return out;
}

int SvmRbf::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd f = decision(x);
  if (n_classes_ == 2) return f[0] > 0.0 ? 1 : 0;
  int best = 0;
  for (int k = 1; k < n_classes_; ++k)
    if (f[k] > f[best]) best = k;  // ties keep the lowest id
  return best;
}

std::vector<int> SvmRbf::predict_all(const Eigen::MatrixXd& X) const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (long i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    out.push_back(predict(x));
  }
  return out;
}

void SvmRbf::save(const std::string& path) const {
  if (!trained_) throw StateError("cannot save an untrained svm");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "groundgen probe v1\n";
  f << "kind = svm-rbf\n";
  f << "dim = " << dim_ << "\n";
  f << "classes = " << n_classes_ << "\n";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", gamma_);
  f << "gamma = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", hp_.C);
  f << "C = " << buf << "\n";
  f << "machines = " << machines_.size() << "\n";
  for (const auto& m : machines_) {
    std::snprintf(buf, sizeof(buf), "%.17g", m.rho);
    f << "machine = " << m.support.rows() << " " << buf << "\n";
  }
  f << "end\n";
  for (const auto& m : machines_) {
    f.write(reinterpret_cast<const char*>(m.support.data()),
            static_cast<std::streamsize>(sizeof(double) * m.support.size()));
    f.write(reinterpret_cast<const char*>(m.coeff.data()),
            static_cast<std::streamsize>(sizeof(double) * m.coeff.size()));
  }
  if (!f) throw IoError("short write: " + path);
}

SvmRbf SvmRbf::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "groundgen probe v1")
    throw ParseError("not a groundgen probe file: " + path);
  SvmRbf svm;
  std::vector<std::pair<long, double>> machine_meta;
  while (std::getline(f, line)) {
    if (line == "end") break;
    if (line.rfind("kind = ", 0) == 0 && line.substr(7) != "svm-rbf")
      throw ParseError("probe kind is not svm-rbf: " + path);
    if (line.rfind("dim = ", 0) == 0) svm.dim_ = std::stoi(line.substr(6));
    if (line.rfind("classes = ", 0) == 0) svm.n_classes_ = std::stoi(line.substr(10));
    if (line.rfind("gamma = ", 0) == 0) svm.gamma_ = std::stod(line.substr(8));
    if (line.rfind("C = ", 0) == 0) svm.hp_.C = std::stod(line.substr(4));
    if (line.rfind("machine = ", 0) == 0) {
      std::istringstream ss(line.substr(10));
      long n_sv;
      double rho;
      ss >> n_sv >> rho;
      machine_meta.emplace_back(n_sv, rho);
    }
  }
  if (svm.dim_ < 1 || svm.n_classes_ < 2)
    throw ParseError("svm header incomplete: " + path);
  for (const auto& [n_sv, rho] : machine_meta) {
    Machine m;
    m.rho = rho;
    m.support.resize(n_sv, svm.dim_);
    m.coeff.resize(n_sv);
    f.read(reinterpret_cast<char*>(m.support.data()),
           static_cast<std::streamsize>(sizeof(double) * m.support.size()));
    f.read(reinterpret_cast<char*>(m.coeff.data()),
           static_cast<std::streamsize>(sizeof(double) * m.coeff.size()));
    if (!f) throw ParseError("truncated svm blob: " + path);
    svm.machines_.push_back(std::move(m));
  }
  svm.trained_ = true;
  return svm;
}

// ---------------------------------------------------------------------------
// Reference CNN

void ReferenceCnn::build(int n_classes, const CnnHyper& hp,
                         std::uint64_t init_seed) {
  n_classes_ = n_classes;
  hp_ = hp;
  Rng rng(init_seed);
  backbone_ = std::make_unique<nn::Sequential>();
  const int w = hp.width;
  backbone_->add<nn::Conv2d>(3, w, 3, 1, 1, &rng, nn::Init::He);
  backbone_->add<nn::BatchNorm2d>(w, &rng);
  backbone_->add<nn::Activation>(nn::Act::ReLU);
  backbone_->add<nn::ResidualBlock>(w, 2 * w, 2, &rng);       // 32x32
  backbone_->add<nn::ResidualBlock>(2 * w, 4 * w, 2, &rng);   // 16x16
  backbone_->add<nn::ResidualBlock>(4 * w, 8 * w, 2, &rng);   // 8x8
  backbone_->add<nn::ResidualBlock>(8 * w, kCnnFeatureDim, 2, &rng);  // 4x4
  backbone_->add<nn::GlobalAvgPool>();
  head_ = std::make_unique<nn::Linear>(kCnnFeatureDim, n_classes, &rng,
                                       nn::Init::He);
}

std::vector<nn::ParamRef> ReferenceCnn::params() {
  std::vector<nn::ParamRef> out;
  backbone_->collect_params("cnn.backbone", out);
  head_->collect_params("cnn.head", out);
  return out;
}

std::vector<nn::BufferRef> ReferenceCnn::buffers() {
  std::vector<nn::BufferRef> out;
  backbone_->collect_buffers("cnn.backbone", out);
  return out;
}

nn::Tensor ReferenceCnn::logits_batch(
    const std::vector<const geo::ImageU8*>& images, int start, int count,
    const nn::Context& ctx) {
  std::vector<const geo::ImageU8*> chunk(
      images.begin() + start, images.begin() + start + count);
  nn::Tensor x = gan::images_to_tensor(chunk);
  nn::Tensor feats = backbone_->forward(std::move(x), ctx);
  return head_->forward(std::move(feats), ctx);
}

void ReferenceCnn::fit(const std::vector<const geo::ImageU8*>& images,
                       const std::vector<int>& labels, int n_classes,
                       const CnnHyper& hp) {
  if (images.size() != labels.size() || images.empty())
    throw DimensionError("images/labels mismatch");
  if (count_classes(labels) > n_classes)
    throw OutOfBoundsError("label id outside declared class count");
  for (const auto* img : images)
    if (img->h != geo::kGroundImageSize || img->w != geo::kGroundImageSize ||
        img->c != 3)
      throw DimensionError("reference cnn expects 64x64x3 images");
  if (hp.width < 1 || hp.epochs < 1 || hp.batch_size < 2)
    throw ConfigError("bad reference cnn hyperparameters");
  if (hp.lr < 0.0) throw ConfigError("learning rate must be >= 0");

  build(n_classes, hp, derive_seed(hp.seed, "refcnn/init"));

  const int n = static_cast<int>(images.size());
  const int B = std::min(hp.batch_size, n);
  if (B < 2) throw ConfigError("need at least two images to train");
  const bool learning = hp.lr > 0.0;
  nn::Context tctx{true, learning};
  nn::Adam opt(params(), hp.lr);
  Rng rng(derive_seed(hp.seed, "refcnn/train"));

  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    rng.shuffle(idx);
    for (int start = 0; start + B <= n; start += B) {
      std::vector<const geo::ImageU8*> batch;
      std::vector<int> ybatch;
      for (int i = 0; i < B; ++i) {
        batch.push_back(images[static_cast<std::size_t>(idx[start + i])]);
        ybatch.push_back(labels[static_cast<std::size_t>(idx[start + i])]);
      }
      nn::Tensor x = gan::images_to_tensor(batch);
      nn::Tensor feats = backbone_->forward(std::move(x), tctx);
      nn::Tensor logits = head_->forward(std::move(feats), tctx);
      nn::Tensor dlogits;
      const double loss = nn::softmax_cross_entropy(logits, ybatch, &dlogits);
      if (!std::isfinite(loss))
        throw DivergenceError("non-finite reference cnn loss", epoch);
      opt.zero_grad();
      backbone_->backward(head_->backward(dlogits));
      opt.step();
    }
  }
  if (learning) {
    // Batch statistics keep moving while margins inflate and the running
    // EMA trails them; one refresh pass pins the running statistics to the
    // exact average over the training set.
    long pass = 0;
    for (int start = 0; start + B <= n; start += B) {
      std::vector<const geo::ImageU8*> batch(images.begin() + start,
                                             images.begin() + start + B);
      nn::Context rctx{true, true, 1.0 / static_cast<double>(++pass)};
      backbone_->forward(gan::images_to_tensor(batch), rctx);
    }
  }
  trained_ = true;
  train_accuracy_ = accuracy(predict(images), labels);
}

std::vector<int> ReferenceCnn::predict(
    const std::vector<const geo::ImageU8*>& images) {
  if (!backbone_) throw StateError("reference cnn is not built");
  std::scoped_lock lock(*mu_);
  nn::Context eval;
  std::vector<int> out;
  const int n = static_cast<int>(images.size());
  for (int start = 0; start < n; start += 64) {
    const int count = std::min(64, n - start);
    const nn::Tensor logits = logits_batch(images, start, count, eval);
    for (int i = 0; i < count; ++i) {
      const double* row = logits.v.data() + static_cast<std::size_t>(i) * n_classes_;
      int best = 0;
      for (int k = 1; k < n_classes_; ++k)
        if (row[k] > row[best]) best = k;  // ties keep the lowest id
      out.push_back(best);
    }
  }
  return out;
}

Eigen::MatrixXd ReferenceCnn::features(
    const std::vector<const geo::ImageU8*>& images) {
  if (!backbone_) throw StateError("reference cnn is not built");
  std::scoped_lock lock(*mu_);
  nn::Context eval;
  const int n = static_cast<int>(images.size());
  Eigen::MatrixXd out(n, kCnnFeatureDim);
  for (int start = 0; start < n; start += 64) {
    const int count = std::min(64, n - start);
    std::vector<const geo::ImageU8*> chunk(
        images.begin() + start, images.begin() + start + count);
    nn::Tensor f = backbone_->forward(gan::images_to_tensor(chunk), eval);
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < kCnnFeatureDim; ++j)
        out(start + i, j) = f.v[static_cast<std::size_t>(i) * kCnnFeatureDim + j];
  }
  return out;
}

std::vector<int> ReferenceCnn::classify_features(const Eigen::MatrixXd& feats) {
  if (!head_) throw StateError("reference cnn is not built");
  std::scoped_lock lock(*mu_);
  if (feats.cols() != kCnnFeatureDim)
    throw DimensionError("expected 512D reference cnn features");
  nn::Context eval;
  nn::Tensor x({static_cast<int>(feats.rows()), kCnnFeatureDim});
  for (long i = 0; i < feats.rows(); ++i)
    for (int j = 0; j < kCnnFeatureDim; ++j)
      x.v[static_cast<std::size_t>(i) * kCnnFeatureDim + j] = feats(i, j);
  const nn::Tensor logits = head_->forward(std::move(x), eval);
  std::vector<int> out;
  for (long i = 0; i < feats.rows(); ++i) {
    const double* row = logits.v.data() + static_cast<std::size_t>(i) * n_classes_;
    int best = 0;
    for (int k = 1; k < n_classes_; ++k)
      if (row[k] > row[best]) best = k;
    out.push_back(best);
  }
  return out;
}

void ReferenceCnn::save(const std::string& path) const {
  if (!trained_) throw StateError("cannot save an untrained reference cnn");
  auto* self = const_cast<ReferenceCnn*>(this);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "groundgen probe v1\n";
  f << "kind = reference-cnn\n";
  f << "classes = " << n_classes_ << "\n";
  f << "width = " << hp_.width << "\n";
  f << "epochs = " << hp_.epochs << "\n";
  f << "batch_size = " << hp_.batch_size << "\n";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", hp_.lr);
  f << "lr = " << buf << "\n";
  f << "seed = " << hp_.seed << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", train_accuracy_);
  f << "train_accuracy = " << buf << "\n";
  for (const auto& p : self->params())
    f << "tensor = " << p.name << " " << p.value->size() << "\n";
  for (const auto& b : self->buffers())
    f << "tensor = " << b.name << " " << b.value->size() << "\n";
  f << "end\n";
  for (const auto& p : self->params())
    f.write(reinterpret_cast<const char*>(p.value->data()),
            static_cast<std::streamsize>(sizeof(double) * p.value->size()));
  for (const auto& b : self->buffers())
    f.write(reinterpret_cast<const char*>(b.value->data()),
            static_cast<std::streamsize>(sizeof(double) * b.value->size()));
  if (!f) throw IoError("short write: " + path);
}

ReferenceCnn ReferenceCnn::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "groundgen probe v1")
    throw ParseError("not a groundgen probe file: " + path);
  ReferenceCnn cnn;
  int classes = 0;
  CnnHyper hp;
  double train_acc = 0.0;
  while (std::getline(f, line)) {
    if (line == "end") break;
    if (line.rfind("kind = ", 0) == 0 && line.substr(7) != "reference-cnn")
      throw ParseError("probe kind is not reference-cnn: " + path);
    if (line.rfind("classes = ", 0) == 0) classes = std::stoi(line.substr(10));
    if (line.rfind("width = ", 0) == 0) hp.width = std::stoi(line.substr(8));
    if (line.rfind("epochs = ", 0) == 0) hp.epochs = std::stoi(line.substr(9));
    if (line.rfind("batch_size = ", 0) == 0) hp.batch_size = std::stoi(line.substr(13));
    if (line.rfind("lr = ", 0) == 0) hp.lr = std::stod(line.substr(5));
    if (line.rfind("seed = ", 0) == 0) hp.seed = std::stoull(line.substr(7));
    if (line.rfind("train_accuracy = ", 0) == 0)
      train_acc = std::stod(line.substr(17));
  }
  if (classes < 2) throw ParseError("reference cnn header incomplete: " + path);
  cnn.build(classes, hp, 0);
  for (const auto& p : cnn.params()) {
    f.read(reinterpret_cast<char*>(p.value->data()),
           static_cast<std::streamsize>(sizeof(double) * p.value->size()));
    if (!f) throw ParseError("truncated probe blob: " + path);
  }
  for (const auto& b : cnn.buffers()) {
    f.read(reinterpret_cast<char*>(b.value->data()),
           static_cast<std::streamsize>(sizeof(double) * b.value->size()));
    if (!f) throw ParseError("truncated probe blob: " + path);
  }
  cnn.trained_ = true;
  cnn.train_accuracy_ = train_acc;
  return cnn;
}

// ---------------------------------------------------------------------------
// Probe wrappers

bool ProbeModel::trained() const {
  return (svm && svm->trained()) || (cnn && cnn->trained());
}

void ProbeModel::save(const std::string& path) const {
  if (kind == ProbeKind::SvmRbf) {
    if (!svm) throw StateError("probe has no svm");
    svm->save(path);
  } else {
    if (!cnn) throw StateError("probe has no cnn");
    cnn->save(path);
  }
}

ProbeModel ProbeModel::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string line, kind_line;
  std::getline(f, line);
  std::getline(f, kind_line);
  f.close();
  ProbeModel m;
  if (kind_line == "kind = svm-rbf") {
    m.kind = ProbeKind::SvmRbf;
    m.svm = std::make_shared<SvmRbf>(SvmRbf::load(path));
    m.n_classes = m.svm->n_classes();
  } else if (kind_line == "kind = reference-cnn") {
    m.kind = ProbeKind::ReferenceCnn;
    m.cnn = std::make_shared<ReferenceCnn>(ReferenceCnn::load(path));
    m.n_classes = m.cnn->n_classes();
    m.train_accuracy = m.cnn->train_accuracy();
  } else {
    throw ParseError("unknown probe kind in " + path);
  }
  return m;
}

ProbeModel train_probe(const Eigen::MatrixXd& features,
                       const std::vector<int>& labels, const SvmHyper& hp,
                       std::uint64_t seed) {
  ProbeModel m;
  m.kind = ProbeKind::SvmRbf;
  m.svm = std::make_shared<SvmRbf>();
  m.svm->fit(features, labels, hp, seed);
  m.n_classes = m.svm->n_classes();
  m.train_accuracy = accuracy(m.svm->predict_all(features), labels);
  return m;
}

ProbeModel train_reference_cnn(const std::vector<const geo::ImageU8*>& images,
                               const std::vector<int>& labels,
                               const CnnHyper& hp) {
  ProbeModel m;
  m.kind = ProbeKind::ReferenceCnn;
  m.cnn = std::make_shared<ReferenceCnn>();
  m.cnn->fit(images, labels, count_classes(labels), hp);
  m.n_classes = m.cnn->n_classes();
  m.train_accuracy = m.cnn->train_accuracy();
  return m;
}

double evaluate_probe(const ProbeModel& model, const Eigen::MatrixXd& features,
                      const std::vector<int>& labels) {
  if (model.kind != ProbeKind::SvmRbf || !model.svm)
    throw StateError("feature evaluation requires an svm probe");
  if (!model.svm->trained()) throw StateError("probe is not trained");
  return accuracy(model.svm->predict_all(features), labels);
}

double evaluate_probe(const ProbeModel& model,
                      const std::vector<const geo::ImageU8*>& images,
                      const std::vector<int>& labels) {
  if (model.kind != ProbeKind::ReferenceCnn || !model.cnn)
    throw StateError("image evaluation requires a reference-cnn probe");
  if (!model.cnn->trained()) throw StateError("probe is not trained");
  return accuracy(model.cnn->predict(images), labels);
}

}  // namespace groundgen::probes
