#ifndef GROUNDGEN_PROBES_HPP
#define GROUNDGEN_PROBES_HPP

#include <Eigen/Core>

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "groundgen/image.hpp"
#include "groundgen/nn.hpp"

namespace groundgen::probes {

class DegenerateLabelsError : public Error {
 public:
  using Error::Error;
};

// C-SVC with an RBF kernel, solved by SMO (maximal-violating-pair working
// sets). Binary problems train one machine; larger class sets train
// one-vs-rest. Score ties resolve to the lowest class id.
struct SvmHyper {
  double C = 1.0;
  double gamma = 0.0;  // 0 selects 1/(dim * var(X))
  double tol = 1e-3;
  long max_iter = 1000000;
  bool grid_search = false;  // small 3-fold CV grid over C and gamma
};

class SvmRbf {
 public:
  void fit(const Eigen::MatrixXd& X, const std::vector<int>& y,
           const SvmHyper& hp, std::uint64_t seed = 0);

  bool trained() const { return trained_; }
  int dim() const { return dim_; }
  int n_classes() const { return n_classes_; }
  double gamma() const { return gamma_; }
  const SvmHyper& hyper() const { return hp_; }

  int predict(const Eigen::VectorXd& x) const;
  std::vector<int> predict_all(const Eigen::MatrixXd& X) const;
  // One decision value per machine (1 when binary, K for one-vs-rest).
  Eigen::VectorXd decision(const Eigen::VectorXd& x) const;

  void save(const std::string& path) const;
  static SvmRbf load(const std::string& path);

 private:
  struct Machine {
    Eigen::MatrixXd support;   // rows are support vectors
    Eigen::VectorXd coeff;     // alpha_i * y_i per support vector
    double rho = 0.0;          // decision = sum coeff*K(sv, x) - rho
  };

  void fit_binary(const Eigen::MatrixXd& X, const std::vector<int>& pm1,
                  const SvmHyper& hp, Machine& out) const;

  bool trained_ = false;
  int dim_ = 0;
  int n_classes_ = 0;
  double gamma_ = 0.0;
  SvmHyper hp_;
  std::vector<Machine> machines_;
};

// Small residual network standing in for the paper-scale image classifier:
// a conv stem, four residual blocks down to 4x4, global average pooling to
// a 512D penultimate feature, and a linear head.
struct CnnHyper {
  int width = 24;        // stem channels; blocks widen from here to 512
  int epochs = 3;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

constexpr int kCnnFeatureDim = 512;

class ReferenceCnn {
 public:
  ReferenceCnn() = default;

  void fit(const std::vector<const geo::ImageU8*>& images,
           const std::vector<int>& labels, int n_classes, const CnnHyper& hp);

  bool trained() const { return trained_; }
  int n_classes() const { return n_classes_; }
  double train_accuracy() const { return train_accuracy_; }
  const CnnHyper& hyper() const { return hp_; }

  std::vector<int> predict(const std::vector<const geo::ImageU8*>& images);
  // The split point: a 512D feature extractor and a linear head.
  Eigen::MatrixXd features(const std::vector<const geo::ImageU8*>& images);
  std::vector<int> classify_features(const Eigen::MatrixXd& feats);

  void save(const std::string& path) const;
  static ReferenceCnn load(const std::string& path);

 private:
  void build(int n_classes, const CnnHyper& hp, std::uint64_t init_seed);
  nn::Tensor logits_batch(const std::vector<const geo::ImageU8*>& images,
                          int start, int count, const nn::Context& ctx);
  std::vector<nn::ParamRef> params();
  std::vector<nn::BufferRef> buffers();

  bool trained_ = false;
  int n_classes_ = 0;
  double train_accuracy_ = 0.0;
  CnnHyper hp_;
  std::unique_ptr<nn::Sequential> backbone_;  // through global average pool
  std::unique_ptr<nn::Linear> head_;
  // Serializes forward passes; a trained probe is then safe to share.
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

// Representation-quality classifiers (Table 2 / Table 4 roles).
enum class ProbeKind { SvmRbf, ReferenceCnn };

std::string to_string(ProbeKind k);

struct ProbeModel {
  ProbeKind kind = ProbeKind::SvmRbf;
  std::shared_ptr<SvmRbf> svm;
  std::shared_ptr<ReferenceCnn> cnn;
  int n_classes = 0;
  double train_accuracy = 0.0;

  bool trained() const;
  void save(const std::string& path) const;
  static ProbeModel load(const std::string& path);
};

// Deterministic given the seed; stores its training accuracy. Throws
// DegenerateLabelsError when only one class is present.
ProbeModel train_probe(const Eigen::MatrixXd& features,
                       const std::vector<int>& labels, const SvmHyper& hp,
                       std::uint64_t seed = 0);

ProbeModel train_reference_cnn(const std::vector<const geo::ImageU8*>& images,
                               const std::vector<int>& labels,
                               const CnnHyper& hp);

// accuracy = argmax-correct / total, ties to the lowest class id.
double evaluate_probe(const ProbeModel& model, const Eigen::MatrixXd& features,
                      const std::vector<int>& labels);
double evaluate_probe(const ProbeModel& model,
                      const std::vector<const geo::ImageU8*>& images,
                      const std::vector<int>& labels);

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace groundgen::probes

#endif
