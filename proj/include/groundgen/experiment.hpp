#ifndef GROUNDGEN_EXPERIMENT_HPP
#define GROUNDGEN_EXPERIMENT_HPP

#include <memory>
#include <string>
#include <vector>

#include "groundgen/config.hpp"
#include "groundgen/dataset.hpp"
#include "groundgen/features.hpp"
#include "groundgen/gan.hpp"
#include "groundgen/interp.hpp"
#include "groundgen/mapping.hpp"
#include "groundgen/probes.hpp"
#include "groundgen/tiles.hpp"

namespace groundgen::experiment {

enum class DatasetSource { Synthetic, Manifest, Tiles };

std::string to_string(DatasetSource s);
DatasetSource dataset_source_from_string(const std::string& s);

// Everything one experiment run needs; serializes to the flat config format
// and back so each run can drop its resolved configuration next to its
// artifacts. All randomness derives from the one root seed.
struct ExperimentConfig {
  DatasetSource source = DatasetSource::Synthetic;
  geo::SyntheticWorldSpec synthetic;
  std::string manifest_dir;
  geo::TileClientConfig tiles;

  embed::EmbeddingKind embedding = embed::EmbeddingKind::Grayscale;
  int base_channels = 64;
  gan::TrainConfig train;
  features::ZPolicy z_policy;
  bool featurize_generated = true;  // false featurizes the real ground images

  probes::SvmHyper svm;
  probes::CnnHyper reference_cnn;
  int reference_cnn_max_train = 768;  // 0 = use every training image

  double sigma_km = 2.0;
  std::vector<double> sigma_sweep;
  double anchor_fraction = 0.017;
  double train_fraction = 0.8;

  std::uint64_t seed = 0;
  std::string out_dir;

  void validate() const;
  config::Config to_config() const;
  static ExperimentConfig from_config(const config::Config& c);

  // The frozen desk-scale configuration: a 16x16 checkerboard world with 10
  // images per cell and 1.7% interpolation anchors.
  static ExperimentConfig desk_default(std::uint64_t seed, std::string out_dir);
};

struct ExperimentResult {
  // Per-location probe accuracies on the held-out split.
  double emb_probe_acc = 0.0;
  double cgan_probe_acc = 0.0;
  double interp_probe_acc = 0.0;
  // Dense-map accuracies against the ground truth.
  double map_acc_ground_images = 0.0;
  double map_acc_cgan = 0.0;
  double map_acc_interp = 0.0;
  // Image-classification ablation on real vs generated images.
  double cnn_real_acc = 0.0;
  double cnn_fake_acc = 0.0;
  // Discriminator held-out real-vs-fake health signal.
  double d_real_fake_acc = 0.0;
  gan::LossHistory history;
};

geo::Dataset load_experiment_dataset(const ExperimentConfig& cfg);

// Builds the configured embedder. The CNN embedding fits its PCA on the
// given training patches (seeded encoder; recipe recorded in the config).
std::shared_ptr<embed::Embedder> make_embedder(
    const ExperimentConfig& cfg, const std::vector<geo::PairedSample>& train);

// Runs the full desk-scale protocol and writes every artifact (tables,
// maps, loss curve, checkpoints, features, resolved config) under out_dir.
ExperimentResult run_report(const ExperimentConfig& cfg);

// Seeded train/test split indices.
void split_indices(std::size_t n, double train_fraction, std::uint64_t seed,
                   std::vector<int>& train, std::vector<int>& test);

}  // namespace groundgen::experiment

#endif
