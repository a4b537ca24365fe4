#include "groundgen/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "groundgen/imageio.hpp"
#include "groundgen/plot.hpp"
#include "groundgen/rng.hpp"

namespace fs = std::filesystem;

namespace groundgen::experiment {

std::string to_string(DatasetSource s) {
  switch (s) {
    case DatasetSource::Synthetic:
      return "synthetic";
    case DatasetSource::Manifest:
      return "manifest";
    case DatasetSource::Tiles:
      return "tiles";
  }
  return "?";
}

DatasetSource dataset_source_from_string(const std::string& s) {
  if (s == "synthetic") return DatasetSource::Synthetic;
  if (s == "manifest") return DatasetSource::Manifest;
  if (s == "tiles") return DatasetSource::Tiles;
  throw ConfigError("unknown dataset source: " + s);
}

void ExperimentConfig::validate() const {
  switch (source) {
    case DatasetSource::Synthetic:
      synthetic.validate();
      break;
    case DatasetSource::Manifest:
      if (manifest_dir.empty())
        throw ConfigError("manifest source needs manifest_dir");
      if (!fs::exists(fs::path(manifest_dir) / "manifest.txt"))
        throw ConfigError("no manifest at " + manifest_dir);
      break;
    case DatasetSource::Tiles:
      if (manifest_dir.empty())
        throw ConfigError("tiles source needs manifest_dir for locations");
      if (!fs::exists(fs::path(manifest_dir) / "manifest.txt"))
        throw ConfigError("no manifest at " + manifest_dir);
      if (tiles.url_template.empty() && tiles.mosaic_png.empty())
        throw ConfigError("tiles source needs an endpoint or mosaic");
      break;
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0,1)");
  if (!(anchor_fraction > 0.0 && anchor_fraction <= 1.0))
    throw ConfigError("anchor_fraction must be in (0,1]");
  if (!(sigma_km > 0.0)) throw ConfigError("sigma_km must be positive");
  train.validate();
}

config::Config ExperimentConfig::to_config() const {
  config::Config c;
  c.set("dataset", "source", to_string(source));
  c.set_int("dataset", "grid_rows", synthetic.grid_h);
  c.set_int("dataset", "grid_cols", synthetic.grid_w);
  c.set("dataset", "layout", geo::to_string(synthetic.layout));
  c.set_int("dataset", "images_per_cell", synthetic.images_per_cell);
  c.set_u64("dataset", "synthetic_seed", synthetic.seed);
  c.set("dataset", "manifest_dir", manifest_dir);
  c.set("dataset", "tile_url_template", tiles.url_template);
  c.set("dataset", "tile_api_key_env", tiles.api_key_env);
  c.set_int("dataset", "tile_zoom", tiles.zoom);
  c.set("dataset", "tile_cache_dir", tiles.cache_dir);
  c.set("dataset", "tile_mosaic_png", tiles.mosaic_png);
  c.set("dataset", "tile_mosaic_world", tiles.mosaic_world);

  c.set("embedding", "kind", embed::to_string(embedding));

  c.set_int("gan", "base_channels", base_channels);
  c.set_double("gan", "learning_rate", train.learning_rate);
  c.set_int("gan", "batch_size", train.batch_size);
  c.set_int("gan", "epochs", train.epochs);
  c.set_int("gan", "max_steps", train.max_steps);
  c.set_double("gan", "beta1", train.beta1);
  c.set_double("gan", "beta2", train.beta2);
  c.set_bool("gan", "saturating_g", train.saturating_g);
  c.set("gan", "d_update",
        train.d_update == gan::DUpdate::Summed ? "summed" : "separate");
  c.set_u64("gan", "seed", train.seed);

  c.set("features", "z_policy",
        z_policy.kind == features::ZPolicy::Kind::FixedZero  ? "fixed-zero"
        : z_policy.kind == features::ZPolicy::Kind::FixedSeed ? "fixed-seed"
                                                              : "average-of-k");
  c.set_int("features", "z_k", z_policy.k);
  c.set_u64("features", "z_seed", z_policy.seed);
  c.set("features", "featurize", featurize_generated ? "generated" : "real");

  c.set_double("probes", "svm_c", svm.C);
  c.set_double("probes", "svm_gamma", svm.gamma);
  c.set_bool("probes", "svm_grid_search", svm.grid_search);
  c.set_int("probes", "cnn_width", reference_cnn.width);
  c.set_int("probes", "cnn_epochs", reference_cnn.epochs);
  c.set_int("probes", "cnn_batch_size", reference_cnn.batch_size);
  c.set_double("probes", "cnn_lr", reference_cnn.lr);
  c.set_int("probes", "cnn_max_train", reference_cnn_max_train);

  c.set_double("interp", "sigma_km", sigma_km);
  std::string sweep;
  for (double s : sigma_sweep) {
    if (!sweep.empty()) sweep += " ";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", s);
    sweep += buf;
  }
  c.set("interp", "sigma_sweep", sweep);
  c.set_double("interp", "anchor_fraction", anchor_fraction);

  c.set_u64("experiment", "seed", seed);
  c.set_double("experiment", "train_fraction", train_fraction);
  c.set("experiment", "out_dir", out_dir);
  return c;
}

ExperimentConfig ExperimentConfig::from_config(const config::Config& c) {
  ExperimentConfig e;
  e.source = dataset_source_from_string(c.get_or("dataset", "source", "synthetic"));
  e.synthetic.grid_h = c.has("dataset", "grid_rows") ? c.get_int("dataset", "grid_rows") : e.synthetic.grid_h;
  e.synthetic.grid_w = c.has("dataset", "grid_cols") ? c.get_int("dataset", "grid_cols") : e.synthetic.grid_w;
  if (c.has("dataset", "layout"))
    e.synthetic.layout = geo::world_layout_from_string(c.get("dataset", "layout"));
  if (c.has("dataset", "images_per_cell"))
    e.synthetic.images_per_cell = c.get_int("dataset", "images_per_cell");
  if (c.has("dataset", "synthetic_seed"))
    e.synthetic.seed = c.get_u64("dataset", "synthetic_seed");
  e.manifest_dir = c.get_or("dataset", "manifest_dir", "");
  e.tiles.url_template = c.get_or("dataset", "tile_url_template", "");
  e.tiles.api_key_env = c.get_or("dataset", "tile_api_key_env", "");
  if (c.has("dataset", "tile_zoom")) e.tiles.zoom = c.get_int("dataset", "tile_zoom");
  e.tiles.cache_dir = c.get_or("dataset", "tile_cache_dir", "");
  e.tiles.mosaic_png = c.get_or("dataset", "tile_mosaic_png", "");
  e.tiles.mosaic_world = c.get_or("dataset", "tile_mosaic_world", "");

  e.embedding = embed::embedding_kind_from_string(
      c.get_or("embedding", "kind", "grayscale"));

  if (c.has("gan", "base_channels")) e.base_channels = c.get_int("gan", "base_channels");
  if (c.has("gan", "learning_rate")) e.train.learning_rate = c.get_double("gan", "learning_rate");
  if (c.has("gan", "batch_size")) e.train.batch_size = c.get_int("gan", "batch_size");
  if (c.has("gan", "epochs")) e.train.epochs = c.get_int("gan", "epochs");
  if (c.has("gan", "max_steps")) e.train.max_steps = c.get_long("gan", "max_steps");
  if (c.has("gan", "beta1")) e.train.beta1 = c.get_double("gan", "beta1");
  if (c.has("gan", "beta2")) e.train.beta2 = c.get_double("gan", "beta2");
  if (c.has("gan", "saturating_g")) e.train.saturating_g = c.get_bool("gan", "saturating_g");
  if (c.has("gan", "d_update"))
    e.train.d_update = c.get("gan", "d_update") == "separate"
                           ? gan::DUpdate::Separate
                           : gan::DUpdate::Summed;
  if (c.has("gan", "seed")) e.train.seed = c.get_u64("gan", "seed");

  const std::string zp = c.get_or("features", "z_policy", "average-of-k");
  if (zp == "fixed-zero") e.z_policy.kind = features::ZPolicy::Kind::FixedZero;
  else if (zp == "fixed-seed") e.z_policy.kind = features::ZPolicy::Kind::FixedSeed;
  else if (zp == "average-of-k") e.z_policy.kind = features::ZPolicy::Kind::AverageOfK;
  else throw ConfigError("unknown z_policy: " + zp);
  if (c.has("features", "z_k")) e.z_policy.k = c.get_int("features", "z_k");
  if (c.has("features", "z_seed")) e.z_policy.seed = c.get_u64("features", "z_seed");
  e.featurize_generated = c.get_or("features", "featurize", "generated") != "real";

  if (c.has("probes", "svm_c")) e.svm.C = c.get_double("probes", "svm_c");
  if (c.has("probes", "svm_gamma")) e.svm.gamma = c.get_double("probes", "svm_gamma");
  if (c.has("probes", "svm_grid_search")) e.svm.grid_search = c.get_bool("probes", "svm_grid_search");
  if (c.has("probes", "cnn_width")) e.reference_cnn.width = c.get_int("probes", "cnn_width");
  if (c.has("probes", "cnn_epochs")) e.reference_cnn.epochs = c.get_int("probes", "cnn_epochs");
  if (c.has("probes", "cnn_batch_size")) e.reference_cnn.batch_size = c.get_int("probes", "cnn_batch_size");
  if (c.has("probes", "cnn_lr")) e.reference_cnn.lr = c.get_double("probes", "cnn_lr");
  if (c.has("probes", "cnn_max_train")) e.reference_cnn_max_train = c.get_int("probes", "cnn_max_train");

  if (c.has("interp", "sigma_km")) e.sigma_km = c.get_double("interp", "sigma_km");
  if (c.has("interp", "sigma_sweep")) {
    std::istringstream ss(c.get("interp", "sigma_sweep"));
    double v;
    while (ss >> v) e.sigma_sweep.push_back(v);
  }
  if (c.has("interp", "anchor_fraction")) e.anchor_fraction = c.get_double("interp", "anchor_fraction");

  if (c.has("experiment", "seed")) e.seed = c.get_u64("experiment", "seed");
  if (c.has("experiment", "train_fraction")) e.train_fraction = c.get_double("experiment", "train_fraction");
  e.out_dir = c.get_or("experiment", "out_dir", "");
  return e;
}

ExperimentConfig ExperimentConfig::desk_default(std::uint64_t seed,
                                                std::string out_dir) {
  ExperimentConfig e;
  e.source = DatasetSource::Synthetic;
  e.synthetic.grid_h = 16;
  e.synthetic.grid_w = 16;
  e.synthetic.layout = geo::WorldLayout::Checkerboard;
  e.synthetic.images_per_cell = 10;
  e.synthetic.seed = derive_seed(seed, "exp/world");
  e.embedding = embed::EmbeddingKind::Grayscale;
  e.base_channels = 64;
  e.train.learning_rate = 2e-4;
  e.train.batch_size = 32;
  e.train.epochs = 3;
  e.train.max_steps = 0;
  e.reference_cnn.width = 16;
  e.reference_cnn.epochs = 2;
  e.reference_cnn_max_train = 768;
  e.sigma_km = 2.0;
  e.anchor_fraction = 0.017;
  e.train_fraction = 0.8;
  e.seed = seed;
  e.out_dir = std::move(out_dir);
  return e;
}

// ---------------------------------------------------------------------------

geo::Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  switch (cfg.source) {
    case DatasetSource::Synthetic:
      return geo::to_dataset(geo::generate_synthetic_world(cfg.synthetic));
    case DatasetSource::Manifest:
      return geo::load_dataset(cfg.manifest_dir);
    case DatasetSource::Tiles: {
      geo::Dataset ds = geo::load_dataset(cfg.manifest_dir);
      geo::TileClient client(cfg.tiles);
      for (auto& s : ds.samples)
        s.overhead = client.fetch(s.ground.location, s.overhead.patch_size);
      return ds;
    }
  }
  throw ConfigError("unreachable dataset source");
}

std::shared_ptr<embed::Embedder> make_embedder(
    const ExperimentConfig& cfg, const std::vector<geo::PairedSample>& train) {
  switch (cfg.embedding) {
    case embed::EmbeddingKind::Grayscale:
      return std::make_shared<embed::GrayscaleEmbedder>();
    case embed::EmbeddingKind::Hsv:
      return std::make_shared<embed::HsvEmbedder>();
    case embed::EmbeddingKind::Cnn: {
      if (train.size() < static_cast<std::size_t>(embed::kCnnDim))
        throw embed::InsufficientSamplesError(
            "CNN embedding needs at least 25 training patches");
      auto encoder =
          embed::make_default_encoder(derive_seed(cfg.seed, "exp/encoder"));
      Eigen::MatrixXd D(static_cast<long>(train.size()), encoder->dim());
      for (std::size_t i = 0; i < train.size(); ++i)
        D.row(static_cast<long>(i)) =
            encoder->descriptor(train[i].overhead).transpose();
      return std::make_shared<embed::CnnEmbedder>(
          encoder, embed::PcaProjection::fit(D, embed::kCnnDim));
    }
  }
  throw ConfigError("unreachable embedding kind");
}

void split_indices(std::size_t n, double train_fraction, std::uint64_t seed,
                   std::vector<int>& train, std::vector<int>& test) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(
      std::max<long>(1, std::lround(train_fraction * static_cast<double>(n))));
  train.assign(idx.begin(), idx.begin() + std::min(n_train, n - 1));
  test.assign(idx.begin() + static_cast<long>(train.size()), idx.end());
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::MatrixXd embedding_matrix(const std::vector<embed::Embedding>& embs) {
  Eigen::MatrixXd X(static_cast<long>(embs.size()), embs.front().nef());
  for (std::size_t i = 0; i < embs.size(); ++i)
    X.row(static_cast<long>(i)) = embs[i].values.transpose();
  return X;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<long>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<long>(i)) = X.row(idx[i]);
  return out;
}

// Per-cell label lists for majority voting.
std::vector<std::vector<int>> group_by_cell(
    const geo::GridGeometry& grid, const std::vector<geo::PairedSample>& samples,
    const std::vector<int>& labels) {
  std::vector<std::vector<int>> cells(
      static_cast<std::size_t>(grid.rows()) * grid.cols());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    cells[static_cast<std::size_t>(s.cell.row) * grid.cols() + s.cell.col]
        .push_back(labels[i]);
  }
  return cells;
}

mapping::LandCoverMap truth_map(const geo::Dataset& ds) {
  std::vector<std::vector<int>> cells(
      static_cast<std::size_t>(ds.grid.rows()) * ds.grid.cols());
  for (const auto& s : ds.samples)
    cells[static_cast<std::size_t>(s.cell.row) * ds.grid.cols() + s.cell.col]
        .push_back(s.cell.label.id);
  return mapping::build_map(ds.grid, cells, "ground-truth");
}

void save_map(const mapping::LandCoverMap& map, const fs::path& dir,
              const std::string& stem) {
  mapping::save_map_csv(map, (dir / (stem + ".csv")).string());
  geo::write_png((dir / (stem + ".png")).string(),
                 mapping::render_map(map, mapping::Palette::urban_rural()));
}

std::vector<geo::GroundImage> generate_fakes(
    gan::Generator& g, const std::vector<geo::PairedSample>& samples,
    const std::vector<embed::Embedding>& embs, std::uint64_t seed) {
  nn::Context eval;
  Rng rng(seed);
  std::vector<geo::GroundImage> fakes(samples.size());
  const int B = 32;
  const int n = static_cast<int>(samples.size());
  for (int start = 0; start < n; start += B) {
    const int count = std::min(B, n - start);
    nn::Tensor z({count, g.arch().noise_dim});
    for (auto& v : z.v) v = rng.normal();
    nn::Tensor e({count, g.arch().nef});
    for (int i = 0; i < count; ++i)
      std::copy(embs[static_cast<std::size_t>(start + i)].values.data(),
                embs[static_cast<std::size_t>(start + i)].values.data() +
                    g.arch().nef,
                e.sample(i));
    const nn::Tensor imgs = g.forward(z, e, eval);
    for (int i = 0; i < count; ++i) {
      auto& f = fakes[static_cast<std::size_t>(start + i)];
      f.pixels = gan::tensor_to_image(imgs, i);
      f.location = samples[static_cast<std::size_t>(start + i)].ground.location;
      f.label = samples[static_cast<std::size_t>(start + i)].cell.label;
    }
  }
  return fakes;
}

}  // namespace

ExperimentResult run_report(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  cfg.validate();
  if (cfg.out_dir.empty()) throw ConfigError("report needs an out_dir");
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  cfg.to_config().save((out / "config.resolved.cfg").string());

  ExperimentResult res;

  // Dataset and split.
  const geo::Dataset ds = load_experiment_dataset(cfg);
  if (ds.samples.size() < 16)
    throw ConfigError("experiment needs at least 16 samples");
  std::vector<int> train_idx, test_idx;
  split_indices(ds.samples.size(), cfg.train_fraction,
                derive_seed(cfg.seed, "exp/split"), train_idx, test_idx);
  const auto train_samples = take(ds.samples, train_idx);
  const auto test_samples = take(ds.samples, test_idx);
  std::vector<int> all_labels;
  for (const auto& s : ds.samples) all_labels.push_back(s.cell.label.id);
  const auto train_labels = take(all_labels, train_idx);
  const auto test_labels = take(all_labels, test_idx);
  log_info("dataset: " + std::to_string(ds.samples.size()) + " samples, " +
           std::to_string(train_idx.size()) + " train / " +
           std::to_string(test_idx.size()) + " test");

  // Embeddings.
  const auto embedder = make_embedder(cfg, train_samples);
  std::vector<embed::Embedding> all_embs;
  all_embs.reserve(ds.samples.size());
  for (const auto& s : ds.samples) all_embs.push_back((*embedder)(s.overhead));
  const Eigen::MatrixXd emb_matrix = embedding_matrix(all_embs);

  // cGAN training on the train split.
  gan::GanArch arch;
  arch.nef = embedder->nef();
  arch.base_channels = cfg.base_channels;
  gan::Generator g(arch, derive_seed(cfg.seed, "exp/init-g"));
  gan::Discriminator d(arch, derive_seed(cfg.seed, "exp/init-d"));
  gan::save_generator(g, (out / "g_init.ckpt").string(), cfg.seed, 0);
  gan::save_discriminator(d, (out / "d_init.ckpt").string(), cfg.seed, 0);
  gan::TrainConfig tc = cfg.train;
  if (tc.seed == 0) tc.seed = derive_seed(cfg.seed, "exp/train");
  res.history = gan::train(g, d, train_samples, *embedder, tc);
  res.history.save_csv((out / "loss.csv").string());
  {
    plot::Series ld{"d_loss", {}, {200, 60, 60}};
    plot::Series lg{"g_loss", {}, {60, 60, 200}};
    for (const auto& s : res.history.steps) {
      ld.values.push_back(s.d);
      lg.values.push_back(s.g);
    }
    geo::write_png((out / "loss.png").string(), plot::line_chart({ld, lg}));
  }
  const long applied_steps =
      tc.learning_rate > 0.0 ? static_cast<long>(res.history.steps.size()) : 0;
  gan::save_generator(g, (out / "g.ckpt").string(), cfg.seed, applied_steps);
  gan::save_discriminator(d, (out / "d.ckpt").string(), cfg.seed,
                          applied_steps);
  log_info("gan trained (" + std::to_string(res.history.steps.size()) +
           " steps, " + std::to_string(seconds_since(t0)) + "s elapsed)");

  res.d_real_fake_acc = gan::real_fake_accuracy(
      g, d, test_samples, *embedder, derive_seed(cfg.seed, "exp/eval"));

  // Learned features at every location.
  features::ZPolicy zp = cfg.z_policy;
  if (zp.seed == 0) zp.seed = derive_seed(cfg.seed, "exp/zpolicy");
  const std::vector<features::FeatureVector> feats =
      cfg.featurize_generated
          ? features::extract_features_from_overheads(g, d, ds.samples,
                                                      *embedder, zp)
          : features::extract_features_from_ground_images(d, ds.samples,
                                                          *embedder);
  features::save_features_csv((out / "features.csv").string(), feats);
  const Eigen::MatrixXd feat_matrix = features::feature_matrix(feats);
  log_info("features extracted (" + std::to_string(seconds_since(t0)) +
           "s elapsed)");

  // Probes on embeddings and on learned features (held-out accuracy).
  const auto emb_probe = probes::train_probe(
      take_rows(emb_matrix, train_idx), train_labels, cfg.svm,
      derive_seed(cfg.seed, "exp/svm-emb"));
  res.emb_probe_acc = probes::evaluate_probe(
      emb_probe, take_rows(emb_matrix, test_idx), test_labels);
  emb_probe.save((out / "probe_embedding.svm").string());

  const auto cgan_probe = probes::train_probe(
      take_rows(feat_matrix, train_idx), train_labels, cfg.svm,
      derive_seed(cfg.seed, "exp/svm-cgan"));
  res.cgan_probe_acc = probes::evaluate_probe(
      cgan_probe, take_rows(feat_matrix, test_idx), test_labels);
  cgan_probe.save((out / "probe_cgan.svm").string());
  log_info("svm probes done (" + std::to_string(seconds_since(t0)) +
           "s elapsed)");

  // Reference CNN on real ground images.
  std::vector<int> cnn_train_idx = train_idx;
  if (cfg.reference_cnn_max_train > 0 &&
      static_cast<int>(cnn_train_idx.size()) > cfg.reference_cnn_max_train)
    cnn_train_idx.resize(static_cast<std::size_t>(cfg.reference_cnn_max_train));
  auto image_ptrs = [&](const std::vector<int>& idx) {
    std::vector<const geo::ImageU8*> out_ptrs;
    for (int i : idx)
      out_ptrs.push_back(&ds.samples[static_cast<std::size_t>(i)].ground.pixels);
    return out_ptrs;
  };
  probes::CnnHyper cnn_hp = cfg.reference_cnn;
  cnn_hp.seed = derive_seed(cfg.seed, "exp/refcnn");
  const auto ref_cnn = probes::train_reference_cnn(
      image_ptrs(cnn_train_idx), take(all_labels, cnn_train_idx), cnn_hp);
  res.cnn_real_acc =
      probes::evaluate_probe(ref_cnn, image_ptrs(test_idx), test_labels);
  ref_cnn.save((out / "reference_cnn.ckpt").string());
  log_info("reference cnn trained, real-image accuracy " +
           std::to_string(res.cnn_real_acc) + " (" +
           std::to_string(seconds_since(t0)) + "s elapsed)");

  // Interpolate-then-classify probe: anchors at the training locations,
  // queries at the held-out locations.
  std::vector<geo::GeoLocation> all_locations;
  for (const auto& s : ds.samples) all_locations.push_back(s.ground.location);
  const Eigen::MatrixXd cnn_feats_train = ref_cnn.cnn->features(image_ptrs(train_idx));
  {
    interp::SparseFeatureField field;
    field.locations = take(all_locations, train_idx);
    field.features = cnn_feats_train;
    field.sigma_km = cfg.sigma_km;
    const auto pred = interp::interpolate_then_classify(
        field, ref_cnn, take(all_locations, test_idx));
    res.interp_probe_acc = probes::accuracy(pred, test_labels);
  }

  // Dense maps (truth, classified ground images, learned features,
  // interpolated features) with majority-vote cell labels.
  const mapping::LandCoverMap truth = truth_map(ds);
  save_map(truth, out, "map_truth");

  const auto all_ptrs = image_ptrs([&] {
    std::vector<int> all(ds.samples.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());
  {
    const auto pred = ref_cnn.cnn->predict(all_ptrs);
    const auto map = mapping::build_map(
        ds.grid, group_by_cell(ds.grid, ds.samples, pred), "ground-images");
    res.map_acc_ground_images = mapping::map_accuracy(map, truth);
    save_map(map, out, "map_ground_images");
  }
  {
    const auto pred = cgan_probe.svm->predict_all(feat_matrix);
    const auto map = mapping::build_map(
        ds.grid, group_by_cell(ds.grid, ds.samples, pred), "cgan-features");
    res.map_acc_cgan = mapping::map_accuracy(map, truth);
    save_map(map, out, "map_cgan");
  }
  {
    // Sparse anchors: the paper-scale protocol interpolates from ~1.7% of
    // the dense image set.
    std::vector<int> all(ds.samples.size());
    std::iota(all.begin(), all.end(), 0);
    Rng rng(derive_seed(cfg.seed, "exp/anchors"));
    rng.shuffle(all);
    const auto n_anchor = static_cast<std::size_t>(std::max<long>(
        1, std::lround(cfg.anchor_fraction *
                       static_cast<double>(ds.samples.size()))));
    std::vector<int> anchor_idx(all.begin(), all.begin() + static_cast<long>(n_anchor));

    interp::SparseFeatureField field;
    field.locations = take(all_locations, anchor_idx);
    field.features = ref_cnn.cnn->features(image_ptrs(anchor_idx));
    field.sigma_km = cfg.sigma_km;
    const auto pred =
        interp::interpolate_then_classify(field, ref_cnn, all_locations);
    const auto map = mapping::build_map(
        ds.grid, group_by_cell(ds.grid, ds.samples, pred), "interpolated");
    res.map_acc_interp = mapping::map_accuracy(map, truth);
    save_map(map, out, "map_interp");

    if (!cfg.sigma_sweep.empty()) {
      std::ofstream sweep(out / "sigma_sweep.csv");
      sweep << "sigma_km,map_accuracy\n";
      for (double s : cfg.sigma_sweep) {
        interp::SparseFeatureField f2 = field;
        f2.sigma_km = s;
        const auto p2 =
            interp::interpolate_then_classify(f2, ref_cnn, all_locations);
        const auto m2 = mapping::build_map(
            ds.grid, group_by_cell(ds.grid, ds.samples, p2), "interpolated");
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", s,
                      mapping::map_accuracy(m2, truth));
        sweep << buf;
      }
    }
  }
  log_info("maps built (" + std::to_string(seconds_since(t0)) + "s elapsed)");

  // Classification on generated images: train and test the reference CNN
  // entirely on fakes, against its real-image twin.
  {
    const auto fakes =
        generate_fakes(g, ds.samples, all_embs, derive_seed(cfg.seed, "exp/fakegen"));
    auto fake_ptrs = [&](const std::vector<int>& idx) {
      std::vector<const geo::ImageU8*> out_ptrs;
      for (int i : idx)
        out_ptrs.push_back(&fakes[static_cast<std::size_t>(i)].pixels);
      return out_ptrs;
    };
    probes::CnnHyper fake_hp = cfg.reference_cnn;
    fake_hp.seed = derive_seed(cfg.seed, "exp/refcnn-fake");
    const auto fake_cnn = probes::train_reference_cnn(
        fake_ptrs(cnn_train_idx), take(all_labels, cnn_train_idx), fake_hp);
    res.cnn_fake_acc =
        probes::evaluate_probe(fake_cnn, fake_ptrs(test_idx), test_labels);
    geo::write_png((out / "fake_samples.png").string(), [&] {
      // 4x4 sheet of generated images for eyeballing.
      geo::ImageU8 sheet(4 * 64, 4 * 64, 3);
      for (int i = 0; i < 16 && i < static_cast<int>(fakes.size()); ++i) {
        const auto& px = fakes[static_cast<std::size_t>(i)].pixels;
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x)
            for (int c = 0; c < 3; ++c)
              sheet.at((i / 4) * 64 + y, (i % 4) * 64 + x, c) = px.at(y, x, c);
      }
      return sheet;
    }());
  }
  log_info("fake-image ablation done (" + std::to_string(seconds_since(t0)) +
           "s elapsed)");

  // Tables.
  {
    std::ofstream t2(out / "table2.csv");
    t2 << "block,feature_type,name,dimension,accuracy\n";
    char buf[256];
    const std::string ename = embed::to_string(cfg.embedding);
    std::snprintf(buf, sizeof(buf),
                  "embedding-probe,Embedding from overhead patches,%s,%d,%.6f\n",
                  ename.c_str(), embedder->nef(), res.emb_probe_acc);
    t2 << buf;
    std::snprintf(
        buf, sizeof(buf),
        "cgan-feature-probe,cGAN generated image features,%s,%d,%.6f\n",
        ename.c_str(), arch.feature_dim(), res.cgan_probe_acc);
    t2 << buf;
    std::snprintf(buf, sizeof(buf),
                  "interpolated-probe,Interpolated reference-CNN features,"
                  "sigma=%g,%d,%.6f\n",
                  cfg.sigma_km, probes::kCnnFeatureDim, res.interp_probe_acc);
    t2 << buf;
  }
  {
    std::ofstream t3(out / "table3.csv");
    t3 << "name,map_accuracy\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "ground-images,%.6f\n",
                  res.map_acc_ground_images);
    t3 << buf;
    std::snprintf(buf, sizeof(buf), "cgan-features,%.6f\n", res.map_acc_cgan);
    t3 << buf;
    std::snprintf(buf, sizeof(buf), "interpolated,%.6f\n", res.map_acc_interp);
    t3 << buf;
  }
  {
    std::ofstream t4(out / "table4.csv");
    t4 << "classifier,images,accuracy\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "reference-cnn,real,%.6f\n", res.cnn_real_acc);
    t4 << buf;
    std::snprintf(buf, sizeof(buf), "reference-cnn,generated,%.6f\n",
                  res.cnn_fake_acc);
    t4 << buf;
  }

  log_info("report complete in " + std::to_string(seconds_since(t0)) + "s");
  return res;
}

}  // namespace groundgen::experiment
