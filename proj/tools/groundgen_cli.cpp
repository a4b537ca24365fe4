// Command-line front end: batch experiment orchestration over the library.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "groundgen/experiment.hpp"
#include "groundgen/imageio.hpp"
#include "groundgen/plot.hpp"
#include "groundgen/rng.hpp"

namespace fs = std::filesystem;
using namespace groundgen;

namespace {

struct LabeledLocation {
  geo::GeoLocation loc;
  int label;
};

void save_labels_csv(const std::string& path,
                     const std::vector<LabeledLocation>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "lat,lon,label\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", r.loc.lat, r.loc.lon,
                  r.label);
    f << buf;
  }
}

std::vector<LabeledLocation> load_labels_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "lat,lon,label")
    throw ParseError("not a labels csv: " + path);
  std::vector<LabeledLocation> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    LabeledLocation r;
    if (std::sscanf(line.c_str(), "%lg,%lg,%d", &r.loc.lat, &r.loc.lon,
                    &r.label) != 3)
      throw ParseError("bad labels row", lineno);
    rows.push_back(r);
  }
  return rows;
}

geo::SyntheticWorldSpec parse_world(const std::string& grid,
                                    const std::string& layout, int ipc,
                                    std::uint64_t seed) {
  geo::SyntheticWorldSpec spec;
  if (std::sscanf(grid.c_str(), "%dx%d", &spec.grid_h, &spec.grid_w) != 2)
    throw ConfigError("grid must look like 16x16: " + grid);
  spec.layout = geo::world_layout_from_string(layout);
  spec.images_per_cell = ipc;
  spec.seed = seed;
  return spec;
}

std::shared_ptr<embed::Embedder> embedder_for(
    const std::string& kind, const geo::Dataset& ds, std::uint64_t seed) {
  experiment::ExperimentConfig cfg;
  cfg.embedding = embed::embedding_kind_from_string(kind);
  cfg.seed = seed;
  return experiment::make_embedder(cfg, ds.samples);
}

void write_resolved(const config::Config& c, const std::string& out_dir) {
  fs::create_directories(out_dir);
  c.save((fs::path(out_dir) / "config.resolved.cfg").string());
}

int cmd_synth(const std::string& grid, const std::string& layout, int ipc,
              std::uint64_t seed, const std::string& out) {
  const auto spec = parse_world(grid, layout, ipc, seed);
  const auto world = geo::generate_synthetic_world(spec);
  fs::create_directories(out);
  geo::save_dataset(geo::to_dataset(world), out);

  mapping::LandCoverMap truth;
  truth.grid = world.grid;
  truth.labels = world.cell_labels;
  truth.provenance = "ground-truth";
  mapping::save_map_csv(truth, (fs::path(out) / "truth.csv").string());
  geo::write_png((fs::path(out) / "truth.png").string(),
                 mapping::render_map(truth, mapping::Palette::urban_rural()));

  config::Config c;
  c.set("dataset", "source", "synthetic");
  c.set("dataset", "grid", grid);
  c.set("dataset", "layout", layout);
  c.set_int("dataset", "images_per_cell", ipc);
  c.set_u64("dataset", "seed", seed);
  write_resolved(c, out);
  log_info("wrote dataset with " + std::to_string(world.samples.size()) +
           " samples to " + out);
  return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& embedding,
              int base_channels, gan::TrainConfig tc, const std::string& out) {
  const geo::Dataset ds = geo::load_dataset(dataset_dir);
  const auto embedder = embedder_for(embedding, ds, tc.seed);

  gan::GanArch arch;
  arch.nef = embedder->nef();
  arch.base_channels = base_channels;
  gan::Generator g(arch, derive_seed(tc.seed, "cli/init-g"));
  gan::Discriminator d(arch, derive_seed(tc.seed, "cli/init-d"));

  fs::create_directories(out);
  gan::save_generator(g, (fs::path(out) / "g_init.ckpt").string(), tc.seed, 0);
  gan::save_discriminator(d, (fs::path(out) / "d_init.ckpt").string(), tc.seed, 0);

  const gan::LossHistory hist = gan::train(g, d, ds.samples, *embedder, tc);
  hist.save_csv((fs::path(out) / "loss.csv").string());
  plot::Series ld{"d_loss", {}, {200, 60, 60}}, lg{"g_loss", {}, {60, 60, 200}};
  for (const auto& s : hist.steps) {
    ld.values.push_back(s.d);
    lg.values.push_back(s.g);
  }
  geo::write_png((fs::path(out) / "loss.png").string(),
                 plot::line_chart({ld, lg}));
  // step counts applied parameter updates; a zero learning rate applies none
  // and the final checkpoint matches the init checkpoint byte for byte.
  const long applied =
      tc.learning_rate > 0.0 ? static_cast<long>(hist.steps.size()) : 0;
  gan::save_generator(g, (fs::path(out) / "g.ckpt").string(), tc.seed, applied);
  gan::save_discriminator(d, (fs::path(out) / "d.ckpt").string(), tc.seed,
                          applied);

  config::Config c;
  c.set("dataset", "manifest_dir", dataset_dir);
  c.set("embedding", "kind", embedding);
  c.set_int("gan", "base_channels", base_channels);
  c.set_double("gan", "learning_rate", tc.learning_rate);
  c.set_int("gan", "batch_size", tc.batch_size);
  c.set_int("gan", "epochs", tc.epochs);
  c.set_int("gan", "max_steps", tc.max_steps);
  c.set_bool("gan", "saturating_g", tc.saturating_g);
  c.set("gan", "d_update",
        tc.d_update == gan::DUpdate::Summed ? "summed" : "separate");
  c.set_u64("gan", "seed", tc.seed);
  write_resolved(c, out);
  log_info("trained " + std::to_string(hist.steps.size()) + " steps; checkpoints in " + out);
  return 0;
}

int cmd_generate(const std::string& g_path, const std::string& dataset_dir,
                 const std::string& embedding, int count, std::uint64_t seed,
                 const std::string& out) {
  gan::Generator g = gan::load_generator(g_path);
  const geo::Dataset ds = geo::load_dataset(dataset_dir);
  const auto embedder = embedder_for(embedding, ds, seed);
  if (embedder->nef() != g.arch().nef)
    throw DimensionError("embedding kind does not match the checkpoint nef");
  fs::create_directories(out);
  const int n = count > 0
                    ? std::min<int>(count, static_cast<int>(ds.samples.size()))
                    : static_cast<int>(ds.samples.size());
  Rng rng(derive_seed(seed, "cli/generate"));
  nn::Context eval;
  char name[64];
  for (int i = 0; i < n; ++i) {
    const auto& s = ds.samples[static_cast<std::size_t>(i)];
    nn::Tensor z({1, g.arch().noise_dim});
    for (auto& v : z.v) v = rng.normal();
    const nn::Tensor img =
        g.forward(z, gan::embeddings_to_tensor({(*embedder)(s.overhead)}), eval);
    std::snprintf(name, sizeof(name), "fake_%06d.png", i);
    geo::write_png((fs::path(out) / name).string(), gan::tensor_to_image(img, 0));
  }
  config::Config c;
  c.set("generate", "checkpoint", g_path);
  c.set("generate", "embedding", embedding);
  c.set_int("generate", "count", n);
  c.set_u64("generate", "seed", seed);
  write_resolved(c, out);
  log_info("generated " + std::to_string(n) + " images in " + out);
  return 0;
}

int cmd_extract(const std::string& g_path, const std::string& d_path,
                const std::string& dataset_dir, const std::string& embedding,
                const std::string& source, const std::string& z_policy, int z_k,
                std::uint64_t seed, const std::string& out_csv) {
  gan::Generator g = gan::load_generator(g_path);
  gan::Discriminator d = gan::load_discriminator(d_path);
  const geo::Dataset ds = geo::load_dataset(dataset_dir);
  const auto embedder = embedder_for(embedding, ds, seed);

  features::ZPolicy zp;
  if (z_policy == "fixed-zero") zp = features::ZPolicy::fixed_zero();
  else if (z_policy == "fixed-seed") zp = features::ZPolicy::fixed_seed(seed);
  else if (z_policy == "average-of-k")
    zp = features::ZPolicy::average_of_k(z_k, seed);
  else throw ConfigError("unknown z policy: " + z_policy);

  std::vector<features::FeatureVector> feats;
  if (source == "generated")
    feats = features::extract_features_from_overheads(g, d, ds.samples,
                                                      *embedder, zp);
  else if (source == "real")
    feats = features::extract_features_from_ground_images(d, ds.samples,
                                                          *embedder);
  else
    throw ConfigError("source must be generated or real");

  features::save_features_csv(out_csv, feats);
  features::save_features_bin(out_csv + ".bin", feats);
  log_info("wrote " + std::to_string(feats.size()) + " features to " + out_csv);
  return 0;
}

int cmd_probe(const std::string& features_csv, const std::string& dataset_dir,
              const std::string& kind, double C, double gamma, bool grid,
              int cnn_width, int cnn_epochs, double train_fraction,
              std::uint64_t seed, const std::string& out) {
  const geo::Dataset ds = geo::load_dataset(dataset_dir);
  std::vector<int> labels;
  for (const auto& s : ds.samples) labels.push_back(s.cell.label.id);

  std::vector<int> train_idx, test_idx;
  experiment::split_indices(ds.samples.size(), train_fraction,
                            derive_seed(seed, "cli/probe-split"), train_idx,
                            test_idx);
  fs::create_directories(out);

  probes::ProbeModel model;
  double test_acc = 0.0;
  int dim = 0;
  if (kind == "svm-rbf") {
    const auto feats = features::load_features_csv(features_csv);
    if (feats.size() != ds.samples.size())
      throw DimensionError("features do not align with the dataset");
    const Eigen::MatrixXd X = features::feature_matrix(feats);
    dim = static_cast<int>(X.cols());
    Eigen::MatrixXd Xtr(static_cast<long>(train_idx.size()), X.cols());
    std::vector<int> ytr;
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      Xtr.row(static_cast<long>(i)) = X.row(train_idx[i]);
      ytr.push_back(labels[static_cast<std::size_t>(train_idx[i])]);
    }
    probes::SvmHyper hp;
    hp.C = C;
    hp.gamma = gamma;
    hp.grid_search = grid;
    model = probes::train_probe(Xtr, ytr, hp, derive_seed(seed, "cli/probe"));
    Eigen::MatrixXd Xte(static_cast<long>(test_idx.size()), X.cols());
    std::vector<int> yte;
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      Xte.row(static_cast<long>(i)) = X.row(test_idx[i]);
      yte.push_back(labels[static_cast<std::size_t>(test_idx[i])]);
    }
    test_acc = probes::evaluate_probe(model, Xte, yte);
  } else if (kind == "reference-cnn") {
    std::vector<const geo::ImageU8*> tr, te;
    std::vector<int> ytr, yte;
    for (int i : train_idx) {
      tr.push_back(&ds.samples[static_cast<std::size_t>(i)].ground.pixels);
      ytr.push_back(labels[static_cast<std::size_t>(i)]);
    }
    for (int i : test_idx) {
      te.push_back(&ds.samples[static_cast<std::size_t>(i)].ground.pixels);
      yte.push_back(labels[static_cast<std::size_t>(i)]);
    }
    probes::CnnHyper hp;
    hp.width = cnn_width;
    hp.epochs = cnn_epochs;
    hp.seed = derive_seed(seed, "cli/probe");
    model = probes::train_reference_cnn(tr, ytr, hp);
    test_acc = probes::evaluate_probe(model, te, yte);
    dim = probes::kCnnFeatureDim;
  } else {
    throw ConfigError("kind must be svm-rbf or reference-cnn");
  }

  model.save((fs::path(out) / ("probe_" + kind + ".ckpt")).string());
  std::ofstream metrics(fs::path(out) / "metrics.csv");
  metrics << "feature_type,name,dimension,accuracy\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f\n", kind.c_str(),
                fs::path(features_csv).filename().string().c_str(), dim,
                test_acc);
  metrics << buf;
  log_info(kind + " probe: train accuracy " +
           std::to_string(model.train_accuracy) + ", held-out accuracy " +
           std::to_string(test_acc));
  return 0;
}

int cmd_interp(const std::string& anchors_csv, const std::string& probe_path,
               const std::string& dataset_dir, double sigma,
               const std::string& out_csv) {
  const auto anchors = features::load_features_csv(anchors_csv);
  const auto field = interp::SparseFeatureField::from_features(anchors, sigma);
  const auto probe = probes::ProbeModel::load(probe_path);
  const geo::Dataset ds = geo::load_dataset(dataset_dir);
  std::vector<geo::GeoLocation> queries;
  for (const auto& s : ds.samples) queries.push_back(s.ground.location);
  const auto pred = interp::interpolate_then_classify(field, probe, queries);
  std::vector<LabeledLocation> rows;
  for (std::size_t i = 0; i < queries.size(); ++i)
    rows.push_back({queries[i], pred[i]});
  save_labels_csv(out_csv, rows);
  log_info("interpolated labels for " + std::to_string(rows.size()) +
           " queries -> " + out_csv);
  return 0;
}

int cmd_map(const std::string& labels_csv, const std::string& dataset_dir,
            const std::string& provenance, const std::string& out) {
  const geo::Dataset ds = geo::load_dataset(dataset_dir);
  const auto rows = load_labels_csv(labels_csv);
  if (rows.size() != ds.samples.size())
    throw DimensionError("labels csv does not align with the dataset");
  std::vector<std::vector<int>> cells(
      static_cast<std::size_t>(ds.grid.rows()) * ds.grid.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = ds.samples[i];
    cells[static_cast<std::size_t>(s.cell.row) * ds.grid.cols() + s.cell.col]
        .push_back(rows[i].label);
  }
  const auto map = mapping::build_map(ds.grid, cells, provenance);
  fs::create_directories(out);
  mapping::save_map_csv(map, (fs::path(out) / "map.csv").string());
  geo::write_png((fs::path(out) / "map.png").string(),
                 mapping::render_map(map, mapping::Palette::urban_rural()));

  const auto truth_path = fs::path(dataset_dir) / "truth.csv";
  if (fs::exists(truth_path)) {
    const auto truth = mapping::load_map_csv(truth_path.string());
    const double acc = mapping::map_accuracy(map, truth);
    std::ofstream metrics(fs::path(out) / "map_accuracy.csv");
    metrics << "provenance,map_accuracy\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s,%.6f\n", provenance.c_str(), acc);
    metrics << buf;
    log_info("map accuracy vs truth: " + std::to_string(acc));
  }
  return 0;
}

int cmd_report(const std::string& config_path, std::uint64_t seed,
               const std::string& out) {
  experiment::ExperimentConfig cfg =
      config_path.empty()
          ? experiment::ExperimentConfig::desk_default(seed, out)
          : experiment::ExperimentConfig::from_config(
                config::Config::load(config_path));
  if (!out.empty()) cfg.out_dir = out;
  if (config_path.empty()) cfg.seed = seed;
  const auto res = experiment::run_report(cfg);
  std::printf("embedding-probe accuracy:  %.4f\n", res.emb_probe_acc);
  std::printf("cgan-feature-probe accuracy: %.4f\n", res.cgan_probe_acc);
  std::printf("interpolated-probe accuracy: %.4f\n", res.interp_probe_acc);
  std::printf("map accuracy (ground images): %.4f\n", res.map_acc_ground_images);
  std::printf("map accuracy (cgan features): %.4f\n", res.map_acc_cgan);
  std::printf("map accuracy (interpolated):  %.4f\n", res.map_acc_interp);
  std::printf("reference-cnn on real images: %.4f\n", res.cnn_real_acc);
  std::printf("reference-cnn on fake images: %.4f\n", res.cnn_fake_acc);
  std::printf("discriminator real-vs-fake:   %.4f\n", res.d_real_fake_acc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groundgen: ground-level view and feature synthesis from "
               "overhead imagery, with land-cover mapping experiments"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string grid = "16x16", layout = "checkerboard", out;
  int ipc = 10;
  std::uint64_t seed = 0;
  synth->add_option("--grid", grid, "rows x cols, e.g. 16x16");
  synth->add_option("--layout", layout, "checkerboard | halves | random");
  synth->add_option("--images-per-cell", ipc);
  synth->add_option("--seed", seed);
  synth->add_option("--out", out)->required();

  // train
  auto* train = app.add_subcommand("train", "train the conditional GAN");
  std::string dataset_dir, embedding = "grayscale", d_update = "summed";
  int base_channels = 64;
  gan::TrainConfig tc;
  tc.batch_size = 32;
  tc.epochs = 5;
  bool saturating = false;
  train->add_option("--dataset", dataset_dir)->required();
  train->add_option("--embedding", embedding, "grayscale | hsv | cnn");
  train->add_option("--base-channels", base_channels,
                    "first generator block width (1024 = reference scale)");
  train->add_option("--lr", tc.learning_rate);
  train->add_option("--batch", tc.batch_size);
  train->add_option("--epochs", tc.epochs);
  train->add_option("--max-steps", tc.max_steps);
  train->add_option("--seed", tc.seed);
  train->add_flag("--saturating", saturating,
                  "minimax generator loss instead of non-saturating");
  train->add_option("--d-update", d_update, "summed | separate");
  train->add_option("--out", out)->required();

  // generate
  auto* gen = app.add_subcommand("generate", "synthesize ground-level views");
  std::string g_path, d_path;
  int count = 16;
  gen->add_option("--generator", g_path)->required();
  gen->add_option("--dataset", dataset_dir)->required();
  gen->add_option("--embedding", embedding);
  gen->add_option("--n", count, "number of images (0 = all)");
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();

  // extract
  auto* extract = app.add_subcommand("extract", "extract learned features");
  std::string source = "generated", z_policy = "average-of-k", out_csv;
  int z_k = 4;
  extract->add_option("--generator", g_path)->required();
  extract->add_option("--discriminator", d_path)->required();
  extract->add_option("--dataset", dataset_dir)->required();
  extract->add_option("--embedding", embedding);
  extract->add_option("--source", source, "generated | real");
  extract->add_option("--z-policy", z_policy,
                      "fixed-zero | fixed-seed | average-of-k");
  extract->add_option("--z-k", z_k);
  extract->add_option("--seed", seed);
  extract->add_option("--out", out_csv)->required();

  // probe
  auto* probe = app.add_subcommand("probe", "train a representation probe");
  std::string features_csv, kind = "svm-rbf";
  double C = 1.0, gamma = 0.0, train_fraction = 0.8;
  bool grid_search = false;
  int cnn_width = 16, cnn_epochs = 2;
  probe->add_option("--features", features_csv);
  probe->add_option("--dataset", dataset_dir)->required();
  probe->add_option("--kind", kind, "svm-rbf | reference-cnn");
  probe->add_option("--C", C);
  probe->add_option("--gamma", gamma, "0 selects 1/(dim*var)");
  probe->add_flag("--grid-search", grid_search);
  probe->add_option("--cnn-width", cnn_width);
  probe->add_option("--cnn-epochs", cnn_epochs);
  probe->add_option("--train-fraction", train_fraction);
  probe->add_option("--seed", seed);
  probe->add_option("--out", out)->required();

  // interp
  auto* interp_cmd = app.add_subcommand(
      "interp", "interpolate sparse features and classify");
  std::string anchors_csv, probe_path;
  double sigma = 2.0;
  interp_cmd->add_option("--anchors", anchors_csv)->required();
  interp_cmd->add_option("--probe", probe_path)->required();
  interp_cmd->add_option("--dataset", dataset_dir)->required();
  interp_cmd->add_option("--sigma", sigma, "kernel bandwidth, km");
  interp_cmd->add_option("--out", out_csv)->required();

  // map
  auto* map_cmd = app.add_subcommand("map", "build a land-cover map");
  std::string labels_csv, provenance = "cgan-features";
  map_cmd->add_option("--labels", labels_csv)->required();
  map_cmd->add_option("--dataset", dataset_dir)->required();
  map_cmd->add_option("--provenance", provenance);
  map_cmd->add_option("--out", out)->required();

  // report
  auto* report = app.add_subcommand(
      "report", "run the full desk-scale experiment and emit tables");
  std::string config_path;
  report->add_option("--config", config_path, "experiment config file");
  report->add_option("--seed", seed);
  report->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(grid, layout, ipc, seed, out);
    if (train->parsed()) {
      tc.saturating_g = saturating;
      tc.d_update = d_update == "separate" ? gan::DUpdate::Separate
                                           : gan::DUpdate::Summed;
      return cmd_train(dataset_dir, embedding, base_channels, tc, out);
    }
    if (gen->parsed())
      return cmd_generate(g_path, dataset_dir, embedding, count, seed, out);
    if (extract->parsed())
      return cmd_extract(g_path, d_path, dataset_dir, embedding, source,
                         z_policy, z_k, seed, out_csv);
    if (probe->parsed())
      return cmd_probe(features_csv, dataset_dir, kind, C, gamma, grid_search,
                       cnn_width, cnn_epochs, train_fraction, seed, out);
    if (interp_cmd->parsed())
      return cmd_interp(anchors_csv, probe_path, dataset_dir, sigma, out_csv);
    if (map_cmd->parsed())
      return cmd_map(labels_csv, dataset_dir, provenance, out);
    if (report->parsed()) return cmd_report(config_path, seed, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
