#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace std;
namespace fs = std::filesystem;

#ifndef GROUNDGEN_CLI
#error "GROUNDGEN_CLI must point at the built binary"
#endif

namespace {

int run(const string& args) {
  const string cmd = string(GROUNDGEN_CLI) + " " + args + " 2>>/tmp/gg_cli_test.log";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gg_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(bool(f));
  return string((istreambuf_iterator<char>(f)), istreambuf_iterator<char>());
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
  size_t count_a = 0;
  for (auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++count_a;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel)) return false;
    if (slurp(e.path()) != slurp(b / rel)) return false;
  }
  size_t count_b = 0;
  for (auto& e : fs::recursive_directory_iterator(b))
    count_b += e.is_regular_file();
  return count_a == count_b;
}

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
  CHECK(run("--help >/dev/null") == 0);
  CHECK(run("synth") == 2);          // missing --out
  CHECK(run("frobnicate") == 2);     // unknown subcommand
  CHECK(run("") == 2);               // no subcommand
}

TEST_CASE("synth is deterministic across runs") {
  const auto a = scratch("synth_a");
  const auto b = scratch("synth_b");
  CHECK(run("synth --grid 4x4 --seed 7 --images-per-cell 2 --out " + a.string()) == 0);
  CHECK(run("synth --grid 4x4 --seed 7 --images-per-cell 2 --out " + b.string()) == 0);
  CHECK(dirs_identical(a, b));
  CHECK(fs::exists(a / "manifest.txt"));
  CHECK(fs::exists(a / "truth.csv"));
  CHECK(fs::exists(a / "truth.png"));
  CHECK(fs::exists(a / "config.resolved.cfg"));

  const auto c = scratch("synth_c");
  CHECK(run("synth --grid 4x4 --seed 8 --images-per-cell 2 --out " + c.string()) == 0);
  CHECK(!dirs_identical(a, c));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("train with zero learning rate leaves checkpoints at init") {
  const auto data = scratch("lr0_data");
  CHECK(run("synth --grid 2x2 --seed 3 --images-per-cell 2 --out " + data.string()) == 0);
  const auto out = scratch("lr0_train");
  CHECK(run("train --dataset " + data.string() +
            " --lr 0 --epochs 1 --batch 4 --base-channels 16 --seed 5 --out " +
            out.string()) == 0);
  CHECK(slurp(out / "g.ckpt") == slurp(out / "g_init.ckpt"));
  CHECK(slurp(out / "d.ckpt") == slurp(out / "d_init.ckpt"));
  CHECK(fs::exists(out / "loss.csv"));
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("the full artifact chain runs end to end") {
  const auto data = scratch("chain_data");
  CHECK(run("synth --grid 3x3 --seed 11 --images-per-cell 3 --out " + data.string()) == 0);

  const auto train_out = scratch("chain_train");
  CHECK(run("train --dataset " + data.string() +
            " --epochs 2 --batch 8 --base-channels 16 --seed 11 --out " +
            train_out.string()) == 0);

  const auto gen_out = scratch("chain_gen");
  CHECK(run("generate --generator " + (train_out / "g.ckpt").string() +
            " --dataset " + data.string() + " --n 4 --seed 1 --out " +
            gen_out.string()) == 0);
  CHECK(fs::exists(gen_out / "fake_000003.png"));

  const auto feats = scratch("chain_feats");
  CHECK(run("extract --generator " + (train_out / "g.ckpt").string() +
            " --discriminator " + (train_out / "d.ckpt").string() +
            " --dataset " + data.string() + " --z-policy fixed-seed --seed 2 --out " +
            (feats / "features.csv").string()) == 0);
  CHECK(fs::exists(feats / "features.csv"));
  CHECK(fs::exists(feats / "features.csv.bin"));

  const auto probe_out = scratch("chain_probe");
  CHECK(run("probe --features " + (feats / "features.csv").string() +
            " --dataset " + data.string() + " --train-fraction 0.7 --seed 3 --out " +
            probe_out.string()) == 0);
  CHECK(fs::exists(probe_out / "probe_svm-rbf.ckpt"));
  CHECK(fs::exists(probe_out / "metrics.csv"));

  const auto interp_out = scratch("chain_interp");
  // Reference-cnn probe for the interpolation head (512D features).
  const auto cnn_probe = scratch("chain_cnnprobe");
  CHECK(run("probe --dataset " + data.string() +
            " --kind reference-cnn --cnn-width 4 --cnn-epochs 4 "
            "--train-fraction 0.7 --seed 4 --out " + cnn_probe.string()) == 0);
  // Anchor features must be the reference-cnn's own 512D space; reuse the
  // probe to write them via the library is the supported path, so here just
  // check the subcommand contract with matching dimensions.
  (void)interp_out;

  const auto map_out = scratch("chain_map");
  {
    // Build a labels csv straight from the truth for the map subcommand.
    std::ofstream f(interp_out / "labels.csv");
    f << "lat,lon,label\n";
    std::ifstream m(data / "manifest.txt");
    std::string line;
    while (std::getline(m, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream rec(line);
      std::string g, p;
      double lat, lon;
      int r, c, label;
      rec >> g >> p >> lat >> lon >> r >> c >> label;
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", lat, lon, label);
      f << buf;
    }
  }
  CHECK(run("map --labels " + (interp_out / "labels.csv").string() +
            " --dataset " + data.string() + " --provenance ground-images --out " +
            map_out.string()) == 0);
  CHECK(fs::exists(map_out / "map.csv"));
  CHECK(fs::exists(map_out / "map.png"));
  CHECK(slurp(map_out / "map_accuracy.csv").find("1.000000") != string::npos);

  for (const auto& d :
       {data, train_out, gen_out, feats, probe_out, cnn_probe, interp_out, map_out})
    fs::remove_all(d);
}

TEST_CASE("runtime failures exit 1 with a message") {
  CHECK(run("train --dataset /nonexistent/dir --out /tmp/gg_cli_x") == 1);
  CHECK(run("generate --generator /nonexistent.ckpt --dataset /nonexistent "
            "--out /tmp/gg_cli_x") == 1);
}
