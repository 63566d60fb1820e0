#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dr2/harness.hpp"

using namespace dr2;
using namespace dr2::harness;
namespace fs = std::filesystem;

namespace {

struct World {
  fs::path root;
  fs::path clean_dir;
  std::string ckpt;

  World() {
    root = fs::temp_directory_path() / "dr2_harness_test";
    fs::remove_all(root);
    clean_dir = root / "clean";
    fs::create_directories(clean_dir);
    const auto faces = synth_face_dataset(8, 16, 50);
    for (std::size_t i = 0; i < faces.size(); ++i) {
      char name[16];
      std::snprintf(name, sizeof(name), "f%02zu.png", i);
      write_png((clean_dir / name).string(), faces[i]);
    }

    TrainToyDdpmArgs t;
    t.count = 32;
    t.image_size = 16;
    t.widths = "8,8,8";
    t.epochs = 2;
    t.batch = 16;
    t.seed = 1;
    t.out = (root / "toy.ckpt").string();
    t.quiet = true;
    cmd_train_toy_ddpm(t);
    ckpt = t.out;
  }
};

World& world() {
  static World w;
  return w;
}

std::vector<unsigned char> slurp(const fs::path& p) {
  return read_bytes(p.string());
}

bool same_dir_bytes(const fs::path& a, const fs::path& b) {
  const auto fa = list_images(a.string());
  const auto fb = list_images(b.string());
  if (fa.size() != fb.size()) return false;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (fa[i].filename() != fb[i].filename()) return false;
    if (slurp(fa[i]) != slurp(fb[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("peak-count test accepts unimodal or monotone curves",
          "[harness]") {
  CHECK(passes_one_peak_test({1, 2, 3, 4, 5}));           // monotone up
  CHECK(passes_one_peak_test({5, 4, 3, 2, 1}));           // monotone down
  CHECK(passes_one_peak_test({1, 3, 5, 4, 2}));           // single peak
  CHECK(passes_one_peak_test({1.0, 1.02, 0.99, 1.01, 1.0}, 0.05));  // flat
  CHECK_FALSE(passes_one_peak_test({1, 5, 1, 5, 1}));     // two peaks
  CHECK(count_local_maxima({1, 5, 1, 6, 1}, 0.05) == 2);
}

TEST_CASE("set parsing", "[harness]") {
  CHECK(parse_int_set("2,4,8") == std::vector<int>{2, 4, 8});
  CHECK(parse_double_set("1.5,2") == std::vector<double>{1.5, 2.0});
  CHECK_THROWS_AS(parse_int_set(""), std::invalid_argument);
}

TEST_CASE("DR2_SEED environment fallback", "[harness]") {
  setenv("DR2_SEED", "4242", 1);
  CHECK(default_seed() == 4242);
  unsetenv("DR2_SEED");
  CHECK(default_seed() == 0);
}

TEST_CASE("cmd_degrade writes the split and replays deterministically",
          "[harness]") {
  World& w = world();
  DegradeArgs a;
  a.input_dir = w.clean_dir.string();
  a.out_dir = (w.root / "degraded_a").string();
  a.level = "severe";
  a.factor = 1;
  a.count = 6;
  a.seed = 9;
  cmd_degrade(a);

  CHECK(list_images(a.out_dir + "/degraded").size() == 6);
  CHECK(list_images(a.out_dir + "/lr_reference").size() == 6);
  const auto manifest = TestsetManifest::load(a.out_dir + "/manifest.csv");
  REQUIRE(manifest.entries.size() == 6);
  for (const auto& e : manifest.entries) CHECK(e.spec.q <= 40);

  // identical args reproduce identical bytes
  DegradeArgs b = a;
  b.out_dir = (w.root / "degraded_b").string();
  cmd_degrade(b);
  CHECK(same_dir_bytes(a.out_dir + "/degraded", b.out_dir + "/degraded"));

  // the run manifest replays to the same argv
  const auto argv = replay_argv(a.out_dir + "/run_manifest.ini");
  REQUIRE(!argv.empty());
  CHECK(argv[0] == "degrade");
  CHECK(std::find(argv.begin(), argv.end(), "--level=severe") != argv.end());
  CHECK(std::find(argv.begin(), argv.end(), "--seed=9") != argv.end());

  CHECK_THROWS(cmd_degrade([&] {
    DegradeArgs bad = a;
    bad.factor = 3;
    return bad;
  }()));
}

TEST_CASE("cmd_restore: identity enhancer output equals the coarse pass",
          "[harness]") {
  World& w = world();
  RestoreArgs r;
  r.input_dir = w.clean_dir.string();
  r.out_dir = (w.root / "restored_a").string();
  r.denoiser_ckpt = w.ckpt;
  r.N = 2;
  r.tau = 100;
  r.omega = 150;
  r.seed = 3;
  r.save_coarse = true;
  cmd_restore(r);

  CHECK(same_dir_bytes(r.out_dir + "/restored", r.out_dir + "/coarse"));
  CHECK(fs::exists(fs::path(r.out_dir) / "run_manifest.ini"));

  // determinism: a second run reproduces the bytes
  RestoreArgs r2 = r;
  r2.out_dir = (w.root / "restored_b").string();
  cmd_restore(r2);
  CHECK(same_dir_bytes(r.out_dir + "/restored", r2.out_dir + "/restored"));

  // omega default is recorded as tau + round(0.25 T)
  RestoreArgs r3 = r;
  r3.out_dir = (w.root / "restored_c").string();
  r3.omega = -1;
  r3.tau = 100;
  cmd_restore(r3);
  const auto doc = KeyValueDoc::load(r3.out_dir + "/run_manifest.ini");
  CHECK(doc.get_int("args", "omega") == 100 + 250);
}

TEST_CASE("cmd_train_pairs writes the pair set with a manifest", "[harness]") {
  World& w = world();
  TrainPairsArgs p;
  p.count = 4;
  p.denoiser_ckpt = w.ckpt;
  p.out_dir = (w.root / "pairs").string();
  p.tau_set = "50,100";
  p.seed = 2;
  cmd_train_pairs(p);

  CHECK(list_images(p.out_dir + "/input").size() == 4);
  CHECK(list_images(p.out_dir + "/target").size() == 4);
  const auto rows = read_csv(p.out_dir + "/manifest.csv");
  REQUIRE(rows.size() == 5);  // header + 4
  CHECK(rows[0] == std::vector<std::string>{"filename", "tau", "sigma"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const int tau = std::stoi(rows[i][1]);
    CHECK((tau == 50 || tau == 100));
  }

  TrainPairsArgs p2 = p;
  p2.out_dir = (w.root / "pairs_b").string();
  cmd_train_pairs(p2);
  CHECK(same_dir_bytes(p.out_dir + "/input", p2.out_dir + "/input"));
}

TEST_CASE("baseline enhancer trains from a pair directory and restores",
          "[harness]") {
  World& w = world();
  TrainEnhancerArgs e;
  e.pairs_dir = (w.root / "pairs").string();
  e.out = (w.root / "enh.ckpt").string();
  e.channels = 8;
  e.epochs = 2;
  e.batch = 4;
  e.seed = 4;
  e.quiet = true;
  const auto result = cmd_train_enhancer(e);
  CHECK(result.epoch_losses.size() == 2);
  CHECK(fs::exists(e.out));
  CHECK(fs::exists(e.out + ".manifest"));

  RestoreArgs r;
  r.input_dir = w.clean_dir.string();
  r.out_dir = (w.root / "restored_enh").string();
  r.denoiser_ckpt = w.ckpt;
  r.enhancer = "baseline:" + e.out;
  r.N = 2;
  r.tau = 100;
  r.omega = 150;
  r.seed = 3;
  cmd_restore(r);
  CHECK(list_images(r.out_dir + "/restored").size() == 8);
}

TEST_CASE("gridsearch emits the CSV matrix and the contact sheet",
          "[harness]") {
  World& w = world();
  GridSearchArgs g;
  g.input_dir = (w.root / "degraded_a" / "degraded").string();
  g.ref_dir = (w.root / "degraded_a" / "lr_reference").string();
  g.out_dir = (w.root / "grid").string();
  g.denoiser_ckpt = w.ckpt;
  g.n_set = {1, 2};
  g.tau_set = {60, 120};
  g.seed = 5;
  g.limit = 2;
  const auto cells = run_gridsearch(g);
  REQUIRE(cells.size() == 4);
  const auto rows = read_csv(g.out_dir + "/grid.csv");
  REQUIRE(rows.size() == 5);  // header + 4 cells
  CHECK(fs::exists(fs::path(g.out_dir) / "grid_sheet.png"));
  CHECK(fs::exists(fs::path(g.out_dir) / "run_manifest.ini"));
  for (const auto& c : cells) CHECK(c.mean_psnr > 0.0);
}

TEST_CASE("ablate-omega covers both refinement modes", "[harness]") {
  World& w = world();
  AblateOmegaArgs a;
  a.input_dir = w.clean_dir.string();
  a.out_dir = (w.root / "ablate_on").string();
  a.denoiser_ckpt = w.ckpt;
  a.N = 2;
  a.tau = 50;
  a.omega_set = {80, 120};
  a.seed = 6;
  a.limit = 2;
  const auto on_rows = run_ablate_omega(a);
  REQUIRE(on_rows.size() == 2);
  for (const auto& r : on_rows) CHECK(r.tau == 50);

  AblateOmegaArgs b = a;
  b.out_dir = (w.root / "ablate_off").string();
  b.no_refinement = true;
  b.tau_set = {50, 0};
  b.omega_set = {80, 120};
  const auto off_rows = run_ablate_omega(b);
  REQUIRE(off_rows.size() == 4);  // both taus are below both omegas
  CHECK(fs::exists(fs::path(b.out_dir) / "ablate_omega.csv"));
}

TEST_CASE("cmd_evaluate self comparison gives capped PSNR", "[harness]") {
  World& w = world();
  EvaluateArgs ev;
  ev.pred_dir = w.clean_dir.string();
  ev.ref_dir = w.clean_dir.string();
  ev.out_csv = (w.root / "eval" / "report.csv").string();
  const auto report = cmd_evaluate(ev);
  REQUIRE(report.rows.size() == 8);
  for (const auto& row : report.rows) {
    CHECK(row.psnr_db == 100.0);
    CHECK(row.ssim == 1.0);
  }
  CHECK(fs::exists(ev.out_csv));

  EvaluateArgs with_emb = ev;
  with_emb.out_csv.clear();
  with_emb.embedder = "toy";
  const auto report2 = cmd_evaluate(with_emb);
  REQUIRE(report2.mean_deg.has_value());
  CHECK(*report2.mean_deg == Catch::Approx(0.0).margin(1e-4));
}

TEST_CASE("CLI binary: help, errors and replay", "[harness][cli]") {
  World& w = world();
  const std::string cli = DR2_CLI_PATH;
  REQUIRE(fs::exists(cli));

  const std::string devnull = " > /dev/null 2>&1";
  CHECK(std::system((cli + " --help" + devnull).c_str()) == 0);
  CHECK(std::system((cli + " degrade --help" + devnull).c_str()) == 0);

  // missing required flag: nonzero exit, machine-readable stderr line
  const fs::path errfile = w.root / "stderr.txt";
  const int rc = std::system(
      (cli + " degrade --level mild > /dev/null 2> " + errfile.string())
          .c_str());
  CHECK(rc != 0);
  std::ifstream err(errfile);
  std::string line;
  std::getline(err, line);
  CHECK(line.rfind("dr2: error:", 0) == 0);

  // end-to-end degrade via the binary, then replay from the manifest
  const fs::path out1 = w.root / "cli_deg";
  const int rc1 = std::system((cli + " degrade --input-dir " +
                               w.clean_dir.string() + " --out-dir " +
                               out1.string() +
                               " --level mild --factor 1 --count 3 --seed 11" +
                               devnull)
                                  .c_str());
  CHECK(rc1 == 0);
  const fs::path snapshot = w.root / "cli_deg_snapshot";
  fs::create_directories(snapshot);
  fs::copy(out1 / "degraded", snapshot / "degraded",
           fs::copy_options::recursive);

  const int rc2 = std::system(
      (cli + " --replay " + (out1 / "run_manifest.ini").string() + devnull)
          .c_str());
  CHECK(rc2 == 0);
  CHECK(same_dir_bytes(out1 / "degraded", snapshot / "degraded"));
}
