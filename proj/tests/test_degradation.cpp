#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "dr2/degradation.hpp"
#include "dr2/faces.hpp"

using namespace dr2;
namespace fs = std::filesystem;

namespace {

ImageTensor random_image(int h, int w, int c, Rng& rng) {
  ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
  return img;
}

}  // namespace

TEST_CASE("all-disabled degradation is the exact identity", "[degradation]") {
  Rng rng(1);
  const ImageTensor x = random_image(16, 16, 3, rng);
  DegradationSpec spec;  // sigma 0, r 1, none, lossless
  const ImageTensor y = degrade(x, spec);
  CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("degradation is deterministic under the seed", "[degradation]") {
  Rng rng(2);
  const ImageTensor x = synth_face(64, rng);
  DegradationSpec spec;
  spec.sigma = 2.0;
  spec.r = 2;
  spec.family = NoiseFamily::gaussian;
  spec.delta = 20.0;
  spec.q = 55;
  spec.seed = 99;
  const DegradedImage a = degrade_full(x, spec);
  const DegradedImage b = degrade_full(x, spec);
  CHECK(max_abs_diff(a.image, b.image) == 0.0);
  REQUIRE(a.jpeg_bytes.has_value());
  REQUIRE(b.jpeg_bytes.has_value());
  CHECK(*a.jpeg_bytes == *b.jpeg_bytes);
  // decoded tensor matches the bytes on disk contract
  CHECK(max_abs_diff(decode_jpeg(*a.jpeg_bytes), a.image) == 0.0);
}

TEST_CASE("gaussian delta calibration", "[degradation][montecarlo]") {
  const ImageTensor x = ImageTensor::constant(256, 256, 1, 0.0);
  DegradationSpec spec;
  spec.family = NoiseFamily::gaussian;
  spec.delta = 25.0;
  spec.seed = 7;
  const ImageTensor y = degrade(x, spec);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const double d = to_8bit_scale(y.data[i]) - to_8bit_scale(x.data[i]);
    sum += d;
    sum_sq += d * d;
  }
  const double n = static_cast<double>(y.data.size());
  const double std_dev = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
  CHECK(std_dev == Catch::Approx(25.0).epsilon(0.05));
}

TEST_CASE("laplace noise std is approximately delta",
          "[degradation][montecarlo]") {
  const ImageTensor x = ImageTensor::constant(256, 256, 1, 0.0);
  DegradationSpec spec;
  spec.family = NoiseFamily::laplace;
  spec.delta = 18.0;
  spec.seed = 8;
  const ImageTensor y = degrade(x, spec);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const double d = to_8bit_scale(y.data[i]);
    sum += d - 127.5;
    sum_sq += (d - 127.5) * (d - 127.5);
  }
  const double n = static_cast<double>(y.data.size());
  const double std_dev = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
  CHECK(std_dev == Catch::Approx(18.0).epsilon(0.06));
}

TEST_CASE("poisson noise keeps black pixels black", "[degradation]") {
  const ImageTensor black = ImageTensor::constant(8, 8, 1, -1.0);
  DegradationSpec spec;
  spec.family = NoiseFamily::poisson;
  spec.delta = 30.0;
  spec.seed = 9;
  const ImageTensor y = degrade(black, spec);
  CHECK(max_abs_diff(y, black) == 0.0);
}

TEST_CASE("blur-then-downsample stages compose as specified",
          "[degradation]") {
  Rng rng(3);
  const ImageTensor x = synth_face(32, rng);
  DegradationSpec spec;
  spec.sigma = 1.5;
  spec.r = 2;
  const ImageTensor y = degrade(x, spec);
  ImageTensor expect = gaussian_blur(x, 1.5);
  expect.clamp();
  expect = resize_bicubic(expect, 16, 16);
  expect.clamp();
  CHECK(max_abs_diff(y, expect) == 0.0);
  CHECK(y.height == 16);

  DegradationSpec back = spec;
  back.resize_back = true;
  const ImageTensor yb = degrade(x, back);
  CHECK(yb.height == 32);
}

TEST_CASE("degradation validates its parameters", "[degradation]") {
  Rng rng(4);
  const ImageTensor x = random_image(8, 8, 3, rng);
  DegradationSpec bad_q;
  bad_q.q = 101;
  CHECK_THROWS_AS(degrade(x, bad_q), std::invalid_argument);
  DegradationSpec bad_sigma;
  bad_sigma.sigma = -1.0;
  CHECK_THROWS_AS(degrade(x, bad_sigma), std::invalid_argument);
  DegradationSpec bad_r;
  bad_r.r = 0;
  CHECK_THROWS_AS(degrade(x, bad_r), std::invalid_argument);
}

TEST_CASE("split ranges conform to the protocol", "[degradation]") {
  const struct {
    SplitLevel level;
    double s_lo, s_hi, d_lo, d_hi;
    int q_lo, q_hi;
  } expected[] = {
      {SplitLevel::mild, 3, 5, 5, 20, 60, 80},
      {SplitLevel::medium, 5, 7, 15, 40, 40, 60},
      {SplitLevel::severe, 7, 9, 25, 50, 30, 40},
  };
  for (const auto& e : expected) {
    const SplitSpec split = make_split_spec(e.level, 8);
    Rng rng(11);
    int fam_counts[3] = {0, 0, 0};
    const int n = 3000;
    for (int i = 0; i < n; ++i) {
      const DegradationSpec spec = sample_split_spec(split, rng);
      CHECK(spec.sigma >= e.s_lo);
      CHECK(spec.sigma <= e.s_hi);
      CHECK(spec.delta >= e.d_lo);
      CHECK(spec.delta <= e.d_hi);
      CHECK(spec.q >= e.q_lo);
      CHECK(spec.q <= e.q_hi);
      CHECK(spec.r == 8);
      ++fam_counts[static_cast<int>(spec.family)];
    }
    // family frequencies ~ 1/3 within 5 sigma binomial bounds
    const double se = std::sqrt(n / 3.0 * (2.0 / 3.0));
    for (int c : fam_counts)
      CHECK(std::fabs(c - n / 3.0) < 5.0 * se);
  }

  // fixed seed replays the same spec sequence
  const SplitSpec split = make_split_spec(SplitLevel::medium, 4);
  Rng a(5), b(5);
  for (int i = 0; i < 32; ++i) {
    const auto sa = sample_split_spec(split, a);
    const auto sb = sample_split_spec(split, b);
    CHECK(sa.sigma == sb.sigma);
    CHECK(sa.delta == sb.delta);
    CHECK(sa.q == sb.q);
    CHECK(sa.family == sb.family);
  }
}

TEST_CASE("build_testset writes files, manifest and replays bit-identically",
          "[degradation]") {
  const fs::path root = fs::temp_directory_path() / "dr2_testset";
  fs::remove_all(root);
  fs::create_directories(root / "clean");
  const auto faces = synth_face_dataset(12, 32, 21);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "f%03zu.png", i);
    write_png((root / "clean" / name).string(), faces[i]);
  }

  const SplitSpec split = make_split_spec(SplitLevel::severe, 1);
  const auto manifest =
      build_testset((root / "clean").string(), split, 10,
                    (root / "out").string(), 123);
  CHECK(manifest.entries.size() == 10);
  CHECK(list_images((root / "out" / "degraded").string()).size() == 10);
  CHECK(list_images((root / "out" / "lr_reference").string()).size() == 10);
  for (const auto& e : manifest.entries) {
    CHECK(e.spec.q <= 40);
    CHECK(e.spec.q >= 30);
  }

  // manifest reload and replay: identical bytes
  const auto loaded =
      TestsetManifest::load((root / "out" / "manifest.csv").string());
  REQUIRE(loaded.entries.size() == 10);
  for (std::size_t i = 0; i < loaded.entries.size(); ++i) {
    const auto& e = loaded.entries[i];
    const ImageTensor clean = read_image(
        (root / "clean" / (fs::path(e.filename).stem().string() + ".png"))
            .string());
    const DegradedImage again = degrade_full(clean, e.spec);
    REQUIRE(again.jpeg_bytes.has_value());
    const auto disk =
        read_bytes((root / "out" / "degraded" / e.filename).string());
    CHECK(*again.jpeg_bytes == disk);
  }

  CHECK_THROWS(build_testset((root / "missing").string(), split, 4,
                             (root / "out2").string(), 1));
  fs::create_directories(root / "empty");
  CHECK_THROWS(build_testset((root / "empty").string(), split, 4,
                             (root / "out3").string(), 1));
  fs::remove_all(root);
}
