#include <catch2/catch_amalgamated.hpp>

#include "dr2/faces.hpp"
#include "dr2/image.hpp"
#include "dr2/keyvalue.hpp"
#include "dr2/rng.hpp"

using namespace dr2;

TEST_CASE("8-bit mapping endpoints", "[image]") {
  CHECK(u8_to_value(0) == -1.0);
  CHECK(u8_to_value(255) == 1.0);
  CHECK(value_to_u8(-1.0) == 0);
  CHECK(value_to_u8(1.0) == 255);
  CHECK(value_to_u8(-2.0) == 0);   // clamped
  CHECK(value_to_u8(2.0) == 255);  // clamped
  for (int u = 0; u <= 255; ++u)
    CHECK(value_to_u8(u8_to_value(static_cast<std::uint8_t>(u))) == u);
}

TEST_CASE("u8 round trip preserves shape and values", "[image]") {
  Rng rng(1);
  ImageTensor img(5, 7, 3);
  for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
  const auto bytes = to_u8(img);
  const ImageTensor back = from_u8(bytes, 5, 7, 3);
  CHECK(back.same_shape(img));
  CHECK(max_abs_diff(back, img) <= 1.0 / 255.0 + 1e-12);
}

TEST_CASE("tensor constructors validate dimensions", "[image]") {
  CHECK_THROWS_AS(ImageTensor(0, 4, 3), std::invalid_argument);
  CHECK_THROWS_AS(ImageTensor(4, -1, 3), std::invalid_argument);
}

TEST_CASE("gaussian blur identity and constants", "[image]") {
  Rng rng(2);
  ImageTensor img(9, 9, 1);
  for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
  CHECK(max_abs_diff(gaussian_blur(img, 0.0), img) == 0.0);

  const ImageTensor c = ImageTensor::constant(9, 9, 1, 0.37);
  const ImageTensor blurred = gaussian_blur(c, 2.5);
  CHECK(max_abs_diff(blurred, c) < 1e-12);
  CHECK_THROWS_AS(gaussian_blur(img, -1.0), std::invalid_argument);
}

TEST_CASE("separable blur matches direct 2-D convolution", "[image]") {
  // Independent oracle: direct O(n^2 k^2) convolution with the same
  // truncated kernel and replicate boundary.
  const double sigma = 1.2;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;

  Rng rng(3);
  ImageTensor img(11, 13, 2);
  for (double& v : img.data) v = rng.uniform(-1.0, 1.0);

  ImageTensor expect(11, 13, 2);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 13; ++x)
      for (int c = 0; c < 2; ++c) {
        double acc = 0.0;
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int yy = std::min(10, std::max(0, y + dy));
            const int xx = std::min(12, std::max(0, x + dx));
            acc += k[dy + radius] * k[dx + radius] * img.at(yy, xx, c);
          }
        expect.at(y, x, c) = acc;
      }
  CHECK(max_abs_diff(gaussian_blur(img, sigma), expect) < 1e-12);
}

TEST_CASE("synthetic faces are deterministic and in range", "[image]") {
  const auto a = synth_face_dataset(4, 32, 99);
  const auto b = synth_face_dataset(4, 32, 99);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].height == 32);
    CHECK(a[i].all_finite());
    CHECK(max_abs_diff(a[i], b[i]) == 0.0);
    for (double v : a[i].data) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
  // different seeds give different images
  const auto c = synth_face_dataset(1, 32, 100);
  CHECK(mean_abs_diff(a[0], c[0]) > 1e-3);
}

TEST_CASE("key/value document round trip", "[keyvalue]") {
  KeyValueDoc doc;
  doc.set("run", "command", "degrade");
  doc.set("args", "count", 12);
  doc.set("args", "sigma", 3.25);
  doc.set("args", "seed", std::uint64_t{12345678901234567ULL});

  const auto parsed = KeyValueDoc::from_string(doc.to_string());
  CHECK(parsed.get("run", "command") == "degrade");
  CHECK(parsed.get_int("args", "count") == 12);
  CHECK(parsed.get_double("args", "sigma") == 3.25);
  CHECK(parsed.get_u64("args", "seed") == 12345678901234567ULL);
  CHECK(parsed.get_or("args", "missing", "fallback") == "fallback");
  CHECK_THROWS(parsed.get("args", "missing"));
}

TEST_CASE("rng determinism and forked streams", "[rng]") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(7);
  Rng f1 = base.fork(1), f2 = base.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());

  // normal() moments sanity
  Rng n(3);
  double sum = 0.0, sum_sq = 0.0;
  const int count = 20000;
  for (int i = 0; i < count; ++i) {
    const double v = n.normal();
    sum += v;
    sum_sq += v * v;
  }
  CHECK(std::fabs(sum / count) < 0.05);
  CHECK(std::fabs(sum_sq / count - 1.0) < 0.05);
}

TEST_CASE("rng uniform_int covers its range uniformly", "[rng]") {
  Rng rng(5);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 10000; ++i) ++counts[rng.uniform_int(0, 4)];
  for (int c : counts) CHECK(std::fabs(c - 2000.0) < 5.0 * std::sqrt(1600.0));
  CHECK_THROWS_AS(rng.uniform_int(3, 2), std::invalid_argument);
}
