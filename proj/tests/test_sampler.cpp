#include <catch2/catch_amalgamated.hpp>

#include "dr2/dr2_sampler.hpp"
#include "dr2/faces.hpp"

using namespace dr2;

namespace {

ImageTensor random_image(int h, int w, int c, Rng& rng) {
  ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
  return img;
}

}  // namespace

TEST_CASE("config validation", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  DR2Config cfg;
  cfg.tau = 300;
  CHECK(cfg.effective_omega(s) == 550);  // tau + 0.25T
  CHECK_NOTHROW(cfg.validate(s));

  DR2Config same;
  same.tau = 100;
  same.omega = 100;  // zero denoising steps
  CHECK_THROWS_AS(same.validate(s), std::invalid_argument);

  DR2Config neg;
  neg.tau = -1;
  CHECK_THROWS_AS(neg.validate(s), std::invalid_argument);

  DR2Config big;
  big.tau = 100;
  big.omega = 1001;
  CHECK_THROWS_AS(big.validate(s), std::invalid_argument);

  DR2Config bad_n;
  bad_n.tau = 100;
  bad_n.N = 0;
  CHECK_THROWS_AS(bad_n.validate(s), std::invalid_argument);
}

TEST_CASE("config key/value round trip", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  DR2Config cfg;
  cfg.N = 8;
  cfg.tau = 250;
  cfg.refinement_enabled = false;
  cfg.blend_at_tau = false;
  cfg.guidance_noise_mode = GuidanceNoiseMode::shared_trajectory;
  cfg.resampler = Resampler::box;
  cfg.seed = 77;
  KeyValueDoc doc;
  dr2_config_to_kv(cfg, s, doc);
  const DR2Config back = dr2_config_from_kv(doc);
  CHECK(back.N == 8);
  CHECK(back.tau == 250);
  CHECK(back.omega == cfg.effective_omega(s));
  CHECK(back.refinement_enabled == false);
  CHECK(back.blend_at_tau == false);
  CHECK(back.guidance_noise_mode == GuidanceNoiseMode::shared_trajectory);
  CHECK(back.resampler == Resampler::box);
  CHECK(back.seed == 77);
}

TEST_CASE("initial condition at a nearly clean timestep", "[sampler]") {
  const auto s = make_linear_schedule(3, 1e-300, 1e-300);
  Rng rng(1);
  const ImageTensor y = random_image(8, 8, 3, rng);
  Rng noise_rng(2);
  const ImageTensor x = initial_condition(y, 1, s, noise_rng);
  CHECK(max_abs_diff(x, y) < 1e-10);
}

TEST_CASE("initial condition is seed deterministic", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  Rng rng(3);
  const ImageTensor y = random_image(8, 8, 3, rng);
  Rng r1(9), r2(9);
  const ImageTensor a = initial_condition(y, 700, s, r1);
  const ImageTensor b = initial_condition(y, 700, s, r2);
  CHECK(max_abs_diff(a, b) == 0.0);
  CHECK_THROWS_AS(initial_condition(y, 0, s, r1), std::out_of_range);
}

TEST_CASE("initial condition at T is near standard normal",
          "[sampler][montecarlo]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  Rng rng(4);
  const ImageTensor y = random_image(64, 64, 3, rng);  // 12288 pixels
  Rng noise_rng(5);
  const ImageTensor x = initial_condition(y, 1000, s, noise_rng);
  double sum = 0.0, sum_sq = 0.0;
  for (double v : x.data) {
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(x.data.size());
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::fabs(mean) < 5.0 / std::sqrt(n));
  CHECK(std::fabs(var - 1.0) < 5.0 * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("guidance sequence determinism and modes", "[sampler]") {
  const auto s = make_linear_schedule(100, 1e-3, 0.05);
  Rng rng(6);
  const ImageTensor y = random_image(8, 8, 3, rng);

  Rng r1(10), r2(10);
  const auto seq1 =
      guidance_sequence(y, 5, 20, s, GuidanceNoiseMode::independent, r1);
  const auto seq2 =
      guidance_sequence(y, 5, 20, s, GuidanceNoiseMode::independent, r2);
  REQUIRE(seq1.size() == 16);
  for (std::size_t i = 0; i < seq1.size(); ++i)
    CHECK(max_abs_diff(seq1[i], seq2[i]) == 0.0);

  // shared trajectory: the implied unit noise is the same at every t
  Rng r3(11);
  const auto shared =
      guidance_sequence(y, 1, 30, s, GuidanceNoiseMode::shared_trajectory, r3);
  ImageTensor ref_eps(8, 8, 3);
  for (std::size_t i = 0; i < ref_eps.data.size(); ++i) {
    const double ab = s.alpha_bar(1);
    ref_eps.data[i] = (shared[0].data[i] - std::sqrt(ab) * y.data[i]) /
                      std::sqrt(1.0 - ab);
  }
  for (int idx : {10, 29}) {
    const int t = 1 + idx;
    const double ab = s.alpha_bar(t);
    for (std::size_t i = 0; i < ref_eps.data.size(); ++i) {
      const double eps =
          (shared[idx].data[i] - std::sqrt(ab) * y.data[i]) /
          std::sqrt(1.0 - ab);
      CHECK(eps == Catch::Approx(ref_eps.data[i]).margin(1e-9));
    }
  }

  // t = 0 entry is y itself
  Rng r4(12);
  const auto with_zero =
      guidance_sequence(y, 0, 3, s, GuidanceNoiseMode::independent, r4);
  CHECK(max_abs_diff(with_zero[0], y) == 0.0);

  CHECK_THROWS_AS(
      guidance_sequence(y, 5, 4, s, GuidanceNoiseMode::independent, r4),
      std::invalid_argument);
}

TEST_CASE("guidance marginals match the analytic variance",
          "[sampler][montecarlo]") {
  const auto s = make_linear_schedule(100, 1e-3, 0.08);
  Rng rng(7);
  const ImageTensor y = random_image(2, 2, 1, rng);
  const int t = 60, n = 10000;
  Rng noise_rng(8);
  ImageTensor sum = ImageTensor::zeros(2, 2, 1);
  ImageTensor sum_sq = ImageTensor::zeros(2, 2, 1);
  for (int k = 0; k < n; ++k) {
    const auto seq =
        guidance_sequence(y, t, t, s, GuidanceNoiseMode::independent,
                          noise_rng);
    for (std::size_t i = 0; i < seq[0].data.size(); ++i) {
      sum.data[i] += seq[0].data[i];
      sum_sq.data[i] += seq[0].data[i] * seq[0].data[i];
    }
  }
  const double coef = std::sqrt(s.alpha_bar(t));
  const double var = 1.0 - s.alpha_bar(t);
  for (std::size_t i = 0; i < sum.data.size(); ++i) {
    const double mean = sum.data[i] / n;
    const double v = sum_sq.data[i] / n - mean * mean;
    CHECK(std::fabs(mean - coef * y.data[i]) < 5.0 * std::sqrt(var / n));
    CHECK(std::fabs(v - var) < 5.0 * var * std::sqrt(2.0 / (n - 1)));
  }
}

TEST_CASE("oracle fixed point", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  Rng rng(9);
  const ImageTensor y = synth_face(32, rng);
  const OracleDenoiser oracle(y, s);

  for (int n : {1, 2}) {
    for (bool blend_tau : {true, false}) {
      DR2Config cfg;
      cfg.N = n;
      cfg.tau = 100;
      cfg.seed = 5;
      cfg.blend_at_tau = blend_tau;
      const ImageTensor out = dr2_remove(y, oracle, s, cfg);
      CHECK(mean_abs_diff(out, y) < 1e-3);
    }
  }
}

TEST_CASE("tau=0 runs the chain to completion", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  Rng rng(10);
  const ImageTensor y = synth_face(32, rng);
  const OracleDenoiser oracle(y, s);
  DR2Config cfg;
  cfg.N = 2;
  cfg.tau = 0;
  cfg.omega = 50;
  cfg.seed = 6;
  const ImageTensor out = dr2_remove(y, oracle, s, cfg);
  CHECK(out.all_finite());
  CHECK(mean_abs_diff(out, y) < 1e-3);
}

TEST_CASE("dr2_remove is bit-reproducible and batch-consistent", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  Rng rng(11);
  std::vector<ImageTensor> ys;
  for (int i = 0; i < 3; ++i) ys.push_back(synth_face(32, rng));
  const OracleDenoiser oracle(ys[0], s);

  DR2Config cfg;
  cfg.N = 4;
  cfg.tau = 200;
  cfg.omega = 280;
  cfg.seed = 42;

  const auto batch = dr2_remove_batch(ys, oracle, s, cfg);
  REQUIRE(batch.size() == 3);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    DR2Config cfg_i = cfg;
    cfg_i.seed = cfg.seed + i;
    const ImageTensor solo = dr2_remove(ys[i], oracle, s, cfg_i);
    CHECK(max_abs_diff(solo, batch[i]) == 0.0);
  }
  const auto batch2 = dr2_remove_batch(ys, oracle, s, cfg);
  for (std::size_t i = 0; i < ys.size(); ++i)
    CHECK(max_abs_diff(batch[i], batch2[i]) == 0.0);
}

TEST_CASE("dr2_remove rejects mismatched input size", "[sampler]") {
  const auto s = make_linear_schedule(100, 1e-3, 0.05);
  Rng rng(12);
  const ImageTensor y32 = synth_face(32, rng);
  const OracleDenoiser oracle(y32, s);
  const ImageTensor y16 = synth_face(16, rng);
  DR2Config cfg;
  cfg.tau = 10;
  cfg.omega = 40;
  CHECK_THROWS_AS(dr2_remove(y16, oracle, s, cfg), std::invalid_argument);
}

TEST_CASE("strided sampling stays close to the full chain", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  Rng rng(13);
  const ImageTensor y = synth_face(32, rng);
  const OracleDenoiser oracle(y, s);
  DR2Config cfg;
  cfg.N = 4;
  cfg.tau = 100;
  cfg.seed = 3;
  cfg.stride = 10;
  const ImageTensor out = dr2_remove(y, oracle, s, cfg);
  CHECK(out.all_finite());
  CHECK(mean_abs_diff(out, y) < 1e-3);  // oracle is exact for any stride
}

TEST_CASE("error statistics", "[sampler]") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  Rng rng(14);
  ImageTensor y(4, 4, 1);
  for (double& v : y.data) v = rng.uniform(-1.0, 1.0);

  // t = 0: mean = y - y_ref exactly, std = 0
  ImageTensor y_ref = y;
  y_ref.data[3] += 0.25;
  Rng r0(1);
  const auto [mean0, std0] = error_statistics(y, y_ref, 0, 16, s, r0);
  CHECK(max_abs_diff(mean0, y - y_ref) < 1e-12);
  for (double v : std0.data) CHECK(v == 0.0);

  // identical inputs with independent noise: mean ~ 0, std ~ sqrt(2(1-abar))
  const int t = 500, n = 4000;
  Rng r1(2);
  const auto [mean, stddev] = error_statistics(y, y, t, n, s, r1);
  const double var = 2.0 * (1.0 - s.alpha_bar(t));
  const double expect_std = std::sqrt(var);
  for (std::size_t i = 0; i < mean.data.size(); ++i) {
    CHECK(std::fabs(mean.data[i]) < 5.0 * expect_std / std::sqrt(n));
    CHECK(stddev.data[i] ==
          Catch::Approx(expect_std).epsilon(5.0 * std::sqrt(2.0 / n)));
  }

  CHECK_THROWS_AS(error_statistics(y, y, 10, 1, s, r1),
                  std::invalid_argument);

  // Diffusing makes the systematic error a small fraction of the total
  // variation: |mean| / (|mean| + std) drops from 1 at t = 0.
  ImageTensor y_off = y;
  for (double& v : y_off.data) v += 0.1;
  const auto [m0, s0] = error_statistics(y, y_off, 0, 16, s, r0);
  const auto [m500, s500] = error_statistics(y, y_off, 500, 4096, s, r1);
  const auto ratio = [](const ImageTensor& m, const ImageTensor& sd) {
    double ma = 0.0, sa = 0.0;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      ma += std::fabs(m.data[i]);
      sa += sd.data[i];
    }
    return ma / (ma + sa);
  };
  CHECK(ratio(m0, s0) == Catch::Approx(1.0).margin(1e-6));
  CHECK(ratio(m500, s500) < 0.1);
  // and the absolute mean error shrinks by roughly sqrt(abar_500)
  double abs0 = 0.0, abs500 = 0.0;
  for (std::size_t i = 0; i < m0.data.size(); ++i) {
    abs0 += std::fabs(m0.data[i]);
    abs500 += std::fabs(m500.data[i]);
  }
  CHECK(abs500 < abs0);
}
