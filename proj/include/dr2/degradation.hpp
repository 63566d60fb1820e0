#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dr2/image.hpp"
#include "dr2/io.hpp"
#include "dr2/lowpass.hpp"
#include "dr2/rng.hpp"

namespace dr2 {

enum class NoiseFamily { gaussian, laplace, poisson, none };

inline std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::laplace: return "laplace";
    case NoiseFamily::poisson: return "poisson";
    case NoiseFamily::none: return "none";
  }
  return "none";
}

inline NoiseFamily noise_family_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::gaussian;
  if (s == "laplace") return NoiseFamily::laplace;
  if (s == "poisson") return NoiseFamily::poisson;
  if (s == "none") return NoiseFamily::none;
  throw std::invalid_argument("unknown noise family: " + s);
}

inline constexpr int kJpegLossless = 0;  // q value meaning "skip compression"

// One synthetic degradation draw: blur sigma, downsampling factor r, additive
// noise (family, delta on the 0..255 scale) and JPEG quality q.
struct DegradationSpec {
  double sigma = 0.0;
  int r = 1;
  NoiseFamily family = NoiseFamily::none;
  double delta = 0.0;
  int q = kJpegLossless;  // 1..100, or kJpegLossless to skip
  std::uint64_t seed = 0;
  bool resize_back = false;

  void validate() const {
    if (sigma < 0.0) throw std::invalid_argument("DegradationSpec: sigma < 0");
    if (r < 1) throw std::invalid_argument("DegradationSpec: r must be >= 1");
    if (delta < 0.0) throw std::invalid_argument("DegradationSpec: delta < 0");
    if (q != kJpegLossless && (q < 1 || q > 100))
      throw std::invalid_argument("DegradationSpec: invalid JPEG quality");
  }
};

enum class SplitLevel { mild, medium, severe };

inline std::string to_string(SplitLevel l) {
  switch (l) {
    case SplitLevel::mild: return "mild";
    case SplitLevel::medium: return "medium";
    case SplitLevel::severe: return "severe";
  }
  return "mild";
}

inline SplitLevel split_level_from_string(const std::string& s) {
  if (s == "mild") return SplitLevel::mild;
  if (s == "medium") return SplitLevel::medium;
  if (s == "severe") return SplitLevel::severe;
  throw std::invalid_argument("unknown split level: " + s);
}

// Test-split parameter ranges; the (sigma, delta, q) ranges are fixed per
// level, r comes from the upsampling task.
struct SplitSpec {
  SplitLevel level = SplitLevel::mild;
  int r = 4;
  double sigma_lo = 3.0, sigma_hi = 5.0;
  double delta_lo = 5.0, delta_hi = 20.0;
  int q_lo = 60, q_hi = 80;
};

inline SplitSpec make_split_spec(SplitLevel level, int r) {
  SplitSpec s;
  s.level = level;
  s.r = r;
  switch (level) {
    case SplitLevel::mild:
      s.sigma_lo = 3.0; s.sigma_hi = 5.0;
      s.delta_lo = 5.0; s.delta_hi = 20.0;
      s.q_lo = 60; s.q_hi = 80;
      break;
    case SplitLevel::medium:
      s.sigma_lo = 5.0; s.sigma_hi = 7.0;
      s.delta_lo = 15.0; s.delta_hi = 40.0;
      s.q_lo = 40; s.q_hi = 60;
      break;
    case SplitLevel::severe:
      s.sigma_lo = 7.0; s.sigma_hi = 9.0;
      s.delta_lo = 25.0; s.delta_hi = 50.0;
      s.q_lo = 30; s.q_hi = 40;
      break;
  }
  return s;
}

// Uniform draw of a degradation from the split ranges; the noise family is
// chosen uniformly from {gaussian, laplace, poisson}.
inline DegradationSpec sample_split_spec(const SplitSpec& split, Rng& rng) {
  DegradationSpec spec;
  spec.sigma = rng.uniform(split.sigma_lo, split.sigma_hi);
  spec.r = split.r;
  const int fam = static_cast<int>(rng.uniform_int(0, 2));
  spec.family = fam == 0   ? NoiseFamily::gaussian
              : fam == 1 ? NoiseFamily::laplace
                         : NoiseFamily::poisson;
  spec.delta = rng.uniform(split.delta_lo, split.delta_hi);
  spec.q = static_cast<int>(rng.uniform_int(split.q_lo, split.q_hi));
  return spec;
}

namespace detail {

inline void add_noise_8bit(std::vector<double>& plane, NoiseFamily family,
                           double delta, Rng& rng) {
  switch (family) {
    case NoiseFamily::none:
      return;
    case NoiseFamily::gaussian:
      for (double& v : plane) v += delta * rng.normal();
      break;
    case NoiseFamily::laplace:
      // scale delta / sqrt(2) gives standard deviation delta
      for (double& v : plane) v += rng.laplace(delta / std::sqrt(2.0));
      break;
    case NoiseFamily::poisson: {
      if (delta <= 0.0) return;
      const double lambda = 255.0 / delta;
      for (double& v : plane) {
        const double mean = std::max(0.0, v) * lambda;
        v = rng.poisson(mean) / lambda;
      }
      break;
    }
  }
  for (double& v : plane) v = std::min(255.0, std::max(0.0, v));
}

}  // namespace detail

struct DegradedImage {
  ImageTensor image;
  // Exact encoded bytes when JPEG compression ran; saving these reproduces
  // the returned tensor bit-for-bit on decode.
  std::optional<std::vector<unsigned char>> jpeg_bytes;
};

// Eq.-order degradation: blur -> bicubic downsample by r -> additive noise on
// the 8-bit scale -> JPEG round-trip. Stages are skipped when disabled, so
// the all-identity spec is exact.
inline DegradedImage degrade_full(const ImageTensor& x,
                                  const DegradationSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  ImageTensor img = x;

  if (spec.sigma > 0.0) {
    img = gaussian_blur(img, spec.sigma);
    img.clamp();
  }
  if (spec.r > 1) {
    if (img.height < spec.r || img.width < spec.r)
      throw std::invalid_argument("degrade: image smaller than factor r");
    img = resize_bicubic(img, (img.height + spec.r - 1) / spec.r,
                         (img.width + spec.r - 1) / spec.r);
    img.clamp();
  }
  if (spec.family != NoiseFamily::none && spec.delta > 0.0) {
    std::vector<double> plane(img.data.size());
    for (std::size_t i = 0; i < plane.size(); ++i)
      plane[i] = to_8bit_scale(img.data[i]);
    detail::add_noise_8bit(plane, spec.family, spec.delta, rng);
    for (std::size_t i = 0; i < plane.size(); ++i)
      img.data[i] = from_8bit_scale(plane[i]);
  }

  DegradedImage out;
  if (spec.q != kJpegLossless) {
    out.jpeg_bytes = encode_jpeg(img, spec.q);
    img = decode_jpeg(*out.jpeg_bytes);
  }
  if (spec.resize_back &&
      (img.height != x.height || img.width != x.width)) {
    img = resize_bicubic(img, x.height, x.width);
    img.clamp();
    out.jpeg_bytes.reset();  // bytes no longer match the returned tensor
  }
  out.image = std::move(img);
  return out;
}

inline ImageTensor degrade(const ImageTensor& x, const DegradationSpec& spec) {
  return degrade_full(x, spec).image;
}

// ---------------------------------------------------------------------------
// Test-set construction

struct TestsetEntry {
  std::string filename;
  DegradationSpec spec;
};

struct TestsetManifest {
  std::vector<TestsetEntry> entries;

  void save(const std::string& path) const {
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : entries) {
      std::ostringstream sig, del;
      sig.precision(17);
      del.precision(17);
      sig << e.spec.sigma;
      del << e.spec.delta;
      rows.push_back({e.filename, sig.str(), std::to_string(e.spec.r),
                      to_string(e.spec.family), del.str(),
                      std::to_string(e.spec.q), std::to_string(e.spec.seed)});
    }
    write_csv(path, {"filename", "sigma", "r", "family", "delta", "q", "seed"},
              rows);
  }

  static TestsetManifest load(const std::string& path) {
    TestsetManifest m;
    const auto rows = read_csv(path);
    for (std::size_t i = 1; i < rows.size(); ++i) {  // skip header
      const auto& r = rows[i];
      if (r.size() < 7) throw std::runtime_error("malformed manifest row");
      TestsetEntry e;
      e.filename = r[0];
      e.spec.sigma = std::stod(r[1]);
      e.spec.r = std::stoi(r[2]);
      e.spec.family = noise_family_from_string(r[3]);
      e.spec.delta = std::stod(r[4]);
      e.spec.q = std::stoi(r[5]);
      e.spec.seed = std::stoull(r[6]);
      m.entries.push_back(std::move(e));
    }
    return m;
  }
};

// Builds a degraded split from a clean-image directory: writes degraded
// JPEGs (exact encoder bytes), bicubic-only low-resolution references as PNG
// and a manifest of the sampled specs. Per-image seed = base seed + index.
inline TestsetManifest build_testset(const std::string& clean_dir,
                                     const SplitSpec& split, int count,
                                     const std::string& out_dir,
                                     std::uint64_t seed,
                                     bool resize_back = false) {
  const auto files = list_images(clean_dir);
  if (files.empty())
    throw std::runtime_error("build_testset: no images in " + clean_dir);
  if (count < 1)
    throw std::invalid_argument("build_testset: count must be >= 1");
  if (static_cast<int>(files.size()) < count)
    throw std::runtime_error("build_testset: requested " +
                             std::to_string(count) + " images but " +
                             clean_dir + " holds only " +
                             std::to_string(files.size()));

  fs::create_directories(out_dir);
  fs::create_directories(fs::path(out_dir) / "degraded");
  fs::create_directories(fs::path(out_dir) / "lr_reference");

  Rng sampler(seed);
  TestsetManifest manifest;
  for (int i = 0; i < count; ++i) {
    const ImageTensor clean = read_image(files[i].string());
    DegradationSpec spec = sample_split_spec(split, sampler);
    spec.seed = seed + static_cast<std::uint64_t>(i);
    spec.resize_back = resize_back;

    const std::string stem = files[i].stem().string();
    const DegradedImage degraded = degrade_full(clean, spec);
    std::string degraded_name;
    if (degraded.jpeg_bytes) {
      degraded_name = stem + ".jpg";
      write_bytes((fs::path(out_dir) / "degraded" / degraded_name).string(),
                  *degraded.jpeg_bytes);
    } else {
      degraded_name = stem + ".png";
      write_png((fs::path(out_dir) / "degraded" / degraded_name).string(),
                degraded.image);
    }

    // Ground-truth low-resolution pair: bicubic-only downsample.
    ImageTensor ref = clean;
    if (spec.r > 1) {
      ref = resize_bicubic(ref, (ref.height + spec.r - 1) / spec.r,
                           (ref.width + spec.r - 1) / spec.r);
      if (resize_back) ref = resize_bicubic(ref, clean.height, clean.width);
      ref.clamp();
    }
    write_png((fs::path(out_dir) / "lr_reference" / (stem + ".png")).string(),
              ref);

    manifest.entries.push_back({degraded_name, spec});
  }
  manifest.save((fs::path(out_dir) / "manifest.csv").string());
  return manifest;
}

}  // namespace dr2
