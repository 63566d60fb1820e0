#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dr2/image.hpp"

namespace dr2 {

enum class Resampler { bicubic_antialias, box };

inline std::string to_string(Resampler r) {
  return r == Resampler::box ? "box" : "bicubic_antialias";
}

inline Resampler resampler_from_string(const std::string& s) {
  if (s == "box") return Resampler::box;
  if (s == "bicubic_antialias" || s == "bicubic")
    return Resampler::bicubic_antialias;
  throw std::invalid_argument("unknown resampler: " + s);
}

// Low-pass filter spec: downsample by factor N, upsample back. N = 1 is the
// identity. Boundary handling is edge-replicate throughout.
struct FilterSpec {
  int N = 1;
  Resampler resampler = Resampler::bicubic_antialias;
};

namespace detail {

// Catmull-Rom cubic (a = -0.5), the conventional "bicubic" kernel.
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct TapSet {
  std::vector<int> index;      // flattened: tap j of output i at [i*taps + j]
  std::vector<double> weight;
  int taps = 0;
};

// Precompute per-output-pixel source taps for one axis. When downscaling the
// kernel support is stretched by the scale factor (antialiasing).
inline TapSet cubic_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double support_scale = std::max(1.0, scale);
  const double support = 2.0 * support_scale;

  TapSet taps;
  taps.taps = static_cast<int>(std::ceil(support)) * 2 + 1;
  taps.index.resize(static_cast<std::size_t>(out_size) * taps.taps);
  taps.weight.resize(static_cast<std::size_t>(out_size) * taps.taps);

  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support)) + 1;
    double sum = 0.0;
    for (int j = 0; j < taps.taps; ++j) {
      const int src = lo + j;
      const double w = cubic_kernel((src - center) / support_scale);
      taps.index[i * taps.taps + j] = std::min(in_size - 1, std::max(0, src));
      taps.weight[i * taps.taps + j] = w;
      sum += w;
    }
    for (int j = 0; j < taps.taps; ++j)
      taps.weight[i * taps.taps + j] /= sum;
  }
  return taps;
}

}  // namespace detail

// Separable antialiased-bicubic resize to an arbitrary target size.
inline ImageTensor resize_bicubic(const ImageTensor& img, int out_h,
                                  int out_w) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize_bicubic: target size must be >= 1");
  const int c = img.channels;
  const detail::TapSet tx = detail::cubic_taps(img.width, out_w);
  const detail::TapSet ty = detail::cubic_taps(img.height, out_h);

  ImageTensor tmp(img.height, out_w, c);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int j = 0; j < tx.taps; ++j)
          acc += tx.weight[x * tx.taps + j] *
                 img.at(y, tx.index[x * tx.taps + j], ch);
        tmp.at(y, x, ch) = acc;
      }

  ImageTensor out(out_h, out_w, c);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int j = 0; j < ty.taps; ++j)
          acc += ty.weight[y * ty.taps + j] *
                 tmp.at(ty.index[y * ty.taps + j], x, ch);
        out.at(y, x, ch) = acc;
      }
  return out;
}

// Block-mean downsample by N. Blocks at the bottom/right edges may be ragged
// when N does not divide the extent (ceil partitioning).
inline ImageTensor downsample_box(const ImageTensor& img, int N) {
  const int oh = (img.height + N - 1) / N;
  const int ow = (img.width + N - 1) / N;
  ImageTensor out(oh, ow, img.channels);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const int y1 = std::min(img.height, (y + 1) * N);
      const int x1 = std::min(img.width, (x + 1) * N);
      const int count = (y1 - y * N) * (x1 - x * N);
      for (int ch = 0; ch < img.channels; ++ch) {
        double acc = 0.0;
        for (int yy = y * N; yy < y1; ++yy)
          for (int xx = x * N; xx < x1; ++xx) acc += img.at(yy, xx, ch);
        out.at(y, x, ch) = acc / count;
      }
    }
  return out;
}

inline ImageTensor upsample_replicate(const ImageTensor& img, int N, int out_h,
                                      int out_w) {
  ImageTensor out(out_h, out_w, img.channels);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int sy = std::min(img.height - 1, y / N);
      const int sx = std::min(img.width - 1, x / N);
      for (int ch = 0; ch < img.channels; ++ch)
        out.at(y, x, ch) = img.at(sy, sx, ch);
    }
  return out;
}

// Phi_N: downsample by N then upsample back to the original size.
inline ImageTensor phi(const ImageTensor& img, const FilterSpec& spec) {
  if (spec.N < 1) throw std::invalid_argument("phi: N must be >= 1");
  if (spec.N == 1) return img;
  if (img.height < spec.N || img.width < spec.N)
    throw std::invalid_argument("phi: image smaller than filter factor N");

  if (spec.resampler == Resampler::box) {
    const ImageTensor down = downsample_box(img, spec.N);
    return upsample_replicate(down, spec.N, img.height, img.width);
  }
  const int dh = (img.height + spec.N - 1) / spec.N;
  const int dw = (img.width + spec.N - 1) / spec.N;
  const ImageTensor down = resize_bicubic(img, dh, dw);
  return resize_bicubic(down, img.height, img.width);
}

// Frequency blend: Phi_N(low_src) + high_src - Phi_N(high_src).
// Keeps the low band of low_src and the high band of high_src.
inline ImageTensor blend(const ImageTensor& low_src,
                         const ImageTensor& high_src, const FilterSpec& spec) {
  require_same_shape(low_src, high_src, "blend");
  if (spec.N == 1) return low_src;
  const ImageTensor low = phi(low_src, spec);
  const ImageTensor high_low = phi(high_src, spec);
  ImageTensor out = high_src;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] += low.data[i] - high_low.data[i];
  return out;
}

}  // namespace dr2
