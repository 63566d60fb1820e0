#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dr2 {

// H x W x C image with interleaved channels, values in [-1, 1] by convention.
// Element order: ((y * width) + x) * channels + c.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0)
      throw std::invalid_argument("ImageTensor: dimensions must be positive");
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  static ImageTensor zeros(int h, int w, int c) { return ImageTensor(h, w, c); }
  static ImageTensor constant(int h, int w, int c, double v) {
    return ImageTensor(h, w, c, v);
  }

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t size() const { return data.size(); }

  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void clamp(double lo = -1.0, double hi = 1.0) {
    for (double& v : data) v = std::min(hi, std::max(lo, v));
  }
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                               const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

inline ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "operator+");
  ImageTensor r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
  return r;
}

inline ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "operator-");
  ImageTensor r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
  return r;
}

inline ImageTensor operator*(double s, const ImageTensor& a) {
  ImageTensor r = a;
  for (double& v : r.data) v *= s;
  return r;
}

// Mean absolute difference, the workhorse comparison in tests.
inline double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mean_abs_diff");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    s += std::fabs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

inline double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

// 8-bit storage mapping: 0 <-> -1.0 and 255 <-> +1.0, linear in between.
inline std::uint8_t value_to_u8(double v) {
  const double s = std::round((v + 1.0) * 0.5 * 255.0);
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, s)));
}

inline double u8_to_value(std::uint8_t u) {
  return static_cast<double>(u) / 255.0 * 2.0 - 1.0;
}

inline std::vector<std::uint8_t> to_u8(const ImageTensor& img) {
  std::vector<std::uint8_t> out(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out[i] = value_to_u8(img.data[i]);
  return out;
}

inline ImageTensor from_u8(const std::vector<std::uint8_t>& bytes, int h, int w,
                           int c) {
  if (bytes.size() != static_cast<std::size_t>(h) * w * c)
    throw std::invalid_argument("from_u8: byte count does not match shape");
  ImageTensor img(h, w, c);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.data[i] = u8_to_value(bytes[i]);
  return img;
}

// Continuous 8-bit scale used by the degradation model and the metrics
// (0..255, no quantization).
inline double to_8bit_scale(double v) { return (v + 1.0) * 127.5; }
inline double from_8bit_scale(double s) { return s / 127.5 - 1.0; }

// Separable Gaussian blur with kernel size 2*ceil(3*sigma)+1 and
// edge-replicate boundaries. sigma == 0 is the identity.
inline ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: sigma < 0");
  if (sigma == 0.0) return img;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int h = img.height, w = img.width, c = img.channels;
  ImageTensor tmp(h, w, c), out(h, w, c);
  // Horizontal pass.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = std::min(w - 1, std::max(0, x + k));
          acc += kernel[k + radius] * img.at(y, xx, ch);
        }
        tmp.at(y, x, ch) = acc;
      }
  // Vertical pass.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = std::min(h - 1, std::max(0, y + k));
          acc += kernel[k + radius] * tmp.at(yy, x, ch);
        }
        out.at(y, x, ch) = acc;
      }
  return out;
}

}  // namespace dr2
