#pragma once

#include <cmath>
#include <vector>

#include "dr2/image.hpp"
#include "dr2/rng.hpp"

namespace dr2 {

// Procedurally generated face-like images: soft background, head ellipse,
// two eyes and a mouth with randomized geometry and colors. Keeps the
// repository self-contained; any image directory can be substituted.
namespace detail {

struct Ellipse {
  double cx, cy, rx, ry;
  double color[3];

  double coverage(double x, double y) const {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0 ? 1.0 : 0.0;
  }
};

}  // namespace detail

inline ImageTensor synth_face(int size, Rng& rng) {
  const double s = static_cast<double>(size);

  double bg[3], skin[3], eye[3], mouth[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = rng.uniform(-0.9, 0.1);
    skin[c] = rng.uniform(0.0, 0.8);
    eye[c] = rng.uniform(-1.0, -0.4);
    mouth[c] = rng.uniform(-0.8, 0.2);
  }

  const double head_cx = s * rng.uniform(0.42, 0.58);
  const double head_cy = s * rng.uniform(0.42, 0.58);
  const double head_rx = s * rng.uniform(0.26, 0.38);
  const double head_ry = s * rng.uniform(0.30, 0.42);

  const double eye_dx = head_rx * rng.uniform(0.35, 0.55);
  const double eye_dy = -head_ry * rng.uniform(0.15, 0.35);
  const double eye_r = s * rng.uniform(0.03, 0.06);

  const double mouth_dy = head_ry * rng.uniform(0.35, 0.55);
  const double mouth_rx = head_rx * rng.uniform(0.35, 0.6);
  const double mouth_ry = s * rng.uniform(0.02, 0.05);

  std::vector<detail::Ellipse> shapes = {
      {head_cx, head_cy, head_rx, head_ry,
       {skin[0], skin[1], skin[2]}},
      {head_cx - eye_dx, head_cy + eye_dy, eye_r, eye_r,
       {eye[0], eye[1], eye[2]}},
      {head_cx + eye_dx, head_cy + eye_dy, eye_r, eye_r,
       {eye[0], eye[1], eye[2]}},
      {head_cx, head_cy + mouth_dy, mouth_rx, mouth_ry,
       {mouth[0], mouth[1], mouth[2]}},
  };

  // Gentle vertical background gradient; shapes painted back-to-front and
  // antialiased by 2x2 supersampling.
  const double grad = rng.uniform(-0.2, 0.2);
  ImageTensor img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double px[3] = {0.0, 0.0, 0.0};
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double fx = x + 0.25 + 0.5 * sx;
          const double fy = y + 0.25 + 0.5 * sy;
          double sample[3];
          for (int c = 0; c < 3; ++c)
            sample[c] = bg[c] + grad * (fy / s - 0.5);
          for (const auto& e : shapes)
            if (e.coverage(fx, fy) > 0.0)
              for (int c = 0; c < 3; ++c) sample[c] = e.color[c];
          for (int c = 0; c < 3; ++c) px[c] += 0.25 * sample[c];
        }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = px[c];
    }
  img.clamp();
  return img;
}

inline std::vector<ImageTensor> synth_face_dataset(int count, int size,
                                                   std::uint64_t seed) {
  std::vector<ImageTensor> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng(splitmix64(seed) + static_cast<std::uint64_t>(i));
    out.push_back(synth_face(size, rng));
  }
  return out;
}

}  // namespace dr2
