#pragma once

#include <cmath>

#include "dr2/image.hpp"
#include "dr2/rng.hpp"
#include "dr2/schedule.hpp"

namespace dr2 {

// q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline ImageTensor diffuse(const ImageTensor& x0, int t,
                           const ImageTensor& noise,
                           const NoiseSchedule& schedule) {
  schedule.check_t(t);
  require_same_shape(x0, noise, "diffuse");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  ImageTensor out = x0;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a * x0.data[i] + b * noise.data[i];
  return out;
}

// Single forward transition q(x_t | x_{t-1}).
inline ImageTensor forward_step(const ImageTensor& x_prev, int t,
                                const ImageTensor& noise,
                                const NoiseSchedule& schedule) {
  schedule.check_t(t);
  require_same_shape(x_prev, noise, "forward_step");
  const double beta = schedule.beta(t);
  const double a = std::sqrt(1.0 - beta);
  const double b = std::sqrt(beta);
  ImageTensor out = x_prev;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a * x_prev.data[i] + b * noise.data[i];
  return out;
}

// Posterior mean parameterized by predicted noise:
// mu = (x_t - (1-alpha_t)/sqrt(1-abar_t) * eps) / sqrt(alpha_t).
inline ImageTensor eps_mean(const ImageTensor& x_t, const ImageTensor& eps_pred,
                            int t, const NoiseSchedule& schedule) {
  schedule.check_t(t);
  require_same_shape(x_t, eps_pred, "eps_mean");
  const double alpha = schedule.alpha(t);
  const double ab = schedule.alpha_bar(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double coef =
      (ab < 1.0) ? (1.0 - alpha) / std::sqrt(1.0 - ab) : 0.0;
  ImageTensor out = x_t;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = inv_sqrt_alpha * (x_t.data[i] - coef * eps_pred.data[i]);
  return out;
}

// Reverse transition x_{t-1} = eps_mean + sigma_t * noise. The caller owns
// the randomness; by convention noise is the zero image at t = 1.
inline ImageTensor reverse_step(const ImageTensor& x_t,
                                const ImageTensor& eps_pred, int t,
                                const ImageTensor& noise,
                                const NoiseSchedule& schedule) {
  schedule.check_t(t);
  require_same_shape(x_t, noise, "reverse_step");
  ImageTensor out = eps_mean(x_t, eps_pred, t, schedule);
  const double s = schedule.sigma(t);
  if (s != 0.0)
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] += s * noise.data[i];
  return out;
}

// One-shot x0 estimate from predicted noise (inverse of the analytic
// marginal): (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t).
inline ImageTensor predict_x0(const ImageTensor& x_t,
                              const ImageTensor& eps_pred, int t,
                              const NoiseSchedule& schedule,
                              bool clamp = true) {
  schedule.check_t(t);
  require_same_shape(x_t, eps_pred, "predict_x0");
  const double ab = schedule.alpha_bar(t);
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
  const double coef = std::sqrt(1.0 - ab);
  ImageTensor out = x_t;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = inv_sqrt_ab * (x_t.data[i] - coef * eps_pred.data[i]);
  if (clamp) out.clamp();
  return out;
}

inline ImageTensor sample_noise(int h, int w, int c, Rng& rng) {
  ImageTensor n(h, w, c);
  for (double& v : n.data) v = rng.normal();
  return n;
}

inline ImageTensor sample_noise_like(const ImageTensor& ref, Rng& rng) {
  return sample_noise(ref.height, ref.width, ref.channels, rng);
}

}  // namespace dr2
