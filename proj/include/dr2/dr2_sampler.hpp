#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dr2/denoiser.hpp"
#include "dr2/diffusion.hpp"
#include "dr2/keyvalue.hpp"
#include "dr2/lowpass.hpp"

namespace dr2 {

enum class GuidanceNoiseMode { independent, shared_trajectory };

inline std::string to_string(GuidanceNoiseMode m) {
  return m == GuidanceNoiseMode::independent ? "independent"
                                             : "shared_trajectory";
}

inline GuidanceNoiseMode guidance_mode_from_string(const std::string& s) {
  if (s == "independent") return GuidanceNoiseMode::independent;
  if (s == "shared_trajectory") return GuidanceNoiseMode::shared_trajectory;
  throw std::invalid_argument("unknown guidance noise mode: " + s);
}

// Controlling parameters for one DR2 run. omega < 0 selects the default
// omega = tau + round(0.25 * T).
struct DR2Config {
  int N = 4;
  int tau = 0;
  int omega = -1;
  bool refinement_enabled = true;
  bool blend_at_tau = true;
  GuidanceNoiseMode guidance_noise_mode = GuidanceNoiseMode::independent;
  Resampler resampler = Resampler::bicubic_antialias;
  int stride = 1;  // reverse-step stride; 1 = full ancestral chain
  std::uint64_t seed = 0;

  int effective_omega(const NoiseSchedule& s) const {
    return omega >= 0 ? omega
                      : tau + static_cast<int>(std::lround(0.25 * s.T));
  }

  void validate(const NoiseSchedule& s) const {
    const int w = effective_omega(s);
    if (N < 1) throw std::invalid_argument("DR2Config: N must be >= 1");
    if (stride < 1) throw std::invalid_argument("DR2Config: stride must be >= 1");
    if (tau < 0 || tau >= w || w > s.T)
      throw std::invalid_argument(
          "DR2Config: need 0 <= tau < omega <= T (tau=" + std::to_string(tau) +
          ", omega=" + std::to_string(w) + ", T=" + std::to_string(s.T) + ")");
  }
};

inline void dr2_config_to_kv(const DR2Config& cfg, const NoiseSchedule& s,
                             KeyValueDoc& doc,
                             const std::string& section = "dr2") {
  doc.set(section, "N", cfg.N);
  doc.set(section, "tau", cfg.tau);
  doc.set(section, "omega", cfg.effective_omega(s));
  doc.set(section, "refinement_enabled", cfg.refinement_enabled ? "true" : "false");
  doc.set(section, "blend_at_tau", cfg.blend_at_tau ? "true" : "false");
  doc.set(section, "guidance_noise_mode", to_string(cfg.guidance_noise_mode));
  doc.set(section, "resampler", to_string(cfg.resampler));
  doc.set(section, "stride", cfg.stride);
  doc.set(section, "seed", cfg.seed);
}

inline DR2Config dr2_config_from_kv(const KeyValueDoc& doc,
                                    const std::string& section = "dr2") {
  DR2Config cfg;
  cfg.N = doc.get_int(section, "N");
  cfg.tau = doc.get_int(section, "tau");
  cfg.omega = doc.get_int(section, "omega");
  cfg.refinement_enabled = doc.get_or(section, "refinement_enabled", "true") == "true";
  cfg.blend_at_tau = doc.get_or(section, "blend_at_tau", "true") == "true";
  cfg.guidance_noise_mode = guidance_mode_from_string(
      doc.get_or(section, "guidance_noise_mode", "independent"));
  cfg.resampler =
      resampler_from_string(doc.get_or(section, "resampler", "bicubic_antialias"));
  cfg.stride = std::stoi(doc.get_or(section, "stride", "1"));
  cfg.seed = std::stoull(doc.get_or(section, "seed", "0"));
  return cfg;
}

// Initial condition: diffuse the degraded input to step omega and adopt the
// result as x_omega.
inline ImageTensor initial_condition(const ImageTensor& y, int omega,
                                     const NoiseSchedule& schedule, Rng& rng) {
  schedule.check_t(omega);
  const ImageTensor eps = sample_noise_like(y, rng);
  return diffuse(y, omega, eps, schedule);
}

// Diffused guidance states y_t for t in [t_lo, t_hi]. independent mode draws
// fresh noise per timestep; shared_trajectory reuses a single draw for all t.
// t = 0 yields y itself.
inline std::vector<ImageTensor> guidance_sequence(const ImageTensor& y,
                                                  int t_lo, int t_hi,
                                                  const NoiseSchedule& schedule,
                                                  GuidanceNoiseMode mode,
                                                  Rng& rng) {
  if (t_lo > t_hi)
    throw std::invalid_argument("guidance_sequence: empty timestep range");
  if (t_lo < 0 || t_hi > schedule.T)
    throw std::out_of_range("guidance_sequence: range outside 0..T");
  ImageTensor shared;
  if (mode == GuidanceNoiseMode::shared_trajectory)
    shared = sample_noise_like(y, rng);
  std::vector<ImageTensor> out;
  out.reserve(t_hi - t_lo + 1);
  for (int t = t_lo; t <= t_hi; ++t) {
    if (t == 0) {
      out.push_back(y);
      continue;
    }
    if (mode == GuidanceNoiseMode::independent) {
      const ImageTensor eps = sample_noise_like(y, rng);
      out.push_back(diffuse(y, t, eps, schedule));
    } else {
      out.push_back(diffuse(y, t, shared, schedule));
    }
  }
  return out;
}

namespace detail {

struct ChainState {
  ImageTensor x;
  Rng rng_reverse;
  Rng rng_guidance;
  ImageTensor shared_guidance_noise;  // shared_trajectory mode only
};

// Guidance state y_t for one chain at one timestep (t may be 0).
inline ImageTensor guidance_at(const ImageTensor& y, int t,
                               const NoiseSchedule& schedule,
                               const DR2Config& cfg, ChainState& chain) {
  if (t == 0) return y;
  if (cfg.guidance_noise_mode == GuidanceNoiseMode::shared_trajectory)
    return diffuse(y, t, chain.shared_guidance_noise, schedule);
  const ImageTensor eps = sample_noise_like(y, chain.rng_guidance);
  return diffuse(y, t, eps, schedule);
}

}  // namespace detail

// DR2 degradation removal on a batch of same-shaped inputs, run in lockstep
// so the denoiser sees whole batches. Image i uses seed cfg.seed + i; results
// are bit-identical to running each image alone with that seed.
inline std::vector<ImageTensor> dr2_remove_batch(
    const std::vector<ImageTensor>& ys, const Denoiser& denoiser,
    const NoiseSchedule& schedule, const DR2Config& cfg) {
  cfg.validate(schedule);
  if (ys.empty()) return {};
  for (const auto& y : ys) {
    if (y.height != denoiser.image_size() || y.width != denoiser.image_size())
      throw std::invalid_argument(
          "dr2_remove: input shape does not match denoiser size");
    require_same_shape(y, ys.front(), "dr2_remove_batch");
  }

  const int omega = cfg.effective_omega(schedule);
  const int tau = cfg.tau;
  const FilterSpec filter{cfg.N, cfg.resampler};

  // Stream split: 0 = initial condition, 1 = reverse noise, 2 = guidance.
  std::vector<detail::ChainState> chains;
  chains.reserve(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    Rng base(cfg.seed + static_cast<std::uint64_t>(i));
    detail::ChainState c{ImageTensor{}, base.fork(1), base.fork(2),
                         ImageTensor{}};
    Rng init = base.fork(0);
    c.x = initial_condition(ys[i], omega, schedule, init);
    if (cfg.guidance_noise_mode == GuidanceNoiseMode::shared_trajectory)
      c.shared_guidance_noise = sample_noise_like(ys[i], c.rng_guidance);
    chains.push_back(std::move(c));
  }

  int t = omega;
  while (t > tau) {
    const int t_next = std::max(tau, t - cfg.stride);

    std::vector<ImageTensor> xs;
    xs.reserve(chains.size());
    for (auto& c : chains) xs.push_back(c.x);
    const std::vector<ImageTensor> eps = denoiser.eps_batch(xs, t);

    for (std::size_t i = 0; i < chains.size(); ++i) {
      auto& c = chains[i];
      if (cfg.stride == 1 || t_next == t - 1) {
        ImageTensor noise = (t > 1) ? sample_noise_like(c.x, c.rng_reverse)
                                    : ImageTensor(c.x.height, c.x.width,
                                                  c.x.channels, 0.0);
        c.x = reverse_step(c.x, eps[i], t, noise, schedule);
      } else {
        // Strided jump: deterministic x0-projection onto step t_next.
        const ImageTensor x0 = predict_x0(c.x, eps[i], t, schedule, false);
        if (t_next == 0) {
          c.x = x0;
        } else {
          const double ab = schedule.alpha_bar(t_next);
          const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
          for (std::size_t k = 0; k < c.x.data.size(); ++k)
            c.x.data[k] = a * x0.data[k] + b * eps[i].data[k];
        }
      }
      const bool blend_here =
          cfg.refinement_enabled &&
          (t_next > tau || (t_next == tau && cfg.blend_at_tau));
      if (blend_here) {
        const ImageTensor y_t =
            detail::guidance_at(ys[i], t_next, schedule, cfg, c);
        c.x = blend(y_t, c.x, filter);
      }
    }
    t = t_next;
  }

  std::vector<ImageTensor> out;
  out.reserve(chains.size());
  if (tau > 0) {
    std::vector<ImageTensor> xs;
    xs.reserve(chains.size());
    for (auto& c : chains) xs.push_back(c.x);
    const std::vector<ImageTensor> eps = denoiser.eps_batch(xs, tau);
    for (std::size_t i = 0; i < chains.size(); ++i) {
      ImageTensor x0 = predict_x0(chains[i].x, eps[i], tau, schedule, false);
      x0.clamp();
      out.push_back(std::move(x0));
    }
  } else {
    for (auto& c : chains) {
      c.x.clamp();
      out.push_back(std::move(c.x));
    }
  }
  return out;
}

// Three-step DR2: initial condition at omega, guided denoising with iterative
// low-frequency refinement down to tau, truncated x0 output (or the completed
// chain when tau = 0).
inline ImageTensor dr2_remove(const ImageTensor& y, const Denoiser& denoiser,
                              const NoiseSchedule& schedule,
                              const DR2Config& cfg) {
  std::vector<ImageTensor> ys = {y};
  return dr2_remove_batch(ys, denoiser, schedule, cfg)[0];
}

// Per-pixel mean and standard deviation of diffuse(y,t) - diffuse(y_ref,t)
// over paired independent draws. t = 0 compares the images directly.
inline std::pair<ImageTensor, ImageTensor> error_statistics(
    const ImageTensor& y, const ImageTensor& y_ref, int t, int n_samples,
    const NoiseSchedule& schedule, Rng& rng) {
  require_same_shape(y, y_ref, "error_statistics");
  if (n_samples < 2)
    throw std::invalid_argument("error_statistics: n_samples must be >= 2");
  if (t != 0) schedule.check_t(t);

  ImageTensor sum(y.height, y.width, y.channels, 0.0);
  ImageTensor sum_sq(y.height, y.width, y.channels, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    ImageTensor diff(y.height, y.width, y.channels, 0.0);
    if (t == 0) {
      diff = y - y_ref;
    } else {
      const ImageTensor e1 = sample_noise_like(y, rng);
      const ImageTensor e2 = sample_noise_like(y, rng);
      diff = diffuse(y, t, e1, schedule) - diffuse(y_ref, t, e2, schedule);
    }
    for (std::size_t i = 0; i < diff.data.size(); ++i) {
      sum.data[i] += diff.data[i];
      sum_sq.data[i] += diff.data[i] * diff.data[i];
    }
  }
  ImageTensor mean = sum, stddev = sum_sq;
  for (std::size_t i = 0; i < mean.data.size(); ++i) {
    mean.data[i] /= n_samples;
    const double var =
        std::max(0.0, sum_sq.data[i] / n_samples - mean.data[i] * mean.data[i]);
    stddev.data[i] = std::sqrt(var);
  }
  return {std::move(mean), std::move(stddev)};
}

}  // namespace dr2
