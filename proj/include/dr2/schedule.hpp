#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dr2/keyvalue.hpp"

namespace dr2 {

enum class SigmaMode { beta, posterior };

inline std::string to_string(SigmaMode m) {
  return m == SigmaMode::beta ? "beta" : "posterior";
}

inline SigmaMode sigma_mode_from_string(const std::string& s) {
  if (s == "beta") return SigmaMode::beta;
  if (s == "posterior") return SigmaMode::posterior;
  throw std::invalid_argument("unknown sigma_mode: " + s);
}

// Variance schedule tables. Timesteps are 1-based (t in 1..T); t = 0 denotes
// the clean image and alpha_bar(0) == 1.
struct NoiseSchedule {
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  SigmaMode sigma_mode = SigmaMode::beta;
  std::vector<double> betas;       // betas[t-1] = beta_t
  std::vector<double> alphas;      // 1 - beta_t
  std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

  void check_t(int t) const {
    if (t < 1 || t > T)
      throw std::out_of_range("timestep " + std::to_string(t) +
                              " outside 1.." + std::to_string(T));
  }

  double beta(int t) const {
    check_t(t);
    return betas[t - 1];
  }
  double alpha(int t) const {
    check_t(t);
    return alphas[t - 1];
  }
  double alpha_bar(int t) const {
    if (t == 0) return 1.0;
    check_t(t);
    return alpha_bars[t - 1];
  }

  // Reverse-transition standard deviation sigma_t.
  // beta mode: sigma_t^2 = beta_t; posterior mode: sigma_t^2 = beta_tilde_t.
  double sigma(int t) const {
    check_t(t);
    if (sigma_mode == SigmaMode::beta) return std::sqrt(betas[t - 1]);
    const double tilde =
        (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * betas[t - 1];
    return std::sqrt(tilde);
  }
};

inline NoiseSchedule make_linear_schedule(int T, double beta_start,
                                          double beta_end,
                                          SigmaMode sigma_mode = SigmaMode::beta) {
  if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
    throw std::invalid_argument(
        "make_linear_schedule: need 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.sigma_mode = sigma_mode;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double running = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = (T == 1) ? 0.0 : double(t - 1) / double(T - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    s.betas[t - 1] = beta;
    s.alphas[t - 1] = 1.0 - beta;
    running *= s.alphas[t - 1];
    s.alpha_bars[t - 1] = running;
  }
  return s;
}

// Schedules that were not built by make_linear_schedule (e.g. parsed from an
// external manifest) go through here to rebuild the derived tables.
inline NoiseSchedule schedule_from_kv(const KeyValueDoc& doc,
                                      const std::string& section = "schedule") {
  return make_linear_schedule(
      doc.get_int(section, "T"), doc.get_double(section, "beta_start"),
      doc.get_double(section, "beta_end"),
      sigma_mode_from_string(doc.get_or(section, "sigma_mode", "beta")));
}

inline void schedule_to_kv(const NoiseSchedule& s, KeyValueDoc& doc,
                           const std::string& section = "schedule") {
  doc.set(section, "T", s.T);
  doc.set(section, "beta_start", s.beta_start);
  doc.set(section, "beta_end", s.beta_end);
  doc.set(section, "sigma_mode", to_string(s.sigma_mode));
}

}  // namespace dr2
