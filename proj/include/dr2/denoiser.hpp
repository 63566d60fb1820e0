#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "dr2/diffusion.hpp"
#include "dr2/image.hpp"
#include "dr2/schedule.hpp"

namespace dr2 {

// eps_theta(x_t, t) evaluation contract. Implementations must be
// deterministic given (x_t, t) and safe for concurrent read-only use;
// all stochasticity lives in the sampler.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual ImageTensor eps(const ImageTensor& x_t, int t) const = 0;

  // Lockstep batch evaluation; implementations may override with something
  // faster than the per-image loop.
  virtual std::vector<ImageTensor> eps_batch(const std::vector<ImageTensor>& xs,
                                             int t) const {
    std::vector<ImageTensor> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(eps(x, t));
    return out;
  }

  virtual int image_size() const = 0;

  // Schedule the model was built against.
  virtual const NoiseSchedule& trained_schedule() const = 0;
};

// Test oracle: for a fixed x0 it inverts the analytic marginal exactly,
// returning the noise eps* = (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t).
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(ImageTensor x0, NoiseSchedule schedule)
      : x0_(std::move(x0)), schedule_(std::move(schedule)) {}

  ImageTensor eps(const ImageTensor& x_t, int t) const override {
    schedule_.check_t(t);
    require_same_shape(x_t, x0_, "OracleDenoiser::eps");
    const double ab = schedule_.alpha_bar(t);
    const double a = std::sqrt(ab);
    const double inv_b = 1.0 / std::sqrt(1.0 - ab);
    ImageTensor out = x_t;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = (x_t.data[i] - a * x0_.data[i]) * inv_b;
    return out;
  }

  int image_size() const override { return x0_.height; }
  const NoiseSchedule& trained_schedule() const override { return schedule_; }

 private:
  ImageTensor x0_;
  NoiseSchedule schedule_;
};

inline std::unique_ptr<Denoiser> oracle_denoiser(const ImageTensor& x0,
                                                 const NoiseSchedule& schedule) {
  return std::make_unique<OracleDenoiser>(x0, schedule);
}

}  // namespace dr2
