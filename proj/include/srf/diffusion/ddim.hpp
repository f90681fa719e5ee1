#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "srf/diffusion/denoiser.hpp"
#include "srf/diffusion/schedule.hpp"

namespace srf::diffusion {

/// Deterministic (η = 0) update z_t → z_{t-1}.
inline Latent ddim_reverse_step(const Latent& z_t, const Latent& eps, int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps()) throw Error(ErrorCode::InvalidArgument, "timestep out of range");
  require_same_shape(z_t, eps, "ddim_reverse_step");
  const double st = s.signal(t), nt = s.noise(t), sp = s.signal(t - 1), np = s.noise(t - 1);
  Latent out = z_t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = (z_t.data[i] - nt * eps.data[i]) / st;
    out.data[i] = sp * x0 + np * eps.data[i];
  }
  return out;
}

struct InversionOptions {
  int max_iterations = 30;
  double tolerance = 1e-14;
};

struct Inversion {
  std::vector<Latent> trajectory;      // z_0 … z_T
  std::vector<AttentionStack> attention;  // index t: attention at z_t; index 0 unused
};

/// Inverse of `ddim_reverse_step`, one step at a time: z_t solves
/// reverse(z_t, eps(z_t), t) = z_{t-1} by fixed-point iteration on eps.
inline Inversion ddim_inversion(const Latent& z0, Denoiser& denoiser, const NoiseSchedule& s,
                                std::span<const TokenId> tokens, const InversionOptions& opt = {}) {
  if (!z0.finite()) throw Error(ErrorCode::InvalidArgument, "inversion input is not finite");
  Inversion inv;
  inv.trajectory.reserve(s.steps() + 1);
  inv.trajectory.push_back(z0);
  inv.attention.resize(s.steps() + 1);
  for (int t = 1; t <= s.steps(); ++t) {
    const Latent& prev = inv.trajectory.back();
    const double a = s.signal(t - 1) / s.signal(t);
    const double b = s.noise(t - 1) - a * s.noise(t);
    Latent z = prev;
    DenoiserOutput out = denoiser.denoise(z, t, tokens);
    validate_output(out, z, tokens);
    for (int it = 0; it < opt.max_iterations; ++it) {
      double change = 0.0, scale = 1.0;
      Latent next = z;
      for (std::size_t i = 0; i < z.size(); ++i) {
        next.data[i] = (prev.data[i] - b * out.eps.data[i]) / a;
        change = std::max(change, std::abs(next.data[i] - z.data[i]));
        scale = std::max(scale, std::abs(next.data[i]));
      }
      z = std::move(next);
      out = denoiser.denoise(z, t, tokens);
      validate_output(out, z, tokens);
      if (change <= opt.tolerance * scale) break;
    }
    inv.attention[t] = std::move(out.attention);
    inv.trajectory.push_back(std::move(z));
  }
  return inv;
}

}  // namespace srf::diffusion
