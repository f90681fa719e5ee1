#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "srf/diffusion/denoiser.hpp"

namespace srf::diffusion {

/// Analytic stand-in for a diffusion U-Net: eps = λ·z, and the attention
/// logit of token k at a cell is W_k · z[:, cell] for a seeded projection W_k.
///
/// `prompt_bias` optionally adds a latent-independent pull toward the
/// requested tokens' (normalized) projections, eps -= γ Σ_k Ŵ_k at every cell.
/// It keeps eps affine in z, so inversion and gradients stay exact.
struct ReferenceDenoiserParams {
  std::uint64_t seed = 0;
  double lambda = 0.1;
  double attention_scale = 0.5;
  double prompt_bias = 0.0;
};

class ReferenceDenoiser final : public Denoiser {
 public:
  using Params = ReferenceDenoiserParams;

  explicit ReferenceDenoiser(Params p = {}) : p_(p) {}

  const Params& params() const noexcept { return p_; }

  /// W_k, drawn from (seed, k) alone.
  std::vector<double> projection(TokenId k, std::size_t channels) const {
    std::seed_seq seq{static_cast<std::uint32_t>(p_.seed), static_cast<std::uint32_t>(p_.seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> n(0.0, p_.attention_scale);
    std::vector<double> w(channels);
    for (auto& v : w) v = n(rng);
    return w;
  }

  DenoiserOutput denoise(const Latent& z, int, std::span<const TokenId> tokens) override {
    DenoiserOutput out;
    out.eps = z;
    for (auto& v : out.eps.data) v *= p_.lambda;
    if (p_.prompt_bias != 0.0) {
      std::vector<double> pull(z.channels, 0.0);
      for (TokenId k : tokens) {
        auto w = projection(k, z.channels);
        double norm = 0.0;
        for (double v : w) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0)
          for (std::size_t c = 0; c < z.channels; ++c) pull[c] += w[c] / norm;
      }
      for (std::size_t c = 0; c < z.channels; ++c)
        for (std::size_t i = 0; i < z.plane(); ++i) out.eps.data[c * z.plane() + i] -= p_.prompt_bias * pull[c];
    }
    for (TokenId k : tokens) out.attention[k] = logits(z, projection(k, z.channels));
    return out;
  }

  Latent attention_vjp(const Latent& z, int, const AttentionStack& grad) override {
    Latent g(z.channels, z.height, z.width);
    for (const auto& [k, ga] : grad) {
      if (ga.rows() != z.height || ga.cols() != z.width)
        throw Error(ErrorCode::ShapeMismatch, "attention gradient has the wrong size");
      const auto w = projection(k, z.channels);
      for (std::size_t c = 0; c < z.channels; ++c)
        for (std::size_t i = 0; i < z.plane(); ++i) g.data[c * z.plane() + i] += w[c] * ga[i];
    }
    return g;
  }

  static RealGrid logits(const Latent& z, const std::vector<double>& w) {
    RealGrid a(z.height, z.width, 0.0);
    for (std::size_t c = 0; c < z.channels; ++c)
      for (std::size_t i = 0; i < z.plane(); ++i) a[i] += w[c] * z.data[c * z.plane() + i];
    return a;
  }

 private:
  Params p_;
};

}  // namespace srf::diffusion
