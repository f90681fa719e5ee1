#pragma once

#include "srf/diffusion/latent.hpp"
#include "srf/layout/mask.hpp"

namespace srf::engine {

struct FusionConfig {
  int tau = 40;
  double attn_quantile = 0.75;

  void validate(int total_steps) const {
    if (tau < 0 || tau > total_steps) throw Error(ErrorCode::InvalidArgument, "tau must lie in [0, T]");
    if (!(attn_quantile > 0.0 && attn_quantile < 1.0))
      throw Error(ErrorCode::InvalidArgument, "attn_quantile must lie in (0, 1)");
  }
};

/// Box mask for the first τ completed reverse steps, attention mask after.
inline const layout::LayoutMask& mask_schedule(int step, int tau, const layout::LayoutMask& box_mask,
                                               const layout::LayoutMask& attn_mask) {
  if (!box_mask.grid.same_shape(attn_mask.grid)) throw Error(ErrorCode::ShapeMismatch, "schedule masks differ in size");
  return step <= tau ? box_mask : attn_mask;
}

/// z = M̂·z* + (1−M̂)·z_bg with the mask broadcast over channels.
inline diffusion::Latent fuse_latents(const diffusion::Latent& z_star, const diffusion::Latent& z_bg,
                                      const BinaryGrid& mask) {
  diffusion::require_same_shape(z_star, z_bg, "fuse_latents");
  if (mask.rows() != z_star.height || mask.cols() != z_star.width)
    throw Error(ErrorCode::ShapeMismatch, "fusion mask does not match the latent plane");
  diffusion::Latent out = z_bg;
  const std::size_t plane = z_star.plane();
  for (std::size_t c = 0; c < z_star.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      if (mask[i]) out.data[c * plane + i] = z_star.data[c * plane + i];
  return out;
}

/// Average of the softmaxed maps, thresholded at `quantile`.
inline layout::AttentionMaskResult attention_mask(const std::vector<RealGrid>& logits, double quantile) {
  if (logits.empty()) throw Error(ErrorCode::EmptyInput, "no attention maps to average");
  RealGrid avg(logits.front().rows(), logits.front().cols(), 0.0);
  for (const auto& a : logits) {
    if (!a.same_shape(avg)) throw Error(ErrorCode::ShapeMismatch, "attention maps differ in size");
    const auto p = softmax(a.values());
    for (std::size_t i = 0; i < p.size(); ++i) avg[i] += p[i] / static_cast<double>(logits.size());
  }
  return layout::attention_to_mask(avg, quantile);
}

}  // namespace srf::engine
