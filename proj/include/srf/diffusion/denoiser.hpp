#pragma once

#include <map>
#include <span>
#include <vector>

#include "srf/diffusion/latent.hpp"

namespace srf::diffusion {

using TokenId = int;

/// Attention logits per token, one H×W plane each (pre-softmax).
using AttentionStack = std::map<TokenId, RealGrid>;

struct DenoiserOutput {
  Latent eps;
  AttentionStack attention;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual DenoiserOutput denoise(const Latent& z, int t, std::span<const TokenId> tokens) = 0;

  /// Σ_k (∂A_k/∂z)ᵀ g_k at `z`: the gradient of Σ_k <g_k, A_k(z)> with respect to z.
  virtual Latent attention_vjp(const Latent& z, int t, const AttentionStack& grad) = 0;
};

inline void validate_output(const DenoiserOutput& out, const Latent& z, std::span<const TokenId> tokens) {
  require_same_shape(out.eps, z, "denoiser eps");
  for (TokenId k : tokens) {
    auto it = out.attention.find(k);
    if (it == out.attention.end())
      throw Error(ErrorCode::ShapeMismatch, "denoiser returned no attention for token " + std::to_string(k));
    if (it->second.rows() != z.height || it->second.cols() != z.width)
      throw Error(ErrorCode::ShapeMismatch, "attention plane for token " + std::to_string(k) + " has the wrong size");
  }
}

}  // namespace srf::diffusion
