#pragma once

#include <functional>
#include <map>
#include <vector>

#include "srf/diffusion/denoiser.hpp"
#include "srf/layout/mask.hpp"

namespace srf::engine {

using diffusion::AttentionStack;
using diffusion::Latent;
using diffusion::TokenId;

struct StimulusConfig {
  double delta = 0.8;
  double alpha = 40.0;
  int stimulus_steps = 25;
  int inner_iters = 1;
  /// Optional step-size schedule over the ascending step count; overrides `alpha`.
  std::function<double(int step)> alpha_schedule;

  double alpha_at(int step) const { return alpha_schedule ? alpha_schedule(step) : alpha; }

  void validate(int total_steps) const {
    if (!(delta > 0.0 && delta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1]");
    if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be nonnegative");
    if (stimulus_steps < 0 || stimulus_steps > total_steps)
      throw Error(ErrorCode::InvalidArgument, "stimulus_steps must lie in [0, T]");
    if (inner_iters < 1) throw Error(ErrorCode::InvalidArgument, "inner_iters must be at least 1");
  }
};

/// Target distribution per stimulated token, already scaled by δ.
using TargetMaps = std::map<TokenId, RealGrid>;

inline TargetMaps mask_targets(const std::map<TokenId, BinaryGrid>& masks, double delta) {
  TargetMaps out;
  for (const auto& [k, m] : masks) {
    RealGrid g(m.rows(), m.cols(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) g[i] = m[i] ? delta : 0.0;
    out[k] = std::move(g);
  }
  return out;
}

/// δ times the softmax-normalized reference attention.
inline RealGrid reference_target(const RealGrid& reference_logits, double delta) {
  RealGrid g = softmax(reference_logits);
  for (auto& v : g.values()) v *= delta;
  return g;
}

inline RealGrid uniform_target(std::size_t rows, std::size_t cols, double delta) {
  return RealGrid(rows, cols, delta / static_cast<double>(rows * cols));
}

struct LossResult {
  double loss = 0.0;
  AttentionStack grad;  // dL/d logits
};

/// L = Σ_k Σ_cells (softmax(A_k) − target_k)², with the exact gradient
/// through the softmax: dL/dA_j = p_j (g_j − Σ_i p_i g_i), g = 2(p − target).
inline LossResult stimulus_loss(const AttentionStack& attention, const TargetMaps& targets) {
  LossResult r;
  for (const auto& [k, target] : targets) {
    auto it = attention.find(k);
    if (it == attention.end()) throw Error(ErrorCode::ShapeMismatch, "no attention for stimulated token " + std::to_string(k));
    const RealGrid& a = it->second;
    if (!a.same_shape(target)) throw Error(ErrorCode::ShapeMismatch, "mask and attention grids differ in size");
    const auto p = softmax(a.values());
    std::vector<double> g(p.size());
    double pg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - target[i];
      r.loss += d * d;
      g[i] = 2.0 * d;
      pg += p[i] * g[i];
    }
    RealGrid ga(a.rows(), a.cols(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) ga[i] = p[i] * (g[i] - pg);
    r.grad[k] = std::move(ga);
  }
  return r;
}

inline LossResult stimulus_loss(const AttentionStack& attention, const std::map<TokenId, BinaryGrid>& masks,
                                double delta) {
  return stimulus_loss(attention, mask_targets(masks, delta));
}

inline std::vector<TokenId> keys(const TargetMaps& targets) {
  std::vector<TokenId> out;
  for (const auto& [k, _] : targets) out.push_back(k);
  return out;
}

/// ∇_z L through the denoiser's attention at timestep t.
inline std::pair<double, Latent> stimulus_gradient(const Latent& z, diffusion::Denoiser& denoiser, int t,
                                                   const TargetMaps& targets) {
  const auto tokens = keys(targets);
  const auto out = denoiser.denoise(z, t, tokens);
  diffusion::validate_output(out, z, tokens);
  auto lr = stimulus_loss(out.attention, targets);
  return {lr.loss, denoiser.attention_vjp(z, t, lr.grad)};
}

struct Response {
  Latent z;
  double loss_before = 0.0;
};

/// z* = z − α ∇_z L, repeated `iters` times.
inline Response latent_response(const Latent& z, diffusion::Denoiser& denoiser, const TargetMaps& targets,
                                double alpha, int t, int iters = 1) {
  Response r{z, 0.0};
  if (alpha == 0.0 || targets.empty()) return r;
  for (int it = 0; it < iters; ++it) {
    auto [loss, grad] = stimulus_gradient(r.z, denoiser, t, targets);
    if (it == 0) r.loss_before = loss;
    if (!std::isfinite(loss) || !grad.finite())
      throw Error(ErrorCode::NonFiniteGradient, "stimulus gradient is not finite at timestep " + std::to_string(t));
    for (std::size_t i = 0; i < r.z.size(); ++i) r.z.data[i] -= alpha * grad.data[i];
    if (!r.z.finite())
      throw Error(ErrorCode::NonFiniteGradient, "latent response left the finite range at timestep " + std::to_string(t));
  }
  return r;
}

}  // namespace srf::engine
