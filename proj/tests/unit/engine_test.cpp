#include <gtest/gtest.h>

#include <cstring>

#include "srf/diffusion/reference_denoiser.hpp"
#include "srf/engine/fusion.hpp"
#include "srf/engine/stimulus.hpp"

using namespace srf;
using namespace srf::engine;
using diffusion::ReferenceDenoiser;

namespace {

RealGrid random_grid(std::size_t h, std::size_t w, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  RealGrid g(h, w);
  for (double& v : g.values()) v = n(rng);
  return g;
}

bool bitwise_equal(const Latent& a, const Latent& b) {
  return a.same_shape(b) && std::memcmp(a.data.data(), b.data.data(), 8 * a.size()) == 0;
}

}  // namespace

TEST(StimulusLoss, UniformLogitsAllOnesMask) {
  const AttentionStack a{{0, RealGrid(2, 2, 0.0)}};
  const std::map<TokenId, BinaryGrid> m{{0, BinaryGrid(2, 2, 1)}};
  EXPECT_NEAR(stimulus_loss(a, m, 0.8).loss, 1.21, 1e-15);
}

TEST(StimulusLoss, ZeroAtMinimizer) {
  // δ·ΣM = 1: four cells with δ = 0.25 make uniform softmax exact.
  const AttentionStack a{{1, RealGrid(2, 2, 3.0)}};
  const auto r = stimulus_loss(a, {{1, BinaryGrid(2, 2, 1)}}, 0.25);
  EXPECT_EQ(r.loss, 0.0);
  for (double v : r.grad.at(1).values()) EXPECT_EQ(v, 0.0);
}

TEST(StimulusLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  AttentionStack a{{0, random_grid(16, 16, rng)}};
  BinaryGrid m(16, 16, 0);
  m(6, 9) = 1;
  const TargetMaps targets = mask_targets({{0, m}}, 0.8);
  const auto r = stimulus_loss(a, targets);
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < 256; ++i) {
    const double h = 1e-5;
    AttentionStack up = a, dn = a;
    up[0][i] += h;
    dn[0][i] -= h;
    const double fd = (stimulus_loss(up, targets).loss - stimulus_loss(dn, targets).loss) / (2 * h);
    const double an = r.grad.at(0)[i];
    diff += (fd - an) * (fd - an);
    norm += an * an;
  }
  EXPECT_LT(std::sqrt(diff / norm), 1e-6);
}

TEST(StimulusLoss, ShapeMismatch) {
  const AttentionStack a{{0, RealGrid(2, 2, 0.0)}};
  EXPECT_THROW(stimulus_loss(a, {{0, BinaryGrid(3, 2, 1)}}, 0.8), Error);
  EXPECT_THROW(stimulus_loss(a, {{5, BinaryGrid(2, 2, 1)}}, 0.8), Error);
}

TEST(StimulusGradient, MatchesFiniteDifferencesOverLatent) {
  ReferenceDenoiser den({.seed = 21});
  const auto z = diffusion::gaussian_latent(4, 16, 16, 3);
  BinaryGrid m(16, 16, 0);
  for (std::size_t r = 2; r < 8; ++r)
    for (std::size_t c = 3; c < 9; ++c) m(r, c) = 1;
  const TargetMaps targets = mask_targets({{0, m}, {1, BinaryGrid(16, 16, 1)}}, 0.8);
  const auto [loss, grad] = stimulus_gradient(z, den, 10, targets);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int probe = 0; probe < 20; ++probe) {
    Latent v(4, 16, 16);
    for (double& x : v.data) x = n(rng);
    const double h = 1e-5;
    auto up = z, dn = z;
    for (std::size_t i = 0; i < z.size(); ++i) up.data[i] += h * v.data[i], dn.data[i] -= h * v.data[i];
    const double fd = (stimulus_gradient(up, den, 10, targets).first - stimulus_gradient(dn, den, 10, targets).first) / (2 * h);
    double an = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) an += grad.data[i] * v.data[i];
    EXPECT_LT(std::abs(fd - an) / std::abs(an), 1e-5) << probe;
  }
  EXPECT_GT(loss, 0.0);
}

TEST(LatentResponse, ZeroAlphaAndMinimizerAreIdentity) {
  ReferenceDenoiser den({.seed = 2});
  const auto z = diffusion::gaussian_latent(4, 8, 8, 1);
  const TargetMaps targets = mask_targets({{0, BinaryGrid(8, 8, 1)}}, 0.8);
  EXPECT_TRUE(bitwise_equal(latent_response(z, den, targets, 0.0, 5).z, z));
  // Zero latent gives uniform softmax, which equals the uniform target exactly.
  const Latent zero(4, 8, 8);
  const TargetMaps exact{{0, uniform_target(8, 8, 1.0)}};
  const auto r = latent_response(zero, den, exact, 40.0, 5);
  EXPECT_EQ(r.loss_before, 0.0);
  EXPECT_TRUE(bitwise_equal(r.z, zero));
}

TEST(LatentResponse, OneStepDescends) {
  int descended = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    ReferenceDenoiser den({.seed = s});
    const auto z = diffusion::gaussian_latent(4, 16, 16, 100 + s);
    BinaryGrid m(16, 16, 0);
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 6; ++c) m(r, c) = 1;
    const TargetMaps targets = mask_targets({{0, m}}, 0.8);
    const auto r = latent_response(z, den, targets, 40.0, 20);
    descended += stimulus_gradient(r.z, den, 20, targets).first < r.loss_before;
  }
  EXPECT_GE(descended, 95);
}

namespace {

class NanDenoiser final : public diffusion::Denoiser {
 public:
  diffusion::DenoiserOutput denoise(const Latent& z, int, std::span<const TokenId> tokens) override {
    diffusion::DenoiserOutput out{z, {}};
    for (TokenId k : tokens) out.attention[k] = RealGrid(z.height, z.width, std::nan(""));
    return out;
  }
  Latent attention_vjp(const Latent& z, int, const AttentionStack&) override { return z; }
};

}  // namespace

TEST(LatentResponse, NonFiniteAborts) {
  NanDenoiser den;
  const auto z = diffusion::gaussian_latent(4, 8, 8, 1);
  const TargetMaps targets = mask_targets({{0, BinaryGrid(8, 8, 1)}}, 0.8);
  try {
    latent_response(z, den, targets, 1.0, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
}

TEST(Targets, ReferenceAndUniform) {
  const auto u = uniform_target(4, 4, 0.8);
  for (double v : u.values()) EXPECT_DOUBLE_EQ(v, 0.05);
  RealGrid logits(1, 2);
  logits.values()[0] = std::log(3.0);
  const auto r = reference_target(logits, 0.8);
  EXPECT_NEAR(r[0], 0.6, 1e-15);
  EXPECT_NEAR(r[1], 0.2, 1e-15);
}

TEST(MaskSchedule, ExhaustiveCaseSplit) {
  const auto box = layout::LayoutMask::filled(4, 4, true);
  const auto attn = layout::LayoutMask::filled(4, 4, false, layout::MaskSource::FromAttention);
  int mismatches = 0;
  for (int tau = 0; tau <= 50; ++tau)
    for (int step = 1; step <= 50; ++step) {
      const auto* want = step <= tau ? &box : &attn;
      mismatches += &mask_schedule(step, tau, box, attn) != want;
    }
  EXPECT_EQ(mismatches, 0);
  EXPECT_EQ(&mask_schedule(10, 40, box, attn), &box);
  EXPECT_EQ(&mask_schedule(41, 40, box, attn), &attn);
  EXPECT_THROW(mask_schedule(1, 1, box, layout::LayoutMask::filled(2, 2, true)), Error);
}

TEST(Fusion, Identities) {
  const auto a = diffusion::gaussian_latent(4, 16, 16, 1), b = diffusion::gaussian_latent(4, 16, 16, 2);
  EXPECT_TRUE(bitwise_equal(fuse_latents(a, b, BinaryGrid(16, 16, 1)), a));
  EXPECT_TRUE(bitwise_equal(fuse_latents(a, b, BinaryGrid(16, 16, 0)), b));
}

TEST(Fusion, RandomMasksMatchElementwiseBlend) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution on(0.5);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + trial % 4, h = 1 + trial % 7, w = 1 + trial % 5;
    const auto zs = diffusion::gaussian_latent(c, h, w, 2 * trial), zb = diffusion::gaussian_latent(c, h, w, 2 * trial + 1);
    BinaryGrid m(h, w);
    for (auto& v : m.values()) v = on(rng);
    const auto out = fuse_latents(zs, zb, m);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h * w; ++i) {
        const double mk = m[i];
        const double want = mk * zs.data[ch * h * w + i] + (1.0 - mk) * zb.data[ch * h * w + i];
        mismatches += std::memcmp(&want, &out.data[ch * h * w + i], 8) != 0;
      }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Fusion, ShapeErrors) {
  EXPECT_THROW(fuse_latents(Latent(1, 2, 2), Latent(1, 2, 3), BinaryGrid(2, 2, 1)), Error);
  EXPECT_THROW(fuse_latents(Latent(1, 2, 2), Latent(1, 2, 2), BinaryGrid(2, 3, 1)), Error);
}

TEST(AttentionMaskAverage, AveragesSoftmaxes) {
  RealGrid a(1, 4, 0.0), b(1, 4, 0.0);
  a[0] = 10.0;
  b[3] = 10.0;
  const auto r = attention_mask({a, b}, 0.5);
  EXPECT_EQ(r.mask.grid[0], 1);
  EXPECT_EQ(r.mask.grid[3], 1);
  EXPECT_EQ(r.mask.count(), 2u);
  EXPECT_THROW(attention_mask({}, 0.5), Error);
}
