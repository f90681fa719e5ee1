#include <gtest/gtest.h>

#include <filesystem>

#include "srf/diffusion/ddim.hpp"
#include "srf/diffusion/latent_io.hpp"
#include "srf/diffusion/reference_denoiser.hpp"

using namespace srf;
using namespace srf::diffusion;

namespace {

class ZeroDenoiser final : public Denoiser {
 public:
  DenoiserOutput denoise(const Latent& z, int, std::span<const TokenId> tokens) override {
    DenoiserOutput out{Latent(z.channels, z.height, z.width), {}};
    for (TokenId k : tokens) out.attention[k] = RealGrid(z.height, z.width, 0.0);
    return out;
  }
  Latent attention_vjp(const Latent& z, int, const AttentionStack&) override {
    return Latent(z.channels, z.height, z.width);
  }
};

// ᾱ_t from the β recurrence written out directly.
std::vector<double> alpha_bars(int steps, double b0, double b1) {
  std::vector<double> out{1.0};
  double prod = 1.0;
  for (int t = 1; t <= steps; ++t) {
    prod *= 1.0 - (b0 + (b1 - b0) * (t - 1) / (steps - 1));
    out.push_back(prod);
  }
  return out;
}

}  // namespace

TEST(Schedule, LinearBetas) {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  const auto ref = alpha_bars(50, 1e-4, 0.02);
  ASSERT_EQ(s.steps(), 50);
  for (int t = 0; t <= 50; ++t) EXPECT_NEAR(s.alpha_bar(t), ref[t], 1e-15);
  EXPECT_NEAR(s.alpha_bar(1), 1.0 - 1e-4, 1e-16);
  EXPECT_THROW(NoiseSchedule({1.0, 1.0}), Error);
  EXPECT_THROW(NoiseSchedule({0.9, 0.5}), Error);
  EXPECT_THROW(NoiseSchedule::linear(0), Error);
}

TEST(Ddim, ZeroEpsScalesBySignalRatio) {
  const auto s = NoiseSchedule::linear(50);
  const auto z = gaussian_latent(2, 3, 3, 1);
  for (int t : {1, 25, 50}) {
    const auto out = ddim_reverse_step(z, Latent(2, 3, 3), t, s);
    const double ratio = std::sqrt(s.alpha_bar(t - 1) / s.alpha_bar(t));
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(out.data[i], ratio * z.data[i], 1e-15);
  }
}

TEST(Ddim, ClosedFormForLinearEps) {
  const double lambda = 0.1;
  const auto ab = alpha_bars(50, 1e-4, 0.02);
  const auto s = NoiseSchedule::linear(50);
  ReferenceDenoiser den({.seed = 0, .lambda = lambda});
  Latent z(1, 2, 2);
  z.data = {1.0, -2.0, 0.5, 3.0};
  Latent cur = z;
  double factor = 1.0;
  for (int t = 50; t >= 1; --t) {
    cur = ddim_reverse_step(cur, den.denoise(cur, t, {}).eps, t, s);
    const double st = std::sqrt(ab[t]), nt = std::sqrt(1 - ab[t]), sp = std::sqrt(ab[t - 1]), np = std::sqrt(1 - ab[t - 1]);
    factor *= sp / st + lambda * (np - sp * nt / st);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(cur.data[i], factor * z.data[i], 1e-12);
}

TEST(Ddim, InversionRoundtrip) {
  const auto s = NoiseSchedule::linear(50);
  ReferenceDenoiser den({.seed = 3});
  const auto z0 = gaussian_latent(4, 16, 16, 42);
  const std::vector<TokenId> tokens{0, 1};
  const auto inv = ddim_inversion(z0, den, s, tokens);
  ASSERT_EQ(inv.trajectory.size(), 51u);
  Latent z = inv.trajectory.back();
  for (int t = 50; t >= 1; --t) {
    z = ddim_reverse_step(z, den.denoise(z, t, tokens).eps, t, s);
    double err = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) err = std::max(err, std::abs(z.data[i] - inv.trajectory[t - 1].data[i]));
    EXPECT_LT(err, 1e-10) << t;
  }
  double err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) err = std::max(err, std::abs(z.data[i] - z0.data[i]));
  EXPECT_LT(err, 1e-8);
  ASSERT_EQ(inv.attention[50].size(), 2u);
}

TEST(Ddim, ConstantChannelsStayConstant) {
  const auto s = NoiseSchedule::linear(50);
  ReferenceDenoiser den({.seed = 9, .lambda = 0.1, .attention_scale = 0.5, .prompt_bias = 2.0});
  Latent z0(3, 4, 4);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i) z0.data[c * 16 + i] = 0.3 * static_cast<double>(c) - 0.2;
  const std::vector<TokenId> tokens{2};
  const auto inv = ddim_inversion(z0, den, s, tokens);
  for (const auto& z : inv.trajectory)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 1; i < 16; ++i) EXPECT_EQ(z.data[c * 16 + i], z.data[c * 16]);
}

TEST(Ddim, RejectsBadInput) {
  const auto s = NoiseSchedule::linear(10);
  EXPECT_THROW(ddim_reverse_step(Latent(1, 2, 2), Latent(1, 2, 3), 1, s), Error);
  EXPECT_THROW(ddim_reverse_step(Latent(1, 2, 2), Latent(1, 2, 2), 0, s), Error);
  EXPECT_THROW(ddim_reverse_step(Latent(1, 2, 2), Latent(1, 2, 2), 11, s), Error);
  ZeroDenoiser zero;
  Latent bad(1, 2, 2);
  bad.data[0] = std::nan("");
  EXPECT_THROW(ddim_inversion(bad, zero, s, {}), Error);
}

TEST(ReferenceDenoiser, ZeroLatentGivesZeroLogits) {
  ReferenceDenoiser den({.seed = 1});
  const std::vector<TokenId> tokens{0, 1, 2};
  const auto out = den.denoise(Latent(4, 16, 16), 10, tokens);
  for (TokenId k : tokens)
    for (double v : out.attention.at(k).values()) EXPECT_EQ(v, 0.0);
  for (double v : out.eps.data) EXPECT_EQ(v, 0.0);
}

TEST(ReferenceDenoiser, ImpulseReturnsProjection) {
  ReferenceDenoiser den({.seed = 4});
  const auto w = den.projection(0, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    Latent z(4, 16, 16);
    z(c, 5, 7) = 1.0;
    const std::vector<TokenId> tokens{0};
    const auto out = den.denoise(z, 1, tokens);
    const auto& a = out.attention.at(0);
    EXPECT_EQ(a(5, 7), w[c]);
    EXPECT_EQ(a(0, 0), 0.0);
  }
}

TEST(ReferenceDenoiser, LinearAndDeterministic) {
  ReferenceDenoiser den({.seed = 8});
  const auto x = gaussian_latent(4, 8, 8, 1), y = gaussian_latent(4, 8, 8, 2);
  Latent sum = x;
  for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] = 2.0 * x.data[i] - 3.0 * y.data[i];
  const std::vector<TokenId> tokens{7};
  const auto ax = den.denoise(x, 1, tokens).attention.at(7), ay = den.denoise(y, 1, tokens).attention.at(7);
  const auto as = den.denoise(sum, 1, tokens).attention.at(7);
  for (std::size_t i = 0; i < as.size(); ++i) EXPECT_NEAR(as[i], 2.0 * ax[i] - 3.0 * ay[i], 1e-12);
  ReferenceDenoiser again({.seed = 8});
  EXPECT_EQ(den.projection(3, 4), again.projection(3, 4));
  EXPECT_NE(den.projection(3, 4), ReferenceDenoiser({.seed = 9}).projection(3, 4));
  const auto p = softmax(ax);
  double total = 0.0;
  for (double v : p.values()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(ReferenceDenoiser, VjpIsAdjoint) {
  ReferenceDenoiser den({.seed = 2});
  const auto z = gaussian_latent(4, 6, 6, 5), v = gaussian_latent(4, 6, 6, 6);
  AttentionStack g;
  g[0] = RealGrid(6, 6, 0.0);
  g[3] = RealGrid(6, 6, 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (auto& [k, plane] : g)
    for (double& x : plane.values()) x = n(rng);
  const std::vector<TokenId> tokens{0, 3};
  const auto av = den.denoise(v, 1, tokens).attention;
  double lhs = 0.0;
  for (const auto& [k, plane] : g)
    for (std::size_t i = 0; i < plane.size(); ++i) lhs += plane[i] * av.at(k)[i];
  const auto vjp = den.attention_vjp(z, 1, g);
  double rhs = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) rhs += vjp.data[i] * v.data[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(LatentIO, BitExactRoundtrip) {
  auto z = gaussian_latent(4, 3, 5, 11);
  z.data[0] = -0.0;
  z.data[1] = 5e-324;
  const auto bytes = encode_latent(z);
  EXPECT_EQ(bytes.substr(0, 6), "4 3 5\n");
  EXPECT_EQ(bytes.size(), 6u + 8 * 60);
  const auto back = decode_latent(bytes);
  ASSERT_TRUE(back.same_shape(z));
  EXPECT_EQ(std::memcmp(back.data.data(), z.data.data(), 8 * z.size()), 0);
  const auto path = (std::filesystem::temp_directory_path() / "srf_latent_io.latent").string();
  save_latent(path, z);
  EXPECT_EQ(encode_latent(load_latent(path)), bytes);
  std::filesystem::remove(path);
}

TEST(LatentIO, LittleEndianLayout) {
  Latent z(1, 1, 1);
  z.data[0] = 1.0;
  const auto bytes = encode_latent(z);
  const std::string one("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8);
  EXPECT_EQ(bytes.substr(6), one);
}

TEST(LatentIO, Errors) {
  auto code = [](std::string_view b) {
    try {
      decode_latent(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code("1 1 1"), ErrorCode::ParseError);
  EXPECT_EQ(code("1 1\n"), ErrorCode::ParseError);
  EXPECT_EQ(code("1 1 0\n"), ErrorCode::ParseError);
  EXPECT_EQ(code(std::string("1 1 2\n") + std::string(8, '\0')), ErrorCode::ShapeMismatch);
  const std::string nan_bits("\x00\x00\x00\x00\x00\x00\xf8\x7f", 8);
  EXPECT_EQ(code("1 1 1\n" + nan_bits), ErrorCode::InvalidArgument);
  EXPECT_THROW(load_latent("/nonexistent/dir/z.latent"), Error);
}
