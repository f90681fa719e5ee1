#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "srf/error.hpp"
#include "srf/grid.hpp"

namespace srf::diffusion {

/// C×H×W latent, channel-major, row-major within a channel.
struct Latent {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> data;

  Latent() = default;
  Latent(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return height * width; }
  std::array<std::size_t, 3> shape() const noexcept { return {channels, height, width}; }

  double& operator()(std::size_t c, std::size_t r, std::size_t k) { return data[(c * height + r) * width + k]; }
  double operator()(std::size_t c, std::size_t r, std::size_t k) const { return data[(c * height + r) * width + k]; }

  bool same_shape(const Latent& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool finite() const { return all_finite(data); }
  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const Latent&, const Latent&) = default;
};

inline void require_same_shape(const Latent& a, const Latent& b, const char* what) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": latent shapes differ");
}

inline std::string shape_string(const Latent& z) {
  return std::to_string(z.channels) + "x" + std::to_string(z.height) + "x" + std::to_string(z.width);
}

/// Standard normal latent from a seed sequence.
inline Latent gaussian_latent(std::size_t c, std::size_t h, std::size_t w, std::seed_seq& seq) {
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> n(0.0, 1.0);
  Latent z(c, h, w);
  for (auto& v : z.data) v = n(rng);
  return z;
}

inline Latent gaussian_latent(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return gaussian_latent(c, h, w, seq);
}

}  // namespace srf::diffusion
