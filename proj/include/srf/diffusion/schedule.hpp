#pragma once

#include <cmath>
#include <vector>

#include "srf/error.hpp"

namespace srf::diffusion {

/// Cumulative signal fractions ᾱ_0..ᾱ_T with ᾱ_0 = 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.size() < 2 || alpha_bar_.front() != 1.0)
      throw Error(ErrorCode::InvalidArgument, "schedule needs alpha_bar[0] = 1 and at least one step");
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t)
      if (!(alpha_bar_[t] < alpha_bar_[t - 1]) || !(alpha_bar_[t] > 0.0))
        throw Error(ErrorCode::InvalidArgument, "alpha_bar must be strictly decreasing and positive");
  }

  /// β linearly spaced from `beta_start` (first step) to `beta_end` (step T).
  static NoiseSchedule linear(int steps = 50, double beta_start = 1e-4, double beta_end = 0.02) {
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "schedule needs T >= 1");
    std::vector<double> ab{1.0};
    for (int s = 0; s < steps; ++s) {
      const double beta = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * s / (steps - 1);
      ab.push_back(ab.back() * (1.0 - beta));
    }
    return NoiseSchedule(std::move(ab));
  }

  int steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  double signal(int t) const { return std::sqrt(alpha_bar(t)); }
  double noise(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }
  const std::vector<double>& values() const noexcept { return alpha_bar_; }

 private:
  std::vector<double> alpha_bar_;
};

}  // namespace srf::diffusion
