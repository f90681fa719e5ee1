#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "srf/diffusion/external_denoiser.hpp"
#include "srf/diffusion/reference_denoiser.hpp"
#include "srf/engine/pipeline.hpp"
#include "srf/text.hpp"

namespace srf {

/// Flat `key = value` run configuration. Every key has a default; unknown
/// keys are rejected.
struct RunConfig {
  int T = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int latent_channels = 4;
  int latent_height = 16;
  int latent_width = 16;

  double delta = 0.8;
  double alpha = 40.0;
  int stimulus_steps = 25;
  int inner_iters = 1;
  int tau = 40;
  double attn_quantile = 0.75;
  bool latent_fusion = true;

  std::uint64_t seed = 0;

  std::string denoiser = "reference";
  std::string denoiser_cmd;
  int denoiser_timeout_ms = 120000;
  double lambda = 0.1;
  double attention_scale = 0.5;
  double prompt_bias = 0.0;
  int inversion_iters = 30;

  double size_ratio = 0.3;
  double proximity_fraction = 0.25;
  double wearing_iou = 0.3;

  double recall_threshold = 0.5;
  double degradation_threshold = 20.0;

  std::string lexicon;  // empty: built-in lexicon
};

namespace config_detail {

template <class T>
struct Field {
  T RunConfig::*member;
};

using AnyField = std::variant<Field<int>, Field<double>, Field<bool>, Field<std::uint64_t>, Field<std::string>>;

inline const std::vector<std::pair<std::string, AnyField>>& fields() {
  static const std::vector<std::pair<std::string, AnyField>> f{
      {"T", Field<int>{&RunConfig::T}},
      {"beta_start", Field<double>{&RunConfig::beta_start}},
      {"beta_end", Field<double>{&RunConfig::beta_end}},
      {"latent_channels", Field<int>{&RunConfig::latent_channels}},
      {"latent_height", Field<int>{&RunConfig::latent_height}},
      {"latent_width", Field<int>{&RunConfig::latent_width}},
      {"delta", Field<double>{&RunConfig::delta}},
      {"alpha", Field<double>{&RunConfig::alpha}},
      {"stimulus_steps", Field<int>{&RunConfig::stimulus_steps}},
      {"inner_iters", Field<int>{&RunConfig::inner_iters}},
      {"tau", Field<int>{&RunConfig::tau}},
      {"attn_quantile", Field<double>{&RunConfig::attn_quantile}},
      {"latent_fusion", Field<bool>{&RunConfig::latent_fusion}},
      {"seed", Field<std::uint64_t>{&RunConfig::seed}},
      {"denoiser", Field<std::string>{&RunConfig::denoiser}},
      {"denoiser_cmd", Field<std::string>{&RunConfig::denoiser_cmd}},
      {"denoiser_timeout_ms", Field<int>{&RunConfig::denoiser_timeout_ms}},
      {"lambda", Field<double>{&RunConfig::lambda}},
      {"attention_scale", Field<double>{&RunConfig::attention_scale}},
      {"prompt_bias", Field<double>{&RunConfig::prompt_bias}},
      {"inversion_iters", Field<int>{&RunConfig::inversion_iters}},
      {"size_ratio", Field<double>{&RunConfig::size_ratio}},
      {"proximity_fraction", Field<double>{&RunConfig::proximity_fraction}},
      {"wearing_iou", Field<double>{&RunConfig::wearing_iou}},
      {"recall_threshold", Field<double>{&RunConfig::recall_threshold}},
      {"degradation_threshold", Field<double>{&RunConfig::degradation_threshold}},
      {"lexicon", Field<std::string>{&RunConfig::lexicon}},
  };
  return f;
}

template <class T>
T parse_number(std::string_view v, const std::string& key, std::size_t line) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw Error(ErrorCode::InvalidArgument, "bad value '" + std::string(v) + "' for " + key, line);
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace config_detail

/// Validates ranges the owning modules rely on.
inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, msg);
  };
  need(c.T >= 1, "T must be at least 1");
  need(c.beta_start > 0.0 && c.beta_end < 1.0 && c.beta_start <= c.beta_end, "beta range must satisfy 0 < start <= end < 1");
  need(c.latent_channels > 0 && c.latent_height > 0 && c.latent_width > 0, "latent dimensions must be positive");
  need(c.delta > 0.0 && c.delta <= 1.0, "delta must lie in (0, 1]");
  need(c.alpha >= 0.0, "alpha must be nonnegative");
  need(c.stimulus_steps >= 0 && c.stimulus_steps <= c.T, "stimulus_steps must lie in [0, T]");
  need(c.inner_iters >= 1, "inner_iters must be at least 1");
  need(c.tau >= 0 && c.tau <= c.T, "tau must lie in [0, T]");
  need(c.attn_quantile > 0.0 && c.attn_quantile < 1.0, "attn_quantile must lie in (0, 1)");
  need(c.denoiser == "reference" || c.denoiser == "external", "denoiser must be 'reference' or 'external'");
  need(c.denoiser != "external" || !c.denoiser_cmd.empty(), "external denoiser needs denoiser_cmd");
  need(c.denoiser_timeout_ms > 0, "denoiser_timeout_ms must be positive");
  need(c.attention_scale > 0.0, "attention_scale must be positive");
  need(c.inversion_iters >= 1, "inversion_iters must be at least 1");
  need(c.size_ratio > 0.0 && c.size_ratio <= 1.0, "size_ratio must lie in (0, 1]");
  need(c.proximity_fraction > 0.0, "proximity_fraction must be positive");
  need(c.wearing_iou > 0.0 && c.wearing_iou < 1.0, "wearing_iou must lie in (0, 1)");
  need(c.recall_threshold > 0.0 && c.recall_threshold < 1.0, "recall_threshold must lie in (0, 1)");
  need(c.degradation_threshold > 0.0, "degradation_threshold must be positive");
}

/// Applies `key = value` lines on top of `base`.
inline RunConfig parse_config(std::string_view body, RunConfig base = {}) {
  std::set<std::string> seen;
  std::istringstream in{std::string(body)};
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto t = text::trim(raw);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "expected 'key = value'", line);
    const std::string key(text::trim(t.substr(0, eq)));
    const auto value = text::trim(t.substr(eq + 1));
    const auto& fs = config_detail::fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const auto& f) { return f.first == key; });
    if (it == fs.end()) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'", line);
    if (!seen.insert(key).second) throw Error(ErrorCode::InvalidArgument, "duplicate config key '" + key + "'", line);
    std::visit(
        [&]<class T>(const config_detail::Field<T>& f) {
          if constexpr (std::is_same_v<T, std::string>) {
            base.*(f.member) = std::string(value);
          } else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true") base.*(f.member) = true;
            else if (value == "false") base.*(f.member) = false;
            else throw Error(ErrorCode::InvalidArgument, "expected true or false for " + key, line);
          } else {
            base.*(f.member) = config_detail::parse_number<T>(value, key, line);
          }
        },
        it->second);
  }
  validate(base);
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// Every key with its resolved value, in a fixed order.
inline std::string format_config(const RunConfig& c) {
  std::string out;
  for (const auto& [key, field] : config_detail::fields()) {
    out += key + " = ";
    std::visit(
        [&]<class T>(const config_detail::Field<T>& f) {
          const T& v = c.*(f.member);
          if constexpr (std::is_same_v<T, std::string>) out += v;
          else if constexpr (std::is_same_v<T, bool>) out += v ? "true" : "false";
          else if constexpr (std::is_same_v<T, double>) out += config_detail::format_double(v);
          else out += std::to_string(v);
        },
        field);
    out += '\n';
  }
  return out;
}

inline diffusion::NoiseSchedule make_schedule(const RunConfig& c) {
  return diffusion::NoiseSchedule::linear(c.T, c.beta_start, c.beta_end);
}

inline std::unique_ptr<diffusion::Denoiser> make_denoiser(const RunConfig& c) {
  if (c.denoiser == "external")
    return std::make_unique<diffusion::ExternalDenoiser>(c.denoiser_cmd, std::chrono::milliseconds(c.denoiser_timeout_ms));
  return std::make_unique<diffusion::ReferenceDenoiser>(
      diffusion::ReferenceDenoiserParams{c.seed, c.lambda, c.attention_scale, c.prompt_bias});
}

/// Pipeline settings from `c`. `lexicon` must outlive the returned value.
inline engine::PipelineConfig make_pipeline(const RunConfig& c, const directive::Lexicon* lexicon = nullptr) {
  engine::PipelineConfig p;
  p.stimulus.delta = c.delta;
  p.stimulus.alpha = c.alpha;
  p.stimulus.stimulus_steps = c.stimulus_steps;
  p.stimulus.inner_iters = c.inner_iters;
  p.fusion.tau = c.tau;
  p.fusion.attn_quantile = c.attn_quantile;
  p.layout.size_ratio = c.size_ratio;
  p.layout.proximity_fraction = c.proximity_fraction;
  p.layout.wearing_iou = c.wearing_iou;
  p.inversion.max_iterations = c.inversion_iters;
  p.latent_fusion = c.latent_fusion;
  p.seed = c.seed;
  p.lexicon = lexicon;
  return p;
}

/// Seeded standard normal latent of the configured shape.
inline diffusion::Latent noise_background(const RunConfig& c, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xb9u};
  return diffusion::gaussian_latent(static_cast<std::size_t>(c.latent_channels),
                                    static_cast<std::size_t>(c.latent_height),
                                    static_cast<std::size_t>(c.latent_width), seq);
}

}  // namespace srf
