#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "srf/diffusion/denoiser.hpp"

namespace srf::diffusion::protocol {

// Each message: 4-byte big-endian payload length, then a UTF-8 JSON object.

inline constexpr int kVersion = 1;
inline constexpr std::uint32_t kMaxFrame = 1u << 28;

inline std::string frame(std::string_view payload) {
  if (payload.size() > kMaxFrame) throw Error(ErrorCode::ProtocolError, "message too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((n >> s) & 0xff));
  out.append(payload);
  return out;
}

/// Reads one frame from `read(buf, n)` (returns bytes read, 0 at end of
/// stream). `offset` counts stream bytes consumed so far and is reported on
/// truncation.
template <class ReadFn>
std::string read_frame(ReadFn&& read, std::size_t& offset) {
  auto exact = [&](char* dst, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      const std::size_t r = read(dst + got, n - got);
      if (r == 0) throw Error(ErrorCode::ProtocolError, "truncated message", offset);
      got += r;
      offset += r;
    }
  };
  unsigned char head[4];
  exact(reinterpret_cast<char*>(head), 4);
  const std::uint32_t n = (std::uint32_t{head[0]} << 24) | (std::uint32_t{head[1]} << 16) |
                          (std::uint32_t{head[2]} << 8) | std::uint32_t{head[3]};
  if (n > kMaxFrame) throw Error(ErrorCode::ProtocolError, "frame length " + std::to_string(n) + " exceeds limit", offset);
  std::string payload(n, '\0');
  exact(payload.data(), n);
  return payload;
}

/// Frame decoding over an in-memory buffer.
inline std::string read_frame(std::string_view buffer, std::size_t& offset) {
  return read_frame(
      [&](char* dst, std::size_t n) {
        const std::size_t k = std::min(n, buffer.size() - std::min(buffer.size(), offset));
        std::copy_n(buffer.data() + offset, k, dst);
        return k;
      },
      offset);
}

inline nlohmann::json parse_json(std::string_view payload) {
  auto j = nlohmann::json::parse(payload, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ProtocolError, "payload is not a JSON object");
  return j;
}

inline std::string hello_request() { return nlohmann::json{{"op", "hello"}, {"version", kVersion}}.dump(); }

inline void check_hello(std::string_view payload) {
  const auto j = parse_json(payload);
  if (j.contains("error")) throw Error(ErrorCode::BackendError, j["error"].dump());
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kVersion)
    throw Error(ErrorCode::ProtocolError, "handshake did not return version " + std::to_string(kVersion));
}

inline nlohmann::json latent_fields(const Latent& z, int t) {
  return {{"t", t}, {"shape", {z.channels, z.height, z.width}}, {"z", z.data}};
}

inline std::string denoise_request(const Latent& z, int t, std::span<const TokenId> tokens) {
  auto j = latent_fields(z, t);
  j["op"] = "denoise";
  j["tokens"] = std::vector<TokenId>(tokens.begin(), tokens.end());
  return j.dump();
}

/// Planned extension: gradient of Σ_k <g_k, A_k(z)> with respect to z.
inline std::string vjp_request(const Latent& z, int t, const AttentionStack& grad) {
  auto j = latent_fields(z, t);
  j["op"] = "attention_vjp";
  nlohmann::json g = nlohmann::json::object();
  for (const auto& [k, plane] : grad) g[std::to_string(k)] = plane.vector();
  j["grad"] = std::move(g);
  return j.dump();
}

namespace detail {

inline std::vector<double> numbers(const nlohmann::json& j, const char* field, std::size_t expected) {
  if (!j.is_array()) throw Error(ErrorCode::ProtocolError, std::string(field) + " is not an array");
  if (j.size() != expected)
    throw Error(ErrorCode::ProtocolError, std::string("ShapeMismatch: ") + field + " has " + std::to_string(j.size()) +
                                              " values, expected " + std::to_string(expected));
  std::vector<double> v;
  v.reserve(expected);
  for (const auto& x : j) {
    if (!x.is_number()) throw Error(ErrorCode::ProtocolError, std::string(field) + " holds a non-number");
    v.push_back(x.get<double>());
  }
  return v;
}

inline nlohmann::json checked(std::string_view payload) {
  auto j = parse_json(payload);
  if (j.contains("error")) {
    const auto& e = j["error"];
    throw Error(ErrorCode::BackendError, e.is_string() ? e.get<std::string>() : e.dump());
  }
  return j;
}

}  // namespace detail

inline DenoiserOutput parse_denoise_response(std::string_view payload, const Latent& z,
                                              std::span<const TokenId> tokens) {
  const auto j = detail::checked(payload);
  if (!j.contains("eps") || !j.contains("attention") || !j["attention"].is_object())
    throw Error(ErrorCode::ProtocolError, "response lacks eps or attention");
  DenoiserOutput out;
  out.eps = Latent(z.channels, z.height, z.width);
  out.eps.data = detail::numbers(j["eps"], "eps", z.size());
  for (TokenId k : tokens) {
    const auto key = std::to_string(k);
    if (!j["attention"].contains(key))
      throw Error(ErrorCode::ProtocolError, "response lacks attention for token " + key);
    out.attention[k] = RealGrid(z.height, z.width, detail::numbers(j["attention"][key], "attention", z.plane()));
  }
  return out;
}

inline Latent parse_vjp_response(std::string_view payload, const Latent& z) {
  const auto j = detail::checked(payload);
  if (!j.contains("grad_z")) throw Error(ErrorCode::ProtocolError, "response lacks grad_z");
  Latent g(z.channels, z.height, z.width);
  g.data = detail::numbers(j["grad_z"], "grad_z", z.size());
  return g;
}

}  // namespace srf::diffusion::protocol
