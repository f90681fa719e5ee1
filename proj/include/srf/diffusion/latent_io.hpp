#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "srf/diffusion/latent.hpp"

namespace srf::diffusion {

// Text header "C H W\n" followed by C*H*W little-endian f64 values.

inline std::string encode_latent(const Latent& z) {
  std::string out = std::to_string(z.channels) + " " + std::to_string(z.height) + " " + std::to_string(z.width) + "\n";
  const std::size_t head = out.size();
  out.resize(head + 8 * z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(z.data[i]);
    for (int b = 0; b < 8; ++b) out[head + 8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

inline Latent decode_latent(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw Error(ErrorCode::ParseError, "latent header missing");
  std::istringstream head{std::string(bytes.substr(0, nl))};
  long long c = -1, h = -1, w = -1;
  std::string extra;
  if (!(head >> c >> h >> w) || (head >> extra) || c <= 0 || h <= 0 || w <= 0)
    throw Error(ErrorCode::ParseError, "latent header must be 'C H W'");
  Latent z(static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  const auto body = bytes.substr(nl + 1);
  if (body.size() != 8 * z.size())
    throw Error(ErrorCode::ShapeMismatch, "latent payload has " + std::to_string(body.size()) + " bytes, header implies " +
                                               std::to_string(8 * z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(body[8 * i + b])) << (8 * b);
    z.data[i] = std::bit_cast<double>(bits);
  }
  if (!z.finite()) throw Error(ErrorCode::InvalidArgument, "latent contains non-finite values");
  return z;
}

inline void save_latent(const std::string& path, const Latent& z) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  const auto bytes = encode_latent(z);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Latent load_latent(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open latent '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_latent(ss.str());
}

}  // namespace srf::diffusion
