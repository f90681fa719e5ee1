#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srf/layout/bbox.hpp"
#include "srf/text.hpp"

namespace srf::layout {

using NamedBox = std::pair<std::string, BBox>;

/// One `<name> <x0> <y0> <x1> <y1>` line per box, six decimals.
inline std::string format_boxes(const std::vector<NamedBox>& boxes) {
  std::string out;
  char buf[160];
  for (const auto& [name, b] : boxes) {
    std::snprintf(buf, sizeof buf, " %.6f %.6f %.6f %.6f\n", b.x0, b.y0, b.x1, b.y1);
    out += name;
    out += buf;
  }
  return out;
}

/// Inverse of `format_boxes`. Names may span several words; blank lines and
/// `#` comments are skipped.
inline std::vector<NamedBox> parse_boxes(std::string_view body) {
  std::vector<NamedBox> out;
  std::istringstream in{std::string(body)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto words = text::split_words(t);
    if (words.size() < 5) throw Error(ErrorCode::ParseError, "expected '<name> x0 y0 x1 y1'", line_no);
    double v[4];
    for (int k = 0; k < 4; ++k) {
      const auto& w = words[words.size() - 4 + k];
      auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v[k]);
      if (ec != std::errc{} || p != w.data() + w.size())
        throw Error(ErrorCode::ParseError, "bad coordinate '" + w + "'", line_no);
    }
    BBox b{v[0], v[1], v[2], v[3]};
    try {
      b.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidBox, e.detail(), line_no);
    }
    words.resize(words.size() - 4);
    out.emplace_back(text::join(words, " "), b);
  }
  return out;
}

inline std::map<std::string, BBox> to_map(const std::vector<NamedBox>& boxes) {
  std::map<std::string, BBox> m;
  for (const auto& [n, b] : boxes) m[n] = b;
  return m;
}

inline std::vector<NamedBox> load_boxes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_boxes(ss.str());
}

}  // namespace srf::layout
