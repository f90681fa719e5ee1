#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "srf/grid.hpp"
#include "srf/layout/bbox.hpp"

namespace srf::layout {

enum class MaskSource { FromBox, FromAttention };

struct LayoutMask {
  BinaryGrid grid;
  MaskSource source = MaskSource::FromBox;

  std::size_t rows() const { return grid.rows(); }
  std::size_t cols() const { return grid.cols(); }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(grid.values().begin(), grid.values().end(), std::uint8_t{1}));
  }
  bool operator[](std::size_t i) const { return grid[i] != 0; }

  static LayoutMask filled(std::size_t h, std::size_t w, bool on, MaskSource src = MaskSource::FromBox) {
    return {BinaryGrid(h, w, on ? 1 : 0), src};
  }
};

/// Cell is on when its center lies inside the box (closed interval). A box
/// smaller than a cell still turns on the cell containing its center.
inline LayoutMask rasterize_mask(const BBox& box, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw Error(ErrorCode::InvalidArgument, "mask dimensions must be positive");
  LayoutMask m{BinaryGrid(h, w, 0), MaskSource::FromBox};
  bool any = false;
  for (std::size_t r = 0; r < h; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) / static_cast<double>(h);
    for (std::size_t c = 0; c < w; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) / static_cast<double>(w);
      if (cx >= box.x0 && cx <= box.x1 && cy >= box.y0 && cy <= box.y1) {
        m.grid(r, c) = 1;
        any = true;
      }
    }
  }
  if (!any) {
    auto cell = [](double v, std::size_t n) {
      auto i = static_cast<long>(std::floor(v * static_cast<double>(n)));
      return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
    };
    m.grid(cell(box.cy(), h), cell(box.cx(), w)) = 1;
  }
  return m;
}

/// Linear-interpolated quantile over a copy of the values (q in [0,1]).
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

struct AttentionMaskResult {
  LayoutMask mask;
  bool degenerate = false;  // constant map; mask is all-on
};

/// Cells with value at or above the q-quantile. Cells at the map minimum never
/// count, so a one-hot map yields one cell; a constant map is degenerate.
inline AttentionMaskResult attention_to_mask(const RealGrid& attn, double threshold_quantile) {
  if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0))
    throw Error(ErrorCode::InvalidArgument, "threshold quantile must lie in (0,1)");
  if (attn.empty()) throw Error(ErrorCode::EmptyInput, "attention map is empty");
  for (double v : attn.values())
    if (!(v >= 0.0)) throw Error(ErrorCode::InvalidArgument, "attention map must be nonnegative");
  const auto [mn, mx] = std::minmax_element(attn.values().begin(), attn.values().end());
  if (*mn == *mx)
    return {LayoutMask::filled(attn.rows(), attn.cols(), true, MaskSource::FromAttention), true};
  const double thr = quantile(attn.vector(), threshold_quantile);
  LayoutMask m{BinaryGrid(attn.rows(), attn.cols(), 0), MaskSource::FromAttention};
  for (std::size_t i = 0; i < attn.size(); ++i)
    if (attn[i] >= thr && attn[i] > *mn) m.grid[i] = 1;
  return {std::move(m), false};
}

inline LayoutMask mask_union(const LayoutMask& a, const LayoutMask& b) {
  if (!a.grid.same_shape(b.grid)) throw Error(ErrorCode::ShapeMismatch, "mask shapes differ");
  LayoutMask out = a;
  for (std::size_t i = 0; i < out.grid.size(); ++i) out.grid[i] = (a.grid[i] || b.grid[i]) ? 1 : 0;
  return out;
}

/// Binary PGM (P5, maxval 255). Values are clamped to [0,1] then scaled.
inline std::string to_pgm(const RealGrid& g) {
  std::string out = "P5\n" + std::to_string(g.cols()) + " " + std::to_string(g.rows()) + "\n255\n";
  for (double v : g.values()) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

inline std::string to_pgm(const LayoutMask& m) {
  RealGrid g(m.rows(), m.cols(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = m.grid[i] ? 1.0 : 0.0;
  return to_pgm(g);
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace srf::layout
