#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "srf/layout/constraints.hpp"

namespace srf::layout {

struct SolverOptions {
  std::size_t grid = 32;
  std::size_t max_cycles = 200;
  double tolerance = 1e-4;
  double feasibility_tolerance = 1e-7;
  std::size_t max_branches = 4096;
};

struct Center {
  double x = 0.5, y = 0.5;
};

struct LayoutSolution {
  std::vector<BBox> boxes;
  std::vector<Center> initial;
  double displacement = 0.0;  // squared distance of the stacked centers from `initial`
  std::size_t cycles = 0;
  std::size_t branches = 0;
};

namespace detail {

/// Nearest point of the feasible offset set for an IoU bound between two boxes
/// of fixed size, as a function of the center offset (dx, dy). The set is
/// convex: in the positive quadrant it is {min(mw, Sw-u) * min(mh, Sh-v) >= K}.
inline std::optional<std::array<double, 2>> project_overlap_offset(double dx, double dy, double wi, double hi,
                                                                   double wj, double hj, double theta) {
  const double mw = std::min(wi, wj), mh = std::min(hi, hj);
  const double sw = 0.5 * (wi + wj), sh = 0.5 * (hi + hj);
  const double k = theta * (wi * hi + wj * hj) / (1.0 + theta);
  if (mw * mh < k * (1.0 - 1e-12)) return std::nullopt;
  const double u = std::abs(dx), v = std::abs(dy);
  const double ow = std::min(mw, sw - u), oh = std::min(mh, sh - v);
  if (ow > 0.0 && oh > 0.0 && ow * oh >= k) return std::array{dx, dy};

  std::array<double, 2> best{};
  double best_d = std::numeric_limits<double>::infinity();
  auto consider = [&](double pu, double pv) {
    const double d = (pu - u) * (pu - u) + (pv - v) * (pv - v);
    if (d < best_d) best_d = d, best = {pu, pv};
  };
  consider(sw - k / mh, std::clamp(v, 0.0, sh - mh));
  consider(std::clamp(u, 0.0, sw - mw), sh - k / mw);

  const double lo = k / mh, hi_a = mw;
  auto curve = [&](double a) {
    const double pu = sw - a, pv = sh - k / a;
    return (pu - u) * (pu - u) + (pv - v) * (pv - v);
  };
  if (hi_a > lo) {
    constexpr int samples = 256;
    int arg = 0;
    double fmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= samples; ++i) {
      const double f = curve(lo + (hi_a - lo) * i / samples);
      if (f < fmin) fmin = f, arg = i;
    }
    double a = lo + (hi_a - lo) * std::max(0, arg - 1) / samples;
    double b = lo + (hi_a - lo) * std::min(samples, arg + 1) / samples;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), e = a + g * (b - a);
    for (int it = 0; it < 100 && b - a > 1e-15; ++it) {
      if (curve(c) < curve(e)) b = e;
      else a = c;
      c = b - g * (b - a);
      e = a + g * (b - a);
    }
    const double am = 0.5 * (a + b);
    consider(sw - am, sh - k / am);
  }
  return std::array{std::copysign(best[0], dx == 0.0 ? 1.0 : dx), std::copysign(best[1], dy == 0.0 ? 1.0 : dy)};
}

/// One convex piece acting on the stacked center vector x = (x0, y0, x1, y1, ...).
struct Piece {
  enum class Kind { Bound, PairBound, Disc, PairDisc, OverlapFixed, OverlapPair } kind;
  std::size_t i = 0, j = 0;
  int axis = 0;
  bool greater = true;
  double value = 0.0;  // bound, gap, radius or IoU threshold
  double px = 0.0, py = 0.0, pw = 0.0, ph = 0.0;

  bool greater_ok(double a) const { return greater ? a >= value : a <= value; }

  void project(std::vector<double>& x, const std::vector<BoxVar>& vars) const {
    switch (kind) {
      case Kind::Bound: {
        double& c = x[2 * i + axis];
        c = greater ? std::max(c, value) : std::min(c, value);
        break;
      }
      case Kind::PairBound: {
        double& a = x[2 * i + axis];
        double& b = x[2 * j + axis];
        const double d = a - b;
        const double viol = greater ? value - d : d - value;
        if (viol > 0.0) {
          const double s = greater ? 0.5 * viol : -0.5 * viol;
          a += s;
          b -= s;
        }
        break;
      }
      case Kind::Disc: {
        const double dx = x[2 * i] - px, dy = x[2 * i + 1] - py;
        const double r = std::hypot(dx, dy);
        if (r > value) {
          x[2 * i] = px + dx * value / r;
          x[2 * i + 1] = py + dy * value / r;
        }
        break;
      }
      case Kind::PairDisc: {
        const double dx = x[2 * i] - x[2 * j], dy = x[2 * i + 1] - x[2 * j + 1];
        const double r = std::hypot(dx, dy);
        if (r > value) {
          const double mx = 0.5 * (x[2 * i] + x[2 * j]), my = 0.5 * (x[2 * i + 1] + x[2 * j + 1]);
          const double sx = 0.5 * dx * value / r, sy = 0.5 * dy * value / r;
          x[2 * i] = mx + sx, x[2 * i + 1] = my + sy;
          x[2 * j] = mx - sx, x[2 * j + 1] = my - sy;
        }
        break;
      }
      case Kind::OverlapFixed: {
        const auto p = project_overlap_offset(x[2 * i] - px, x[2 * i + 1] - py, vars[i].width, vars[i].height,
                                              pw, ph, value);
        x[2 * i] = px + (*p)[0];
        x[2 * i + 1] = py + (*p)[1];
        break;
      }
      case Kind::OverlapPair: {
        const double dx = x[2 * i] - x[2 * j], dy = x[2 * i + 1] - x[2 * j + 1];
        const auto p = project_overlap_offset(dx, dy, vars[i].width, vars[i].height, vars[j].width,
                                              vars[j].height, value);
        const double mx = 0.5 * (x[2 * i] + x[2 * j]), my = 0.5 * (x[2 * i + 1] + x[2 * j + 1]);
        x[2 * i] = mx + 0.5 * (*p)[0], x[2 * i + 1] = my + 0.5 * (*p)[1];
        x[2 * j] = mx - 0.5 * (*p)[0], x[2 * j + 1] = my - 0.5 * (*p)[1];
        break;
      }
    }
  }
};

struct Separation {
  std::size_t var;
  Target other;
};

struct Problem {
  std::vector<Piece> base;
  std::vector<Separation> separations;
  bool empty = false;  // some convex piece is empty on its own
};

inline Problem compile(const ConstraintSet& cs, std::span<const BBox> existing, bool with_separation,
                       bool with_proximity) {
  Problem p;
  auto bound = [&](std::size_t v, int axis, bool greater, double value) {
    Piece q{Piece::Kind::Bound};
    q.i = v, q.axis = axis, q.greater = greater, q.value = value;
    p.base.push_back(q);
  };
  for (const auto& c : cs.constraints) {
    if (auto* h = std::get_if<HalfPlane>(&c)) {
      bound(h->var, h->axis == Axis::X ? 0 : 1, h->side == Side::Greater, h->bound);
    } else if (auto* k = std::get_if<Containment>(&c)) {
      const auto& bv = cs.vars[k->var];
      const double lx = k->region.x0 + 0.5 * bv.width, hx = k->region.x1 - 0.5 * bv.width;
      const double ly = k->region.y0 + 0.5 * bv.height, hy = k->region.y1 - 0.5 * bv.height;
      if (lx > hx + 1e-12 || ly > hy + 1e-12) p.empty = true;
      bound(k->var, 0, true, lx);
      bound(k->var, 0, false, hx);
      bound(k->var, 1, true, ly);
      bound(k->var, 1, false, hy);
    } else if (auto* r = std::get_if<Proximity>(&c)) {
      if (!with_proximity) continue;
      if (r->max_distance < 0.0) p.empty = true;
      Piece q{Piece::Kind::Disc};
      q.i = r->var, q.value = r->max_distance;
      if (auto* j = std::get_if<std::size_t>(&r->other)) {
        q.kind = Piece::Kind::PairDisc;
        q.j = *j;
      } else {
        const auto& b = std::get<BBox>(r->other);
        q.px = b.cx(), q.py = b.cy();
      }
      p.base.push_back(q);
    } else if (auto* o = std::get_if<Overlap>(&c)) {
      Piece q{Piece::Kind::OverlapFixed};
      q.i = o->var, q.value = o->min_iou;
      const auto& vi = cs.vars[o->var];
      double w, h;
      if (auto* j = std::get_if<std::size_t>(&o->other)) {
        q.kind = Piece::Kind::OverlapPair;
        q.j = *j;
        w = cs.vars[*j].width, h = cs.vars[*j].height;
      } else {
        const auto& b = std::get<BBox>(o->other);
        q.px = b.cx(), q.py = b.cy(), q.pw = w = b.width(), q.ph = h = b.height();
      }
      if (!project_overlap_offset(0, 0, vi.width, vi.height, w, h, o->min_iou)) p.empty = true;
      p.base.push_back(q);
    } else if (auto* n = std::get_if<NoOverlap>(&c)) {
      if (!with_separation) continue;
      for (const auto& t : n->others) p.separations.push_back({n->var, t});
    }
  }
  if (with_separation)
    for (std::size_t v = 0; v < cs.vars.size(); ++v)
      for (const auto& b : existing) p.separations.push_back({v, b});
  return p;
}

/// Half-plane `side` (0..3: right of, left of, below, above) that separates
/// the box of `s.var` from its partner.
inline Piece separation_piece(const ConstraintSet& cs, const Separation& s, int side) {
  const auto& vi = cs.vars[s.var];
  const int axis = side / 2;
  const bool greater = side % 2 == 0;
  const double own = axis == 0 ? vi.width : vi.height;
  if (auto* j = std::get_if<std::size_t>(&s.other)) {
    const auto& vj = cs.vars[*j];
    Piece q{Piece::Kind::PairBound};
    q.i = s.var, q.j = *j, q.axis = axis, q.greater = greater;
    const double gap = 0.5 * (own + (axis == 0 ? vj.width : vj.height));
    q.value = greater ? gap : -gap;
    return q;
  }
  const auto& b = std::get<BBox>(s.other);
  Piece q{Piece::Kind::Bound};
  q.i = s.var, q.axis = axis, q.greater = greater;
  if (axis == 0) q.value = greater ? b.x1 + 0.5 * own : b.x0 - 0.5 * own;
  else q.value = greater ? b.y1 + 0.5 * own : b.y0 - 0.5 * own;
  return q;
}

inline std::vector<BBox> to_boxes(const ConstraintSet& cs, const std::vector<double>& x) {
  std::vector<BBox> out;
  for (std::size_t v = 0; v < cs.vars.size(); ++v)
    out.push_back(BBox::centered(x[2 * v], x[2 * v + 1], cs.vars[v].width, cs.vars[v].height));
  return out;
}

/// Constraints that involve only variable `v` and fixed boxes.
inline bool unary_ok(const ConstraintSet& cs, std::span<const BBox> existing, std::size_t v, const BBox& box,
                     bool with_separation, bool with_proximity, double tol) {
  auto fixed = [](const Target& t) { return std::holds_alternative<BBox>(t); };
  std::vector<BBox> boxes(cs.vars.size(), box);
  for (const auto& c : cs.constraints) {
    const std::size_t var = std::visit([](const auto& k) { return k.var; }, c);
    if (var != v) continue;
    if (auto* r = std::get_if<Proximity>(&c)) {
      if (!with_proximity || !fixed(r->other)) continue;
    } else if (auto* o = std::get_if<Overlap>(&c)) {
      if (!fixed(o->other)) continue;
    } else if (auto* n = std::get_if<NoOverlap>(&c)) {
      if (!with_separation) continue;
      NoOverlap only_fixed{v, {}, n->origin};
      for (const auto& t : n->others)
        if (fixed(t)) only_fixed.others.push_back(t);
      if (!satisfied(Constraint{only_fixed}, boxes, tol)) return false;
      continue;
    }
    if (!satisfied(c, boxes, tol)) return false;
  }
  if (with_separation)
    for (const auto& b : existing)
      if (!satisfied(Constraint{NoOverlap{v, {b}}}, boxes, tol)) return false;
  return true;
}

}  // namespace detail

/// Centroid of the grid positions of each box that satisfy its single-box
/// constraints, or the canvas center when none do.
inline std::vector<Center> initial_centers(const ConstraintSet& cs, std::span<const BBox> existing,
                                           const SolverOptions& opt = {}, bool with_separation = true,
                                           bool with_proximity = true) {
  std::vector<Center> out;
  const std::size_t g = std::max<std::size_t>(opt.grid, 2);
  for (std::size_t v = 0; v < cs.vars.size(); ++v) {
    const auto& bv = cs.vars[v];
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j) {
        const double cx = 0.5 * bv.width + static_cast<double>(i) * (1.0 - bv.width) / static_cast<double>(g - 1);
        const double cy = 0.5 * bv.height + static_cast<double>(j) * (1.0 - bv.height) / static_cast<double>(g - 1);
        const BBox box = BBox::centered(cx, cy, bv.width, bv.height);
        if (detail::unary_ok(cs, existing, v, box, with_separation, with_proximity, opt.feasibility_tolerance)) {
          sx += cx, sy += cy, ++n;
        }
      }
    out.push_back(n ? Center{sx / static_cast<double>(n), sy / static_cast<double>(n)} : Center{});
  }
  return out;
}

namespace detail {

inline LayoutSolution solve_impl(const ConstraintSet& cs, std::span<const BBox> existing, std::uint64_t seed,
                                 const SolverOptions& opt, bool with_separation, bool with_proximity) {
  cs.validate();
  for (const auto& b : existing) b.validate(0.0);
  const Problem prob = compile(cs, existing, with_separation, with_proximity);
  if (prob.empty) throw Error(ErrorCode::Infeasible, "a constraint has no feasible placement");

  LayoutSolution best;
  best.initial = initial_centers(cs, existing, opt, with_separation, with_proximity);
  std::vector<double> x0;
  for (const auto& c : best.initial) x0.push_back(c.x), x0.push_back(c.y);

  // The full verification set for this relaxation level.
  ConstraintSet check = cs;
  std::erase_if(check.constraints, [&](const Constraint& c) {
    return (!with_separation && std::holds_alternative<NoOverlap>(c)) ||
           (!with_proximity && std::holds_alternative<Proximity>(c));
  });
  auto feasible = [&](const std::vector<double>& x) {
    const auto boxes = to_boxes(cs, x);
    if (!all_satisfied(check, boxes, opt.feasibility_tolerance)) return false;
    if (with_separation)
      for (const auto& b : boxes)
        for (const auto& e : existing) {
          const double w = std::min(b.x1, e.x1) - std::max(b.x0, e.x0);
          const double h = std::min(b.y1, e.y1) - std::max(b.y0, e.y0);
          if (w > opt.feasibility_tolerance && h > opt.feasibility_tolerance) return false;
        }
    return true;
  };

  const std::size_t m = prob.separations.size();
  std::size_t total = 1;
  bool exhaustive = true;
  for (std::size_t i = 0; i < m; ++i) {
    if (total > opt.max_branches / 4) {
      exhaustive = false;
      break;
    }
    total *= 4;
  }

  // Greedy fallback: for each separation keep the side the initial point is closest to.
  std::vector<int> greedy(m, 0);
  if (!exhaustive) {
    for (std::size_t s = 0; s < m; ++s) {
      double best_v = std::numeric_limits<double>::infinity();
      for (int side = 0; side < 4; ++side) {
        auto x = x0;
        separation_piece(cs, prob.separations[s], side).project(x, cs.vars);
        double d = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) d += (x[k] - x0[k]) * (x[k] - x0[k]);
        if (d < best_v) best_v = d, greedy[s] = side;
      }
    }
    total = 1;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> tie_key(total);
  for (auto& k : tie_key) k = rng();

  double best_d = std::numeric_limits<double>::infinity();
  std::uint64_t best_key = 0;
  std::size_t total_cycles = 0;
  std::optional<std::vector<double>> best_x;
  for (std::size_t branch = 0; branch < total; ++branch) {
    std::vector<Piece> pieces = prob.base;
    std::size_t code = branch;
    for (std::size_t s = 0; s < m; ++s) {
      const int side = exhaustive ? static_cast<int>(code % 4) : greedy[s];
      code /= 4;
      pieces.push_back(separation_piece(cs, prob.separations[s], side));
    }

    auto x = x0;
    std::vector<std::vector<double>> inc(pieces.size(), std::vector<double>(x.size(), 0.0));
    for (std::size_t cycle = 0; cycle < opt.max_cycles; ++cycle) {
      ++total_cycles;
      const auto start = x;
      for (std::size_t k = 0; k < pieces.size(); ++k) {
        std::vector<double> y(x.size());
        for (std::size_t q = 0; q < x.size(); ++q) y[q] = x[q] + inc[k][q];
        auto p = y;
        pieces[k].project(p, cs.vars);
        for (std::size_t q = 0; q < x.size(); ++q) inc[k][q] = y[q] - p[q];
        x = std::move(p);
      }
      double moved = 0.0;
      for (std::size_t q = 0; q < x.size(); ++q) moved = std::max(moved, std::abs(x[q] - start[q]));
      if (moved < opt.tolerance) break;
    }
    // Alternating projections from the Dykstra point to land inside the intersection.
    for (std::size_t cycle = 0; cycle < opt.max_cycles && !feasible(x); ++cycle)
      for (const auto& piece : pieces) piece.project(x, cs.vars);
    if (!feasible(x)) continue;

    double d = 0.0;
    for (std::size_t q = 0; q < x.size(); ++q) d += (x[q] - x0[q]) * (x[q] - x0[q]);
    const bool better = d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && tie_key[branch] < best_key);
    if (!best_x || better) {
      best_d = d, best_key = tie_key[branch], best_x = x;
    }
  }
  if (!best_x) throw Error(ErrorCode::Infeasible, "no placement satisfies all constraints");
  best.boxes = to_boxes(cs, *best_x);
  best.displacement = best_d;
  best.cycles = total_cycles;
  best.branches = total;
  return best;
}

}  // namespace detail

/// Box placement with minimal center displacement from the grid-centroid
/// initialization. `existing` boxes must not be overlapped by any new box.
inline LayoutSolution solve_layout(const ConstraintSet& cs, std::span<const BBox> existing = {},
                                   std::uint64_t seed = 0, const SolverOptions& opt = {}) {
  return detail::solve_impl(cs, existing, seed, opt, true, true);
}

enum class Relaxation { None, DroppedSeparation, DroppedProximity };

inline const char* to_string(Relaxation r) {
  switch (r) {
    case Relaxation::None: return "none";
    case Relaxation::DroppedSeparation: return "dropped_separation";
    case Relaxation::DroppedProximity: return "dropped_proximity";
  }
  return "?";
}

struct RelaxedSolution {
  LayoutSolution solution;
  Relaxation relaxation = Relaxation::None;
};

/// Falls back to dropping separation, then proximity, when the full set is infeasible.
inline RelaxedSolution solve_layout_relaxed(const ConstraintSet& cs, std::span<const BBox> existing = {},
                                            std::uint64_t seed = 0, const SolverOptions& opt = {}) {
  try {
    return {detail::solve_impl(cs, existing, seed, opt, true, true), Relaxation::None};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Infeasible) throw;
  }
  try {
    return {detail::solve_impl(cs, existing, seed, opt, false, true), Relaxation::DroppedSeparation};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Infeasible) throw;
  }
  return {detail::solve_impl(cs, existing, seed, opt, false, false), Relaxation::DroppedProximity};
}

}  // namespace srf::layout
