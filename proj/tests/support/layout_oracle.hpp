#pragma once

// Exhaustive reference for the layout solver: every box is tried at every
// position of a 32x32 candidate grid and the feasible combination closest to
// the grid-centroid start wins.

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "srf/layout/solver.hpp"

namespace srf::oracle {

using layout::BBox;
using layout::Constraint;
using layout::ConstraintSet;

struct LayoutInstance {
  ConstraintSet cs;
  std::vector<BBox> existing;
  bool contradictory = false;
};

struct GridOptimum {
  std::vector<BBox> boxes;
  std::vector<std::pair<double, double>> start;
  double displacement = 0.0;
  double step = 0.0;
};

inline double grid_coord(double size, std::size_t i, std::size_t g) {
  return 0.5 * size + static_cast<double>(i) * (1.0 - size) / static_cast<double>(g - 1);
}

inline bool touches_only(const Constraint& c, std::size_t v) {
  auto fixed = [](const layout::Target& t) { return std::holds_alternative<BBox>(t); };
  if (auto* p = std::get_if<layout::Proximity>(&c)) return p->var == v && fixed(p->other);
  if (auto* o = std::get_if<layout::Overlap>(&c)) return o->var == v && fixed(o->other);
  if (auto* n = std::get_if<layout::NoOverlap>(&c)) {
    if (n->var != v) return false;
    for (const auto& t : n->others)
      if (!fixed(t)) return false;
    return true;
  }
  return std::visit([&](const auto& k) { return k.var == v; }, c);
}

inline bool clear_of(const BBox& b, const std::vector<BBox>& existing, double tol) {
  for (const auto& e : existing) {
    const double w = std::min(b.x1, e.x1) - std::max(b.x0, e.x0);
    const double h = std::min(b.y1, e.y1) - std::max(b.y0, e.y0);
    if (w > tol && h > tol) return false;
  }
  return true;
}

/// Grid positions of box `v` passing its single-box constraints. NoOverlap
/// lists that mix box variables and fixed boxes are checked on the fixed part.
inline std::vector<BBox> unary_candidates(const LayoutInstance& inst, std::size_t v, std::size_t g, double tol) {
  const auto& bv = inst.cs.vars[v];
  std::vector<BBox> out;
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      const BBox b = BBox::centered(grid_coord(bv.width, i, g), grid_coord(bv.height, j, g), bv.width, bv.height);
      std::vector<BBox> boxes(inst.cs.vars.size(), b);
      bool ok = clear_of(b, inst.existing, tol);
      for (const auto& c : inst.cs.constraints) {
        if (!ok) break;
        if (auto* n = std::get_if<layout::NoOverlap>(&c); n && n->var == v) {
          for (const auto& t : n->others)
            if (auto* fb = std::get_if<BBox>(&t)) ok = ok && clear_of(b, {*fb}, tol);
          continue;
        }
        if (touches_only(c, v)) ok = layout::satisfied(c, boxes, tol);
      }
      if (ok) out.push_back(b);
    }
  return out;
}

inline std::optional<GridOptimum> brute_force(const LayoutInstance& inst, std::size_t g = 32, double tol = 1e-7) {
  const std::size_t n = inst.cs.vars.size();
  std::vector<std::vector<BBox>> cand(n);
  GridOptimum best;
  best.step = 1.0 / static_cast<double>(g - 1);
  for (std::size_t v = 0; v < n; ++v) {
    cand[v] = unary_candidates(inst, v, g, tol);
    double sx = 0.0, sy = 0.0;
    for (const auto& b : cand[v]) sx += b.cx(), sy += b.cy();
    best.start.emplace_back(cand[v].empty() ? 0.5 : sx / cand[v].size(), cand[v].empty() ? 0.5 : sy / cand[v].size());
  }
  double best_d = std::numeric_limits<double>::infinity();
  std::vector<BBox> cur(n);
  std::vector<std::size_t> idx(n, 0);
  for (const auto& c : cand)
    if (c.empty()) return std::nullopt;
  for (;;) {
    double d = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      cur[v] = cand[v][idx[v]];
      d += std::pow(cur[v].cx() - best.start[v].first, 2) + std::pow(cur[v].cy() - best.start[v].second, 2);
    }
    if (d < best_d && layout::all_satisfied(inst.cs, cur, tol)) best_d = d, best.boxes = cur;
    std::size_t v = 0;
    while (v < n && ++idx[v] == cand[v].size()) idx[v++] = 0;
    if (v == n) break;
  }
  if (best.boxes.empty()) return std::nullopt;
  best.displacement = best_d;
  return best;
}

/// Random one- or two-box instance; about one in ten carries a contradiction.
inline LayoutInstance random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto coin = [&](double p) { return u(rng) < p; };
  LayoutInstance inst;
  auto& cs = inst.cs;
  const std::size_t n = coin(0.4) ? 2 : 1;
  for (std::size_t v = 0; v < n; ++v) cs.vars.push_back({"b" + std::to_string(v), 0.1 + 0.3 * u(rng), 0.1 + 0.3 * u(rng)});
  for (std::size_t v = 0; v < n; ++v) cs.constraints.push_back(layout::Containment{v, BBox::canvas()});
  for (std::size_t v = 0; v < n; ++v)
    if (coin(0.7)) {
      const auto axis = coin(0.5) ? layout::Axis::X : layout::Axis::Y;
      const auto side = coin(0.5) ? layout::Side::Greater : layout::Side::Less;
      cs.constraints.push_back(layout::HalfPlane{v, axis, 0.3 + 0.4 * u(rng), side});
    }
  const BBox anchor = BBox::centered(0.25 + 0.5 * u(rng), 0.25 + 0.5 * u(rng), 0.15 + 0.2 * u(rng), 0.15 + 0.2 * u(rng));
  const double r = u(rng);
  if (r < 0.35) {
    cs.constraints.push_back(layout::Proximity{0, anchor, 0.25 + 0.25 * u(rng)});
    cs.constraints.push_back(layout::NoOverlap{0, {anchor}});
  } else if (r < 0.6) {
    cs.constraints.push_back(layout::Overlap{0, anchor, 0.1 + 0.2 * u(rng)});
  } else if (r < 0.75) {
    cs.constraints.push_back(layout::Proximity{0, anchor, 0.3 + 0.3 * u(rng)});
  }
  if (n == 2) {
    if (coin(0.5)) {
      cs.constraints.push_back(layout::Proximity{0, std::size_t{1}, 0.3 + 0.2 * u(rng)});
      cs.constraints.push_back(layout::NoOverlap{0, {std::size_t{1}}});
    } else {
      cs.constraints.push_back(layout::NoOverlap{1, {std::size_t{0}}});
    }
  }
  if (coin(0.3)) inst.existing.push_back(BBox::centered(0.15 + 0.7 * u(rng), 0.15 + 0.7 * u(rng), 0.12, 0.12));
  if (coin(0.1)) {
    inst.contradictory = true;
    cs.constraints.push_back(layout::HalfPlane{0, layout::Axis::X, 0.3, layout::Side::Less});
    cs.constraints.push_back(layout::HalfPlane{0, layout::Axis::X, 0.7, layout::Side::Greater});
  }
  return inst;
}

enum class OracleVerdict { Match, Mismatch, InvalidOutput, Infeasible, MissedInfeasible, UnexpectedInfeasible };

struct OracleComparison {
  OracleVerdict verdict = OracleVerdict::Mismatch;
  bool grid_feasible = false;
  double solver_distance = 0.0;
  double grid_distance = 0.0;
};

/// The solver matches when its displacement is no larger than the best grid
/// candidate's and smaller by at most one cell diagonal per box, starting from
/// the same centroid.
inline OracleComparison compare_with_grid(const LayoutInstance& inst, std::uint64_t seed = 0) {
  OracleComparison out;
  const auto grid = brute_force(inst);
  out.grid_feasible = grid.has_value();
  layout::LayoutSolution sol;
  try {
    sol = layout::solve_layout(inst.cs, inst.existing, seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Infeasible) throw;
    out.verdict = (inst.contradictory || !grid) ? OracleVerdict::Infeasible : OracleVerdict::UnexpectedInfeasible;
    return out;
  }
  if (!layout::all_satisfied(inst.cs, sol.boxes, 1e-7)) return out.verdict = OracleVerdict::InvalidOutput, out;
  for (const auto& b : sol.boxes)
    if (!clear_of(b, inst.existing, 1e-7)) return out.verdict = OracleVerdict::InvalidOutput, out;
  if (inst.contradictory) return out.verdict = OracleVerdict::MissedInfeasible, out;
  if (!grid) return out.verdict = OracleVerdict::Match, out;
  double d = 0.0;
  for (std::size_t v = 0; v < sol.boxes.size(); ++v)
    d += std::pow(sol.boxes[v].cx() - grid->start[v].first, 2) + std::pow(sol.boxes[v].cy() - grid->start[v].second, 2);
  out.solver_distance = std::sqrt(d);
  out.grid_distance = std::sqrt(grid->displacement);
  const double slack = grid->step * std::sqrt(2.0 * static_cast<double>(sol.boxes.size()));
  const bool ok = out.solver_distance <= out.grid_distance + 1e-6 && out.grid_distance - out.solver_distance <= slack;
  out.verdict = ok ? OracleVerdict::Match : OracleVerdict::Mismatch;
  return out;
}

}  // namespace srf::oracle
