#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "srf/directive/lexicon.hpp"
#include "srf/directive/types.hpp"
#include "srf/layout/bbox.hpp"

namespace srf::layout {

enum class Axis { X, Y };
enum class Side { Less, Greater };

/// Which text descriptor a constraint restates (relation accuracy checks
/// these), or Planner for constraints that only keep the placement well-formed.
enum class Origin { Position, Interaction, Planner };

/// A constraint partner: another box variable (by index) or a fixed box.
using Target = std::variant<std::size_t, BBox>;

struct BoxVar {
  std::string name;
  double width = 0.3;
  double height = 0.3;
};

/// Box center on `axis` lies on `side` of `bound`.
struct HalfPlane {
  std::size_t var = 0;
  Axis axis = Axis::X;
  double bound = 0.5;
  Side side = Side::Greater;
  Origin origin = Origin::Position;
};

/// Center distance at most `max_distance`.
struct Proximity {
  std::size_t var = 0;
  Target other;
  double max_distance = 0.0;
  Origin origin = Origin::Position;
};

/// IoU at least `min_iou`.
struct Overlap {
  std::size_t var = 0;
  Target other;
  double min_iou = 0.3;
  Origin origin = Origin::Position;
};

/// The whole box lies inside `region`.
struct Containment {
  std::size_t var = 0;
  BBox region = BBox::canvas();
  Origin origin = Origin::Planner;
};

/// Zero intersection area with every target (touching is allowed).
struct NoOverlap {
  std::size_t var = 0;
  std::vector<Target> others;
  Origin origin = Origin::Planner;
};

using Constraint = std::variant<HalfPlane, Proximity, Overlap, Containment, NoOverlap>;

struct ConstraintSet {
  std::vector<BoxVar> vars;
  std::vector<Constraint> constraints;

  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < vars.size(); ++i)
      if (vars[i].name == name) return i;
    return std::nullopt;
  }

  void validate() const {
    auto check = [&](std::size_t v) {
      if (v >= vars.size()) throw Error(ErrorCode::InvalidArgument, "constraint references an undeclared box");
    };
    auto check_target = [&](const Target& t) {
      if (auto* i = std::get_if<std::size_t>(&t)) check(*i);
    };
    for (const auto& c : constraints) {
      std::visit([&](const auto& k) { check(k.var); }, c);
      if (auto* p = std::get_if<Proximity>(&c)) check_target(p->other);
      if (auto* o = std::get_if<Overlap>(&c)) check_target(o->other);
      if (auto* n = std::get_if<NoOverlap>(&c))
        for (const auto& t : n->others) check_target(t);
    }
  }
};

inline const BBox& resolve(const Target& t, std::span<const BBox> boxes) {
  if (auto* i = std::get_if<std::size_t>(&t)) return boxes[*i];
  return std::get<BBox>(t);
}

/// Direct predicate evaluation on concrete boxes (one per declared variable).
inline bool satisfied(const Constraint& c, std::span<const BBox> boxes, double tol = 1e-7) {
  return std::visit(
      [&](const auto& k) -> bool {
        using K = std::decay_t<decltype(k)>;
        const BBox& b = boxes[k.var];
        if constexpr (std::is_same_v<K, HalfPlane>) {
          const double v = k.axis == Axis::X ? b.cx() : b.cy();
          return k.side == Side::Greater ? v >= k.bound - tol : v <= k.bound + tol;
        } else if constexpr (std::is_same_v<K, Proximity>) {
          return center_distance(b, resolve(k.other, boxes)) <= k.max_distance + tol;
        } else if constexpr (std::is_same_v<K, Overlap>) {
          return iou(b, resolve(k.other, boxes)) >= k.min_iou - tol;
        } else if constexpr (std::is_same_v<K, Containment>) {
          return contains(k.region, b, tol);
        } else {
          for (const auto& t : k.others) {
            const BBox& o = resolve(t, boxes);
            const double w = std::min(b.x1, o.x1) - std::max(b.x0, o.x0);
            const double h = std::min(b.y1, o.y1) - std::max(b.y0, o.y0);
            if (w > tol && h > tol) return false;
          }
          return true;
        }
      },
      c);
}

inline bool all_satisfied(const ConstraintSet& cs, std::span<const BBox> boxes, double tol = 1e-7) {
  for (const auto& c : cs.constraints)
    if (!satisfied(c, boxes, tol)) return false;
  return true;
}

struct LayoutConfig {
  double proximity_fraction = 0.25;  // of the canvas diagonal
  double wearing_iou = 0.3;
  double size_ratio = 0.3;
  double min_area = kMinBoxArea;
};

namespace detail {

inline void add_geometry(ConstraintSet& cs, std::size_t var, directive::Geometry g, const BBox& anchor,
                         const BBox& canvas, const LayoutConfig& cfg, Origin o) {
  using directive::Geometry;
  const double diag = std::hypot(canvas.width(), canvas.height());
  switch (g) {
    case Geometry::Left: cs.constraints.push_back(HalfPlane{var, Axis::X, anchor.cx(), Side::Less, o}); break;
    case Geometry::Right: cs.constraints.push_back(HalfPlane{var, Axis::X, anchor.cx(), Side::Greater, o}); break;
    case Geometry::Above: cs.constraints.push_back(HalfPlane{var, Axis::Y, anchor.cy(), Side::Less, o}); break;
    case Geometry::Below: cs.constraints.push_back(HalfPlane{var, Axis::Y, anchor.cy(), Side::Greater, o}); break;
    case Geometry::OnTop:
    case Geometry::Under:
      cs.constraints.push_back(
          HalfPlane{var, Axis::Y, anchor.cy(), g == Geometry::OnTop ? Side::Less : Side::Greater, o});
      cs.constraints.push_back(HalfPlane{var, Axis::X, anchor.x0, Side::Greater, o});
      cs.constraints.push_back(HalfPlane{var, Axis::X, anchor.x1, Side::Less, o});
      break;
    case Geometry::Beside:
    case Geometry::Proximity:
      cs.constraints.push_back(Proximity{var, anchor, cfg.proximity_fraction * diag, o});
      cs.constraints.push_back(NoOverlap{var, {anchor}, o});
      break;
    case Geometry::Overlap: cs.constraints.push_back(Overlap{var, anchor, cfg.wearing_iou, o}); break;
  }
}

inline BoxVar sized_var(const std::string& name, const BBox& reference, const LayoutConfig& cfg) {
  double w = cfg.size_ratio * reference.width();
  double h = cfg.size_ratio * reference.height();
  if (w * h < cfg.min_area) {
    const double s = std::sqrt(cfg.min_area / (w * h));
    w = std::min(1.0, w * s);
    h = std::min(1.0, h * s);
  }
  return {name, w, h};
}

}  // namespace detail

/// Box variables and constraints for a synthesis directive. The subject is
/// always a new box; the partner is new unless it already has an anchor box.
inline ConstraintSet relation_to_constraints(const directive::Directive& d,
                                             const std::map<std::string, BBox>& anchors,
                                             const BBox& canvas = BBox::canvas(),
                                             const directive::Lexicon& lex = directive::Lexicon::builtin(),
                                             const LayoutConfig& cfg = {}) {
  const auto* syn = d.synthesis();
  if (!syn) throw Error(ErrorCode::InvalidArgument, "layout constraints apply to synthesis directives only");

  const directive::LexiconEntry* pos_entry = nullptr;
  const BBox* anchor = nullptr;
  if (syn->position) {
    pos_entry = &lex.at(syn->position->relation.lexeme);
    auto it = anchors.find(syn->position->anchor.name);
    if (it == anchors.end())
      throw Error(ErrorCode::MissingAnchor, "no box for anchor '" + syn->position->anchor.name + "'");
    anchor = &it->second;
  }
  const directive::LexiconEntry* rel_entry = nullptr;
  std::optional<BBox> fixed_partner;
  if (syn->interaction) {
    rel_entry = &lex.at(syn->interaction->relation.lexeme);
    if (auto it = anchors.find(syn->interaction->partner.name); it != anchors.end()) fixed_partner = it->second;
  }

  ConstraintSet cs;
  const BBox& reference = anchor ? *anchor : canvas;
  cs.vars.push_back(detail::sized_var(syn->subject.name, reference, cfg));
  if (syn->interaction && !fixed_partner)
    cs.vars.push_back(detail::sized_var(syn->interaction->partner.name, reference, cfg));

  for (std::size_t v = 0; v < cs.vars.size(); ++v) cs.constraints.push_back(Containment{v, canvas});
  if (pos_entry)
    for (std::size_t v = 0; v < cs.vars.size(); ++v)
      detail::add_geometry(cs, v, pos_entry->geometry, *anchor, canvas, cfg, Origin::Position);
  if (rel_entry) {
    const Target partner = fixed_partner ? Target{*fixed_partner} : Target{std::size_t{1}};
    const double diag = std::hypot(canvas.width(), canvas.height());
    switch (rel_entry->geometry) {
      case directive::Geometry::Overlap:
        cs.constraints.push_back(Overlap{0, partner, cfg.wearing_iou, Origin::Interaction});
        break;
      case directive::Geometry::Proximity:
      case directive::Geometry::Beside:
        cs.constraints.push_back(Proximity{0, partner, cfg.proximity_fraction * diag, Origin::Interaction});
        cs.constraints.push_back(NoOverlap{0, {partner}, Origin::Planner});
        break;
      default: {
        // Spatial geometry used as an interaction: relative to the partner box.
        if (!fixed_partner)
          throw Error(ErrorCode::MissingAnchor, "spatial relation needs a placed partner");
        detail::add_geometry(cs, 0, rel_entry->geometry, *fixed_partner, canvas, cfg, Origin::Interaction);
      }
    }
  }
  cs.validate();
  return cs;
}

}  // namespace srf::layout
