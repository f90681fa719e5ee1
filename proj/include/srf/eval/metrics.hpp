#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "srf/engine/trace.hpp"
#include "srf/layout/constraints.hpp"

namespace srf::eval {

using engine::ObjectRecord;
using engine::ObjectStatus;
using engine::TokenId;

struct ObjectOutcome {
  std::string name;
  double mass = 0.0;
  bool success = false;
  ObjectStatus status = ObjectStatus::Alive;
};

struct RelationOutcome {
  std::string descriptor;  // "position" or "interaction"
  bool satisfied = false;
};

struct DirectiveRecord {
  std::size_t stage = 0;
  directive::Mode mode = directive::Mode::Synthesis;
  std::vector<ObjectOutcome> objects;
  std::vector<RelationOutcome> relations;
  bool evaluated = true;  // false when the stage never completed
};

struct MetricReport {
  std::size_t objects_total = 0, objects_found = 0;
  std::size_t relations_total = 0, relations_satisfied = 0;
  std::vector<DirectiveRecord> records;

  double object_recall() const {
    if (objects_total == 0) throw Error(ErrorCode::EmptyInput, "no objects to score");
    return static_cast<double>(objects_found) / static_cast<double>(objects_total);
  }
  std::optional<double> relation_accuracy() const {
    if (relations_total == 0) return std::nullopt;
    return static_cast<double>(relations_satisfied) / static_cast<double>(relations_total);
  }
  void merge(const MetricReport& o) {
    objects_total += o.objects_total;
    objects_found += o.objects_found;
    relations_total += o.relations_total;
    relations_satisfied += o.relations_satisfied;
    records.insert(records.end(), o.records.begin(), o.records.end());
  }
};

/// Fraction of living objects whose final attention mass inside their mask
/// reaches `threshold`.
inline double object_recall(const engine::AttentionStack& final_attention, const std::vector<ObjectRecord>& objects,
                            double threshold = 0.5) {
  std::size_t total = 0, found = 0;
  for (const auto& o : objects) {
    if (o.status != ObjectStatus::Alive) continue;
    ++total;
    if (mass_in(softmax(final_attention.at(o.token).values()), o.mask) >= threshold) ++found;
  }
  if (total == 0) throw Error(ErrorCode::EmptyInput, "no objects to score");
  return static_cast<double>(found) / static_cast<double>(total);
}

/// Box spanned by a softmaxed attention map: centroid ± √3σ per axis (the
/// extent of a uniform box with that variance), clamped to the canvas.
inline layout::BBox detected_box(const RealGrid& logits) {
  const auto p = softmax(logits.values());
  const std::size_t h = logits.rows(), w = logits.cols();
  double mx = 0, my = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      mx += p[r * w + c] * (static_cast<double>(c) + 0.5) / static_cast<double>(w);
      my += p[r * w + c] * (static_cast<double>(r) + 0.5) / static_cast<double>(h);
    }
  double vx = 0, vy = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double dx = (static_cast<double>(c) + 0.5) / static_cast<double>(w) - mx;
      const double dy = (static_cast<double>(r) + 0.5) / static_cast<double>(h) - my;
      vx += p[r * w + c] * dx * dx;
      vy += p[r * w + c] * dy * dy;
    }
  const double hx = std::sqrt(3.0 * vx), hy = std::sqrt(3.0 * vy);
  return {std::max(0.0, mx - hx), std::max(0.0, my - hy), std::min(1.0, mx + hx), std::min(1.0, my + hy)};
}

/// Relation outcomes of one synthesis directive on final boxes. Returns
/// nothing when an entity it names no longer exists.
inline std::optional<std::vector<RelationOutcome>> evaluate_relations(
    const directive::Directive& d, const std::map<std::string, layout::BBox>& boxes,
    const std::set<std::string>& gone, const directive::Lexicon& lex, const layout::LayoutConfig& cfg) {
  const auto* syn = d.synthesis();
  if (!syn || (!syn->interaction && !syn->position)) return std::vector<RelationOutcome>{};
  std::vector<std::string> own{syn->subject.name};
  if (syn->interaction) own.push_back(syn->interaction->partner.name);
  std::vector<std::string> needed = own;
  if (syn->position) needed.push_back(syn->position->anchor.name);
  for (const auto& n : needed)
    if (!boxes.count(n)) {
      if (gone.count(n)) return std::nullopt;
      throw Error(ErrorCode::MissingLayout, "no final box for '" + n + "'");
    }

  // The subject is always a variable; the partner too unless it had a box
  // before this directive. Either way its final box is what gets scored.
  auto anchors = boxes;
  anchors.erase(syn->subject.name);
  if (syn->interaction) anchors.erase(syn->interaction->partner.name);
  layout::ConstraintSet cs;
  try {
    cs = layout::relation_to_constraints(d, anchors, layout::BBox::canvas(), lex, cfg);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MissingAnchor) throw Error(ErrorCode::MissingLayout, e.detail());
    throw;
  }
  std::vector<layout::BBox> vars;
  for (const auto& v : cs.vars) vars.push_back(boxes.at(v.name));

  std::vector<RelationOutcome> out;
  for (auto [origin, label] : {std::pair{layout::Origin::Interaction, "interaction"},
                               std::pair{layout::Origin::Position, "position"}}) {
    if (origin == layout::Origin::Interaction && !syn->interaction) continue;
    if (origin == layout::Origin::Position && !syn->position) continue;
    bool ok = true;
    for (const auto& c : cs.constraints) {
      const auto o = std::visit([](const auto& k) { return k.origin; }, c);
      if (o == origin && !layout::satisfied(c, vars, 1e-9)) ok = false;
    }
    out.push_back({label, ok});
  }
  return out;
}

/// Scores a finished script from the last stage's trace. Boxes of living
/// objects are detected from the final attention; scene anchors keep their
/// given boxes.
inline MetricReport evaluate(const directive::DirectiveScript& script, const engine::StageTrace& last,
                             const std::map<std::string, layout::BBox>& scene_anchors, double threshold = 0.5,
                             const directive::Lexicon& lex = directive::Lexicon::builtin(),
                             const layout::LayoutConfig& cfg = {}) {
  if (script.directives.empty()) throw Error(ErrorCode::EmptyInput, "script has no directives");
  MetricReport rep;
  std::map<std::string, layout::BBox> boxes = scene_anchors;
  std::set<std::string> gone;
  for (const auto& o : last.objects) {
    if (o.status == ObjectStatus::Alive) boxes[o.name] = detected_box(last.final_attention.at(o.token));
  }
  for (const auto& o : last.objects)
    if (o.status != ObjectStatus::Alive && !boxes.count(o.name)) gone.insert(o.name);

  for (std::size_t i = 0; i < script.directives.size(); ++i) {
    const auto& d = script.directives[i];
    DirectiveRecord rec;
    rec.stage = i;
    rec.mode = d.mode();
    for (const auto& o : last.objects) {
      if (o.stage != i) continue;
      const double m = mass_in(softmax(last.final_attention.at(o.token).values()), o.mask);
      if (o.status == ObjectStatus::Alive) {
        rec.objects.push_back({o.name, m, m >= threshold, o.status});
        ++rep.objects_total;
        rep.objects_found += m >= threshold;
      } else if (d.synthesis() || d.editing()) {
        rec.objects.push_back({o.name, m, false, o.status});
      }
    }
    if (const auto* er = d.erasing()) {
      const TokenId k = last.vocabulary.at(er->target.name);
      BinaryGrid region;
      for (const auto& o : last.objects)
        if (o.name == er->target.name && o.status == ObjectStatus::Erased) region = o.mask;
      if (!region.empty()) {
        const double m = mass_in(softmax(last.final_attention.at(k).values()), region);
        rec.objects.push_back({er->target.name, m, m < threshold, ObjectStatus::Erased});
      }
    }
    if (auto rel = evaluate_relations(d, boxes, gone, lex, cfg)) {
      // Only relations whose subject is still the object this stage placed.
      bool current = true;
      if (const auto* syn = d.synthesis()) {
        current = false;
        for (const auto& o : last.objects)
          if (o.stage == i && o.name == syn->subject.name && o.status == ObjectStatus::Alive) current = true;
      }
      if (current)
        for (const auto& r : *rel) {
          rec.relations.push_back(r);
          ++rep.relations_total;
          rep.relations_satisfied += r.satisfied;
        }
    }
    rep.records.push_back(std::move(rec));
  }
  return rep;
}

}  // namespace srf::eval
