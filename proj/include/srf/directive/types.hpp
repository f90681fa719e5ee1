#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace srf::directive {

enum class Mode { Synthesis, Editing, Erasing };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Synthesis: return "synthesis";
    case Mode::Editing: return "editing";
    case Mode::Erasing: return "erasing";
  }
  return "?";
}

struct Entity {
  std::string name;
  std::vector<std::string> attributes;

  /// Attributes followed by the name, space separated.
  std::string phrase() const {
    std::string out;
    for (const auto& a : attributes) out += a + ' ';
    return out + name;
  }

  friend bool operator==(const Entity&, const Entity&) = default;
};

enum class RelationKind { Spatial, Interactional };

struct Relation {
  RelationKind kind = RelationKind::Spatial;
  std::string lexeme;

  friend bool operator==(const Relation&, const Relation&) = default;
};

struct Interaction {
  Relation relation;
  Entity partner;
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct Placement {
  Relation relation;
  Entity anchor;
  friend bool operator==(const Placement&, const Placement&) = default;
};

// "[object 1] [relation] [object 2] [position] [object 3]"
struct Synthesis {
  Entity subject;
  std::optional<Interaction> interaction;
  std::optional<Placement> position;
  friend bool operator==(const Synthesis&, const Synthesis&) = default;
};

struct Editing {
  Entity source;
  Entity target;
  friend bool operator==(const Editing&, const Editing&) = default;
};

struct Erasing {
  Entity target;
  friend bool operator==(const Erasing&, const Erasing&) = default;
};

struct Directive {
  std::variant<Synthesis, Editing, Erasing> body;

  Mode mode() const { return static_cast<Mode>(body.index()); }
  const Synthesis* synthesis() const { return std::get_if<Synthesis>(&body); }
  const Editing* editing() const { return std::get_if<Editing>(&body); }
  const Erasing* erasing() const { return std::get_if<Erasing>(&body); }

  friend bool operator==(const Directive&, const Directive&) = default;
};

struct DirectiveScript {
  std::vector<Directive> directives;
  std::optional<std::string> source_text;

  friend bool operator==(const DirectiveScript& a, const DirectiveScript& b) {
    return a.directives == b.directives;
  }
};

/// Entity names a directive introduces or touches, in template order.
inline std::vector<std::string> entity_names(const Directive& d) {
  std::vector<std::string> out;
  if (auto* s = d.synthesis()) {
    out.push_back(s->subject.name);
    if (s->interaction) out.push_back(s->interaction->partner.name);
    if (s->position) out.push_back(s->position->anchor.name);
  } else if (auto* e = d.editing()) {
    out.push_back(e->source.name);
    out.push_back(e->target.name);
  } else if (auto* r = d.erasing()) {
    out.push_back(r->target.name);
  }
  return out;
}

}  // namespace srf::directive
