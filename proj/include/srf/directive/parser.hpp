#pragma once

// Restricted-English clause grammar for the three directive modes:
//   synthesis  [verb] E1 [R E2 | and E2 R_pair] [P E3]
//   editing    change E1 to|into E2, turn E1 into E2, replace E1 with E2
//   erasing    delete|remove|erase E1

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srf/directive/lexicon.hpp"
#include "srf/directive/types.hpp"
#include "srf/error.hpp"
#include "srf/text.hpp"

namespace srf::directive {

namespace detail {

inline bool in_list(std::string_view w, std::initializer_list<std::string_view> list) {
  return std::find(list.begin(), list.end(), w) != list.end();
}

inline bool is_article(std::string_view w) { return in_list(w, {"a", "an", "the", "some"}); }

inline bool is_function_word(std::string_view w) {
  return in_list(w, {"and", "or", "of", "to", "with", "in", "on", "at", "then", "from",
                     "between", "into", "by", "for", "is", "are", "near", "behind",
                     "among", "while", "but", "it", "its", "them", "they"});
}

inline bool is_synthesis_verb(std::string_view w) {
  return in_list(w, {"add", "put", "place", "draw", "insert", "generate", "paint", "create", "show"});
}

inline bool is_mode_verb(std::string_view w) {
  return is_synthesis_verb(w) ||
         in_list(w, {"change", "turn", "replace", "delete", "remove", "erase"});
}

inline std::string singularize_once(const std::string& w) {
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 10> irregular{{
      {"mice", "mouse"}, {"people", "person"}, {"children", "child"}, {"men", "man"},
      {"women", "woman"}, {"geese", "goose"}, {"teeth", "tooth"}, {"feet", "foot"},
      {"knives", "knife"}, {"buses", "bus"}}};
  for (auto [plural, single] : irregular)
    if (w == plural) return std::string(single);
  if (in_list(w, {"lens", "glass", "bus", "dress", "grass", "cactus", "octopus", "news",
                  "series", "species", "sheep", "fish", "deer", "chess", "gas", "canvas"}))
    return w;
  auto ends = [&](std::string_view suf) {
    return w.size() > suf.size() && std::string_view(w).substr(w.size() - suf.size()) == suf;
  };
  if (ends("ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends("sses") || ends("ches") || ends("shes") || ends("xes") || ends("zes"))
    return w.substr(0, w.size() - 2);
  if (ends("ss") || ends("us") || ends("is")) return w;
  if (ends("s") && w.size() > 2) return w.substr(0, w.size() - 1);
  return w;
}

}  // namespace detail

/// Strips a plural suffix. Applied to a fixed point so singularize(singularize(w)) == singularize(w).
inline std::string singularize(std::string word) {
  for (;;) {
    auto next = detail::singularize_once(word);
    if (next == word) return word;
    word = std::move(next);
  }
}

/// Lowercases, replaces anything but letters, digits, hyphens and apostrophes with spaces.
inline std::vector<std::string> normalize_words(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || ch == '-' || ch == '\'') cleaned += static_cast<char>(std::tolower(u));
    else cleaned += ' ';
  }
  return text::split_words(cleaned);
}

/// Builds an entity from a word span: articles dropped, last word is the noun.
inline Entity make_entity(std::span<const std::string> words, std::string_view slot) {
  std::vector<std::string> kept;
  for (const auto& w : words) {
    if (detail::is_article(w)) continue;
    if (detail::is_function_word(w) || detail::is_mode_verb(w))
      throw Error(ErrorCode::TemplateMismatch,
                  "unexpected word '" + w + "' in " + std::string(slot) + " slot");
    kept.push_back(w);
  }
  if (kept.empty()) throw Error(ErrorCode::EmptyEntity, std::string(slot) + " slot is empty");
  if (kept.size() > 5)
    throw Error(ErrorCode::TemplateMismatch, std::string(slot) + " slot has too many words");
  Entity e;
  e.name = singularize(kept.back());
  kept.pop_back();
  e.attributes = std::move(kept);
  return e;
}

inline Directive parse_directive(std::string_view clause, const Lexicon& lex = Lexicon::builtin()) {
  using Words = std::vector<std::string>;
  const Words words = normalize_words(clause);
  if (words.empty()) throw Error(ErrorCode::TemplateMismatch, "empty clause");
  const std::span<const std::string> all(words);

  // Lexicon matches, longest first at each position, non-overlapping.
  std::vector<Lexicon::Match> matches;
  std::vector<bool> in_match(words.size(), false);
  for (std::size_t i = 0; i < words.size();) {
    if (auto m = lex.match_at(words, i)) {
      matches.push_back(*m);
      for (std::size_t k = i; k < i + m->length; ++k) in_match[k] = true;
      i += m->length;
    } else {
      ++i;
    }
  }

  const std::string& head = words.front();
  if (head == "change" || head == "turn" || head == "replace") {
    if (!matches.empty())
      throw Error(ErrorCode::TemplateMismatch, "editing clause cannot carry relations");
    const auto sep = std::find_if(words.begin() + 1, words.end(), [&](const std::string& w) {
      if (head == "replace") return w == "with";
      if (head == "turn") return w == "into";
      return w == "to" || w == "into";
    });
    if (sep == words.end())
      throw Error(ErrorCode::TemplateMismatch, "editing clause lacks its target separator");
    const auto k = static_cast<std::size_t>(sep - words.begin());
    Editing ed{make_entity(all.subspan(1, k - 1), "source"), make_entity(all.subspan(k + 1), "target")};
    if (ed.source.name == ed.target.name)
      throw Error(ErrorCode::TemplateMismatch, "editing source and target are the same entity");
    return Directive{ed};
  }
  if (head == "delete" || head == "remove" || head == "erase") {
    if (!matches.empty())
      throw Error(ErrorCode::TemplateMismatch, "erasing clause cannot carry relations");
    return Directive{Erasing{make_entity(all.subspan(1), "target")}};
  }

  std::size_t start = 0;
  if (detail::is_synthesis_verb(words[0])) start = 1;
  else if (words.size() > 1 && words[0] == "there" && (words[1] == "is" || words[1] == "are")) start = 2;

  const Lexicon::Match* spatial = nullptr;
  const Lexicon::Match* interact = nullptr;
  for (const auto& m : matches) {
    if (m.begin < start) throw Error(ErrorCode::TemplateMismatch, "relation before subject");
    auto*& slot = m.entry->kind == RelationKind::Spatial ? spatial : interact;
    if (slot) throw Error(ErrorCode::TemplateMismatch, "clause holds more than one relation of a kind");
    slot = &m;
  }
  if (spatial && interact && spatial->begin < interact->begin)
    throw Error(ErrorCode::TemplateMismatch, "position must follow the relation");

  const std::size_t subject_end = interact ? interact->begin : spatial ? spatial->begin : words.size();
  Synthesis syn;
  if (interact) {
    const std::size_t after = interact->begin + interact->length;
    const std::size_t partner_end = spatial ? spatial->begin : words.size();
    if (interact->entry->pair_form) {
      if (after != partner_end)
        throw Error(ErrorCode::TemplateMismatch, "'" + interact->entry->canonical + "' must follow '<a> and <b>'");
      auto pair = all.subspan(start, subject_end - start);
      auto conj = std::find(pair.begin(), pair.end(), "and");
      if (conj == pair.end())
        throw Error(ErrorCode::TemplateMismatch, "'" + interact->entry->canonical + "' needs two entities joined by 'and'");
      const auto c = static_cast<std::size_t>(conj - pair.begin());
      syn.subject = make_entity(pair.subspan(0, c), "subject");
      syn.interaction = Interaction{interact->entry->relation(), make_entity(pair.subspan(c + 1), "partner")};
    } else {
      syn.subject = make_entity(all.subspan(start, subject_end - start), "subject");
      syn.interaction = Interaction{interact->entry->relation(),
                                    make_entity(all.subspan(after, partner_end - after), "partner")};
    }
    if (syn.interaction->partner.name == syn.subject.name)
      throw Error(ErrorCode::TemplateMismatch, "relation partner repeats the subject");
  } else {
    syn.subject = make_entity(all.subspan(start, subject_end - start), "subject");
  }
  if (spatial) {
    const std::size_t after = spatial->begin + spatial->length;
    syn.position = Placement{spatial->entry->relation(), make_entity(all.subspan(after), "anchor")};
  }
  return Directive{syn};
}

/// Template printer; parse_directive(render(d)) == d for parser output.
inline std::string render(const Directive& d, const Lexicon& lex = Lexicon::builtin()) {
  if (auto* e = d.editing()) return "change " + e->source.phrase() + " to " + e->target.phrase();
  if (auto* r = d.erasing()) return "delete " + r->target.phrase();
  const auto& s = *d.synthesis();
  std::string out = s.subject.phrase();
  if (s.interaction) {
    const auto& entry = lex.at(s.interaction->relation.lexeme);
    if (entry.pair_form) out += " and " + s.interaction->partner.phrase() + " " + entry.canonical;
    else out += " " + entry.canonical + " " + s.interaction->partner.phrase();
  }
  if (s.position) out += " " + s.position->relation.lexeme + " " + s.position->anchor.phrase();
  return out;
}

/// Splits a description into clauses. Boundaries: sentence punctuation, "then"
/// (with a preceding "and" or comma), and a comma or "and" directly followed by
/// a mode verb.
inline std::vector<std::string> split_clauses(std::string_view full_text) {
  std::vector<std::string> clauses;
  std::vector<std::string> current;
  auto flush = [&] {
    while (!current.empty() && (current.back() == "," || current.back() == "and")) current.pop_back();
    std::vector<std::string> kept;
    for (auto& w : current)
      if (w != ",") kept.push_back(w);
    if (!kept.empty()) clauses.push_back(text::join(kept, " "));
    current.clear();
  };
  std::string word;
  std::vector<std::string> tokens;
  auto push_word = [&] {
    if (!word.empty()) tokens.push_back(text::lower(word)), word.clear();
  };
  for (char ch : full_text) {
    if (ch == '.' || ch == ';' || ch == '!' || ch == '?' || ch == '\n') {
      push_word();
      tokens.push_back(".");
    } else if (ch == ',') {
      push_word();
      tokens.push_back(",");
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      push_word();
    } else {
      word += ch;
    }
  }
  push_word();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t == ".") {
      flush();
    } else if (t == "then") {
      flush();
    } else if ((t == "," || t == "and") && i + 1 < tokens.size() &&
               (detail::is_mode_verb(tokens[i + 1]) ||
                (tokens[i + 1] == "then"))) {
      flush();
    } else {
      current.push_back(t);
    }
  }
  flush();
  return clauses;
}

inline DirectiveScript decompose(std::string_view full_text, const Lexicon& lex = Lexicon::builtin()) {
  if (text::trim(full_text).empty()) throw Error(ErrorCode::EmptyInput, "description is empty");
  const auto clauses = split_clauses(full_text);
  if (clauses.empty()) throw Error(ErrorCode::EmptyInput, "description has no words");
  DirectiveScript script;
  script.source_text = std::string(text::trim(full_text));
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    try {
      script.directives.push_back(parse_directive(clauses[i], lex));
    } catch (const Error& e) {
      if (clauses.size() == 1)
        throw Error(ErrorCode::Undecomposable,
                    "no clause boundary found and the text matches no template (" + e.detail() + ")");
      throw Error(e.code(), "clause '" + clauses[i] + "': " + e.detail(), i);
    }
  }
  return script;
}

}  // namespace srf::directive
