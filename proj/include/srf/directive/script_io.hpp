#pragma once

// Directive-script files, one directive per line:
//   add: <subject> [| rel=<lexeme> partner=<entity>] [| pos=<lexeme> anchor=<entity>]
//   edit: <source> -> <target>
//   erase: <target>
// '#' starts a comment line.

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "srf/directive/lexicon.hpp"
#include "srf/directive/types.hpp"
#include "srf/error.hpp"
#include "srf/text.hpp"

namespace srf::directive {

namespace detail {

inline Entity script_entity(std::string_view phrase, std::size_t line_no) {
  auto words = text::split_words(phrase);
  if (words.empty()) throw Error(ErrorCode::ParseError, "empty entity", line_no);
  for (const auto& w : words)
    if (w.find_first_of("|=>") != std::string::npos)
      throw Error(ErrorCode::ParseError, "entity word '" + w + "' contains a reserved character", line_no);
  Entity e;
  e.name = words.back();
  words.pop_back();
  e.attributes = std::move(words);
  return e;
}

}  // namespace detail

inline std::string format_directive(const Directive& d) {
  if (auto* e = d.editing()) return "edit: " + e->source.phrase() + " -> " + e->target.phrase();
  if (auto* r = d.erasing()) return "erase: " + r->target.phrase();
  const auto& s = *d.synthesis();
  std::string out = "add: " + s.subject.phrase();
  if (s.interaction)
    out += " | rel=" + s.interaction->relation.lexeme + " partner=" + s.interaction->partner.phrase();
  if (s.position)
    out += " | pos=" + s.position->relation.lexeme + " anchor=" + s.position->anchor.phrase();
  return out;
}

inline Directive parse_script_line(std::string_view line, std::size_t line_no,
                                   const Lexicon& lex = Lexicon::builtin()) {
  auto body = text::trim(line);
  if (text::starts_with(body, "erase:"))
    return Directive{Erasing{detail::script_entity(body.substr(6), line_no)}};
  if (text::starts_with(body, "edit:")) {
    auto rest = body.substr(5);
    auto arrow = rest.find("->");
    if (arrow == std::string_view::npos) throw Error(ErrorCode::ParseError, "edit line lacks '->'", line_no);
    Editing ed{detail::script_entity(rest.substr(0, arrow), line_no),
               detail::script_entity(rest.substr(arrow + 2), line_no)};
    if (ed.source.name == ed.target.name)
      throw Error(ErrorCode::ParseError, "edit source and target are the same entity", line_no);
    return Directive{ed};
  }
  if (!text::starts_with(body, "add:"))
    throw Error(ErrorCode::ParseError, "line must start with 'add:', 'edit:' or 'erase:'", line_no);

  auto segments = text::split(body.substr(4), '|');
  Synthesis syn;
  syn.subject = detail::script_entity(segments.front(), line_no);
  for (std::size_t i = 1; i < segments.size(); ++i) {
    auto seg = text::trim(segments[i]);
    const bool is_rel = text::starts_with(seg, "rel=");
    const bool is_pos = text::starts_with(seg, "pos=");
    if (!is_rel && !is_pos) throw Error(ErrorCode::ParseError, "segment must start with rel= or pos=", line_no);
    const std::string_view key = is_rel ? " partner=" : " anchor=";
    auto split_at = seg.find(key);
    if (split_at == std::string_view::npos)
      throw Error(ErrorCode::ParseError, "segment lacks '" + std::string(text::trim(key)) + "'", line_no);
    const std::string lexeme(text::trim(seg.substr(4, split_at - 4)));
    const auto* entry = lex.find(lexeme);
    if (!entry) throw Error(ErrorCode::ParseError, "unknown relation '" + lexeme + "'", line_no);
    auto entity = detail::script_entity(seg.substr(split_at + key.size()), line_no);
    if (is_rel) {
      if (entry->kind != RelationKind::Interactional || syn.interaction || syn.position)
        throw Error(ErrorCode::ParseError, "misplaced rel= segment", line_no);
      syn.interaction = Interaction{entry->relation(), std::move(entity)};
    } else {
      if (entry->kind != RelationKind::Spatial || syn.position)
        throw Error(ErrorCode::ParseError, "misplaced pos= segment", line_no);
      syn.position = Placement{entry->relation(), std::move(entity)};
    }
  }
  return Directive{syn};
}

inline DirectiveScript parse_script(std::string_view content, const Lexicon& lex = Lexicon::builtin()) {
  DirectiveScript script;
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    auto body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    script.directives.push_back(parse_script_line(body, line_no, lex));
  }
  if (script.directives.empty()) throw Error(ErrorCode::ParseError, "script holds no directives", line_no);
  return script;
}

inline std::string format_script(const DirectiveScript& script) {
  std::string out;
  if (script.source_text) {
    for (auto line : text::split(*script.source_text, '\n')) out += "# source: " + std::string(line) + "\n";
  }
  for (const auto& d : script.directives) out += format_directive(d) + "\n";
  return out;
}

inline DirectiveScript load_script(const std::string& path, const Lexicon& lex = Lexicon::builtin()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open script '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_script(ss.str(), lex);
}

inline void save_script(const DirectiveScript& script, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write script '" + path + "'");
  out << format_script(script);
}

}  // namespace srf::directive
