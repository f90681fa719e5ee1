#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "srf/directive/types.hpp"
#include "srf/error.hpp"
#include "srf/generated/default_lexicon.hpp"
#include "srf/text.hpp"

namespace srf::directive {

/// What a relation means for layout.
enum class Geometry { Left, Right, Above, Below, OnTop, Under, Beside, Proximity, Overlap };

struct LexiconEntry {
  RelationKind kind = RelationKind::Spatial;
  Geometry geometry = Geometry::Left;
  std::string canonical;
  /// Surface forms as word lists; the canonical form is always first.
  std::vector<std::vector<std::string>> surfaces;
  bool pair_form = false;

  Relation relation() const { return Relation{kind, canonical}; }
};

class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<LexiconEntry> entries) : entries_(std::move(entries)) {}

  /// Parses the lexicon text format (see data/lexicon.txt).
  static Lexicon parse(std::string_view text) {
    std::vector<LexiconEntry> entries;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto body = text::trim(line);
      if (body.empty() || body.front() == '#') continue;
      auto colon = body.find(':');
      if (colon == std::string_view::npos)
        throw Error(ErrorCode::ParseError, "lexicon line lacks ':'", line_no);
      auto head = text::split_words(body.substr(0, colon));
      if (head.size() < 2 || head.size() > 3)
        throw Error(ErrorCode::ParseError, "lexicon header must be '<kind> <geometry> [pair]'", line_no);
      LexiconEntry e;
      if (head[0] == "spatial") e.kind = RelationKind::Spatial;
      else if (head[0] == "interaction") e.kind = RelationKind::Interactional;
      else throw Error(ErrorCode::ParseError, "unknown relation kind '" + head[0] + "'", line_no);
      e.geometry = parse_geometry(head[1], line_no);
      if (head.size() == 3) {
        if (head[2] != "pair") throw Error(ErrorCode::ParseError, "unknown flag '" + head[2] + "'", line_no);
        e.pair_form = true;
      }
      for (auto part : text::split(body.substr(colon + 1), '|')) {
        auto words = text::split_words(part);
        if (words.empty()) throw Error(ErrorCode::ParseError, "empty surface form", line_no);
        e.surfaces.push_back(std::move(words));
      }
      if (e.surfaces.empty()) throw Error(ErrorCode::ParseError, "entry without surface forms", line_no);
      e.canonical = text::join(e.surfaces.front(), " ");
      entries.push_back(std::move(e));
    }
    if (entries.empty()) throw Error(ErrorCode::ParseError, "lexicon is empty");
    return Lexicon(std::move(entries));
  }

  static Lexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open lexicon '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// The lexicon bundled with the library.
  static const Lexicon& builtin() {
    static const Lexicon lex = parse(generated::kDefaultLexicon);
    return lex;
  }

  const std::vector<LexiconEntry>& entries() const noexcept { return entries_; }

  const LexiconEntry* find(std::string_view canonical) const {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const LexiconEntry& e) { return e.canonical == canonical; });
    return it == entries_.end() ? nullptr : &*it;
  }

  const LexiconEntry& at(std::string_view canonical) const {
    if (auto* e = find(canonical)) return *e;
    throw Error(ErrorCode::UnknownRelation, "relation '" + std::string(canonical) + "' is not in the lexicon");
  }

  struct Match {
    std::size_t begin = 0;
    std::size_t length = 0;
    const LexiconEntry* entry = nullptr;
  };

  /// Longest surface form starting at `pos`, if any.
  std::optional<Match> match_at(const std::vector<std::string>& words, std::size_t pos) const {
    std::optional<Match> best;
    for (const auto& e : entries_) {
      for (const auto& s : e.surfaces) {
        if (pos + s.size() > words.size()) continue;
        if (!std::equal(s.begin(), s.end(), words.begin() + static_cast<std::ptrdiff_t>(pos))) continue;
        if (!best || s.size() > best->length) best = Match{pos, s.size(), &e};
      }
    }
    return best;
  }

 private:
  static Geometry parse_geometry(const std::string& g, std::size_t line_no) {
    if (g == "left") return Geometry::Left;
    if (g == "right") return Geometry::Right;
    if (g == "above") return Geometry::Above;
    if (g == "below") return Geometry::Below;
    if (g == "on_top") return Geometry::OnTop;
    if (g == "under") return Geometry::Under;
    if (g == "beside") return Geometry::Beside;
    if (g == "proximity") return Geometry::Proximity;
    if (g == "overlap") return Geometry::Overlap;
    throw Error(ErrorCode::ParseError, "unknown geometry '" + g + "'", line_no);
  }

  std::vector<LexiconEntry> entries_;
};

}  // namespace srf::directive
