#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "srf/diffusion/denoiser.hpp"
#include "srf/directive/types.hpp"
#include "srf/layout/report_io.hpp"

namespace srf::engine {

using diffusion::AttentionStack;
using diffusion::TokenId;

enum class ObjectStatus { Alive, Erased, Replaced };

inline const char* to_string(ObjectStatus s) {
  switch (s) {
    case ObjectStatus::Alive: return "alive";
    case ObjectStatus::Erased: return "erased";
    case ObjectStatus::Replaced: return "replaced";
  }
  return "?";
}

/// An entity placed by some stage, with the region it was steered into.
struct ObjectRecord {
  std::string name;
  TokenId token = 0;
  BinaryGrid mask;
  std::optional<layout::BBox> box;
  std::size_t stage = 0;
  ObjectStatus status = ObjectStatus::Alive;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

struct StepRecord {
  int step = 0;  // completed reverse steps, ascending from 1
  int t = 0;     // diffusion timestep the step starts from
  double loss = 0.0;
  std::optional<double> loss_after;  // after the latent response, when applied
  std::string mask_source;           // box | attention | edit | erase | full
  double attention_mass_in_mask = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct StageTrace {
  std::size_t stage = 0;
  directive::Mode mode = directive::Mode::Synthesis;
  std::string directive;
  std::vector<TokenId> stimulated;
  std::vector<StepRecord> steps;
  std::map<TokenId, double> initial_mass;
  std::map<TokenId, double> final_mass;
  std::map<std::string, TokenId> vocabulary;
  AttentionStack final_attention;  // every vocabulary token, at the stage output
  std::vector<ObjectRecord> objects;  // object table after this stage
  BinaryGrid nominal_mask;
  BinaryGrid locality_mask;
  std::size_t locality_violations = 0;
  double max_abs_latent = 0.0;
  std::vector<layout::NamedBox> layout;
  std::string relaxation = "none";

  /// Loss at the first stimulated step and after the last one.
  std::optional<std::pair<double, double>> window_loss() const {
    const StepRecord* first = nullptr;
    const StepRecord* last = nullptr;
    for (const auto& s : steps)
      if (s.loss_after) {
        if (!first) first = &s;
        last = &s;
      }
    if (!first) return std::nullopt;
    return std::pair{first->loss, *last->loss_after};
  }

  friend bool operator==(const StageTrace&, const StageTrace&) = default;
};

namespace detail {

inline nlohmann::json grid_json(const BinaryGrid& g) {
  std::vector<int> v(g.values().begin(), g.values().end());
  return {{"rows", g.rows()}, {"cols", g.cols()}, {"cells", v}};
}

inline BinaryGrid grid_from(const nlohmann::json& j) {
  std::vector<std::uint8_t> v;
  for (const auto& x : j.at("cells")) v.push_back(static_cast<std::uint8_t>(x.get<int>() != 0));
  return BinaryGrid(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(), std::move(v));
}

inline directive::Mode mode_from(const std::string& s) {
  if (s == "synthesis") return directive::Mode::Synthesis;
  if (s == "editing") return directive::Mode::Editing;
  if (s == "erasing") return directive::Mode::Erasing;
  throw Error(ErrorCode::ParseError, "unknown mode '" + s + "' in trace");
}

inline ObjectStatus status_from(const std::string& s) {
  if (s == "alive") return ObjectStatus::Alive;
  if (s == "erased") return ObjectStatus::Erased;
  if (s == "replaced") return ObjectStatus::Replaced;
  throw Error(ErrorCode::ParseError, "unknown object status '" + s + "' in trace");
}

}  // namespace detail

inline nlohmann::json to_json(const StageTrace& tr) {
  using nlohmann::json;
  json steps = json::array();
  for (const auto& s : tr.steps) {
    json r{{"step", s.step},
           {"t", s.t},
           {"loss", s.loss},
           {"mask_source", s.mask_source},
           {"attention_mass_in_mask", s.attention_mass_in_mask}};
    r["loss_after"] = s.loss_after ? json(*s.loss_after) : json(nullptr);
    steps.push_back(std::move(r));
  }
  auto by_token = [](const std::map<TokenId, double>& m) {
    json o = json::object();
    for (const auto& [k, v] : m) o[std::to_string(k)] = v;
    return o;
  };
  json attention = json::object();
  for (const auto& [k, g] : tr.final_attention)
    attention[std::to_string(k)] = {{"rows", g.rows()}, {"cols", g.cols()}, {"logits", g.vector()}};
  json objects = json::array();
  for (const auto& o : tr.objects) {
    json r{{"name", o.name}, {"token", o.token}, {"stage", o.stage}, {"status", to_string(o.status)},
           {"mask", detail::grid_json(o.mask)}};
    r["box"] = o.box ? json{o.box->x0, o.box->y0, o.box->x1, o.box->y1} : json(nullptr);
    objects.push_back(std::move(r));
  }
  json layout = json::array();
  for (const auto& [n, b] : tr.layout) layout.push_back({{"name", n}, {"box", {b.x0, b.y0, b.x1, b.y1}}});
  return json{{"stage", tr.stage},
              {"mode", directive::to_string(tr.mode)},
              {"directive", tr.directive},
              {"stimulated", tr.stimulated},
              {"steps", std::move(steps)},
              {"initial_mass", by_token(tr.initial_mass)},
              {"final_mass", by_token(tr.final_mass)},
              {"vocabulary", tr.vocabulary},
              {"final_attention", std::move(attention)},
              {"objects", std::move(objects)},
              {"nominal_mask", detail::grid_json(tr.nominal_mask)},
              {"locality_mask", detail::grid_json(tr.locality_mask)},
              {"locality_violations", tr.locality_violations},
              {"max_abs_latent", tr.max_abs_latent},
              {"layout", std::move(layout)},
              {"relaxation", tr.relaxation}};
}

inline StageTrace trace_from_json(const nlohmann::json& j) {
  StageTrace tr;
  try {
    tr.stage = j.at("stage").get<std::size_t>();
    tr.mode = detail::mode_from(j.at("mode").get<std::string>());
    tr.directive = j.at("directive").get<std::string>();
    tr.stimulated = j.at("stimulated").get<std::vector<TokenId>>();
    for (const auto& s : j.at("steps")) {
      StepRecord r;
      r.step = s.at("step").get<int>();
      r.t = s.at("t").get<int>();
      r.loss = s.at("loss").get<double>();
      if (!s.at("loss_after").is_null()) r.loss_after = s.at("loss_after").get<double>();
      r.mask_source = s.at("mask_source").get<std::string>();
      r.attention_mass_in_mask = s.at("attention_mass_in_mask").get<double>();
      tr.steps.push_back(std::move(r));
    }
    for (const auto& [k, v] : j.at("initial_mass").items()) tr.initial_mass[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("final_mass").items()) tr.final_mass[std::stoi(k)] = v.get<double>();
    tr.vocabulary = j.at("vocabulary").get<std::map<std::string, TokenId>>();
    for (const auto& [k, v] : j.at("final_attention").items())
      tr.final_attention[std::stoi(k)] = RealGrid(v.at("rows").get<std::size_t>(), v.at("cols").get<std::size_t>(),
                                                  v.at("logits").get<std::vector<double>>());
    for (const auto& o : j.at("objects")) {
      ObjectRecord r;
      r.name = o.at("name").get<std::string>();
      r.token = o.at("token").get<TokenId>();
      r.stage = o.at("stage").get<std::size_t>();
      r.status = detail::status_from(o.at("status").get<std::string>());
      r.mask = detail::grid_from(o.at("mask"));
      if (!o.at("box").is_null()) {
        const auto b = o.at("box").get<std::vector<double>>();
        r.box = layout::BBox{b.at(0), b.at(1), b.at(2), b.at(3)};
      }
      tr.objects.push_back(std::move(r));
    }
    tr.nominal_mask = detail::grid_from(j.at("nominal_mask"));
    tr.locality_mask = detail::grid_from(j.at("locality_mask"));
    tr.locality_violations = j.at("locality_violations").get<std::size_t>();
    tr.max_abs_latent = j.at("max_abs_latent").get<double>();
    for (const auto& l : j.at("layout")) {
      const auto b = l.at("box").get<std::vector<double>>();
      tr.layout.emplace_back(l.at("name").get<std::string>(), layout::BBox{b.at(0), b.at(1), b.at(2), b.at(3)});
    }
    tr.relaxation = j.at("relaxation").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed trace: ") + e.what());
  }
  return tr;
}

inline void save_trace(const std::string& path, const StageTrace& tr) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << to_json(tr).dump(1) << '\n';
}

inline StageTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open trace '" + path + "'");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "trace '" + path + "' is not valid JSON");
  return trace_from_json(j);
}

}  // namespace srf::engine
