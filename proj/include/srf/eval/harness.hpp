#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "srf/config.hpp"
#include "srf/diffusion/latent_io.hpp"
#include "srf/eval/metrics.hpp"

namespace srf::eval {

/// A fixed set of scripts run over a fixed seed list.
///
///   config = base.conf          (optional, relative to the suite file)
///   anchors = anchors.txt       (optional scene boxes)
///   background = noise          (seeded per run, or a latent file)
///   seeds = 0-49                (range or comma list)
///   script = scripts/a.txt      (repeatable)
struct Suite {
  RunConfig config;
  std::map<std::string, layout::BBox> anchors;
  std::vector<layout::NamedBox> anchor_list;
  std::string background = "noise";
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> script_names;
  std::vector<directive::DirectiveScript> scripts;
};

inline std::vector<std::uint64_t> parse_seeds(std::string_view v) {
  std::vector<std::uint64_t> out;
  for (auto part : text::split(v, ',')) {
    part = text::trim(part);
    if (part.empty()) continue;
    const auto dash = part.find('-');
    auto num = [](std::string_view s) { return config_detail::parse_number<std::uint64_t>(text::trim(s), "seeds", 0); };
    if (dash == std::string_view::npos) {
      out.push_back(num(part));
    } else {
      const auto lo = num(part.substr(0, dash)), hi = num(part.substr(dash + 1));
      if (hi < lo) throw Error(ErrorCode::InvalidArgument, "seed range is reversed");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "suite has no seeds");
  return out;
}

inline Suite load_suite(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open suite '" + path + "'");
  const fs::path dir = fs::path(path).parent_path();
  auto rel = [&](std::string_view v) { return (dir / std::string(v)).string(); };
  Suite s;
  std::string raw;
  std::size_t line = 0;
  std::vector<std::string> script_paths;
  while (std::getline(in, raw)) {
    ++line;
    auto t = text::trim(raw);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ParseError, "expected 'key = value'", line);
    const auto key = text::trim(t.substr(0, eq));
    const auto value = text::trim(t.substr(eq + 1));
    if (key == "config") s.config = load_config(rel(value));
    else if (key == "anchors") s.anchor_list = layout::load_boxes(rel(value));
    else if (key == "background") s.background = value == "noise" ? std::string("noise") : rel(value);
    else if (key == "seeds") s.seeds = parse_seeds(value);
    else if (key == "script") script_paths.push_back(std::string(value));
    else throw Error(ErrorCode::ParseError, "unknown suite key '" + std::string(key) + "'", line);
  }
  if (s.seeds.empty()) throw Error(ErrorCode::EmptyInput, "suite has no seeds");
  if (script_paths.empty()) throw Error(ErrorCode::EmptyInput, "suite has no scripts");
  s.anchors = layout::to_map(s.anchor_list);
  for (const auto& p : script_paths) {
    s.script_names.push_back(p);
    s.scripts.push_back(directive::load_script(rel(p)));
  }
  return s;
}

struct RunOutcome {
  std::size_t script = 0;
  std::uint64_t seed = 0;
  MetricReport report;
  std::optional<engine::StageFailure> failure;
  bool degraded = false;
  double max_abs_latent = 0.0;
  std::size_t locality_violations = 0;  // summed over stages
  std::vector<engine::StageTrace> traces;
};

namespace detail {

/// Objects and relation descriptors a script would be scored on, for runs
/// that stopped early (all of them count as misses).
inline MetricReport missed(const directive::DirectiveScript& script) {
  std::map<std::string, std::size_t> alive;  // name -> stage
  for (std::size_t i = 0; i < script.directives.size(); ++i) {
    const auto& d = script.directives[i];
    if (auto* s = d.synthesis()) {
      alive[s->subject.name] = i;
      if (s->interaction && !alive.count(s->interaction->partner.name)) alive[s->interaction->partner.name] = i;
    } else if (auto* e = d.editing()) {
      alive.erase(e->source.name);
      alive[e->target.name] = i;
    } else {
      alive.erase(d.erasing()->target.name);
    }
  }
  MetricReport rep;
  rep.objects_total = alive.size();
  for (std::size_t i = 0; i < script.directives.size(); ++i)
    if (auto* s = script.directives[i].synthesis()) {
      auto it = alive.find(s->subject.name);
      if (it == alive.end() || it->second != i) continue;
      rep.relations_total += (s->interaction ? 1 : 0) + (s->position ? 1 : 0);
    }
  return rep;
}

}  // namespace detail

/// One script on one seed.
inline RunOutcome run_one(const Suite& suite, const RunConfig& cfg, std::size_t script_index, std::uint64_t seed,
                          bool keep_traces = false) {
  RunConfig c = cfg;
  c.seed = seed;
  std::optional<directive::Lexicon> lex;
  if (!c.lexicon.empty()) lex = directive::Lexicon::load(c.lexicon);
  const auto& lexicon = lex ? *lex : directive::Lexicon::builtin();
  const auto pipeline = make_pipeline(c, &lexicon);
  const auto sched = make_schedule(c);
  auto den = make_denoiser(c);
  const auto background = suite.background == "noise" ? noise_background(c, seed) : diffusion::load_latent(suite.background);
  const auto& script = suite.scripts.at(script_index);

  RunOutcome out;
  out.script = script_index;
  out.seed = seed;
  auto r = engine::run_progressive(background, script, *den, sched, pipeline, suite.anchors);
  out.failure = r.failure;
  for (const auto& t : r.traces) out.locality_violations += t.locality_violations;
  if (r.failure) {
    if (r.failure->code != ErrorCode::NonFiniteGradient) throw Error(r.failure->code, r.failure->message, r.failure->stage);
    out.report = detail::missed(script);
    out.degraded = true;
  } else {
    out.report = evaluate(script, r.traces.back(), suite.anchors, c.recall_threshold, lexicon, pipeline.layout);
    out.max_abs_latent = r.final_latent().max_abs();
    out.degraded = !(out.max_abs_latent <= c.degradation_threshold);
  }
  if (keep_traces) out.traces = std::move(r.traces);
  return out;
}

/// Every (script, seed) pair, in script-major order, on up to `jobs` threads.
inline std::vector<RunOutcome> run_suite(const Suite& suite, const RunConfig& cfg, unsigned jobs = 1,
                                         bool keep_traces = false) {
  std::vector<std::pair<std::size_t, std::uint64_t>> work;
  for (std::size_t s = 0; s < suite.scripts.size(); ++s)
    for (auto seed : suite.seeds) work.emplace_back(s, seed);
  std::vector<std::optional<RunOutcome>> results(work.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      try {
        results[i] = run_one(suite, cfg, work[i].first, work[i].second, keep_traces);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        next = work.size();
        return;
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(work.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  std::vector<RunOutcome> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

struct SuiteMetrics {
  std::string label;
  MetricReport report;
  std::size_t runs = 0;
  std::size_t degraded = 0;
  std::size_t nonfinite = 0;
  std::size_t locality_violations = 0;
  std::vector<std::uint64_t> seeds;

  double object_recall() const { return report.object_recall(); }
  std::optional<double> relation_accuracy() const { return report.relation_accuracy(); }
  double degradation_rate() const { return runs ? static_cast<double>(degraded) / static_cast<double>(runs) : 0.0; }
  double nonfinite_rate() const { return runs ? static_cast<double>(nonfinite) / static_cast<double>(runs) : 0.0; }
};

inline SuiteMetrics aggregate(std::string label, const std::vector<RunOutcome>& runs) {
  SuiteMetrics m;
  m.label = std::move(label);
  for (const auto& r : runs) {
    m.report.merge(r.report);
    ++m.runs;
    m.degraded += r.degraded;
    m.nonfinite += r.failure.has_value();
    m.locality_violations += r.locality_violations;
    m.seeds.push_back(r.seed);
  }
  return m;
}

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full", "no_fusion", "no_sr"};
  return v;
}

inline RunConfig variant_config(const RunConfig& base, const std::string& variant) {
  RunConfig c = base;
  if (variant == "no_fusion") c.latent_fusion = false;
  else if (variant == "no_sr") c.alpha = 0.0;
  else if (variant != "full") throw Error(ErrorCode::InvalidArgument, "unknown ablation variant '" + variant + "'");
  return c;
}

/// full / no_fusion / no_sr on identical scripts and seeds.
inline std::vector<SuiteMetrics> ablation_run(const Suite& suite, unsigned jobs = 1) {
  std::vector<SuiteMetrics> out;
  for (const auto& v : ablation_variants()) out.push_back(aggregate(v, run_suite(suite, variant_config(suite.config, v), jobs)));
  for (const auto& m : out)
    if (m.seeds != out.front().seeds) throw Error(ErrorCode::InvalidArgument, "ablation variants ran on different seeds");
  return out;
}

struct SweepPoint {
  double value = 0.0;
  SuiteMetrics metrics;
};

inline std::vector<SweepPoint> sweep(const Suite& suite, const std::string& parameter, const std::vector<double>& values,
                                     unsigned jobs = 1) {
  if (!std::is_sorted(values.begin(), values.end())) throw Error(ErrorCode::InvalidArgument, "sweep values must be sorted");
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "sweep has no values");
  std::vector<SweepPoint> out;
  for (double v : values) {
    RunConfig c = suite.config;
    if (parameter == "alpha") {
      c.alpha = v;
    } else if (parameter == "tau") {
      c.tau = static_cast<int>(v);
      if (static_cast<double>(c.tau) != v) throw Error(ErrorCode::InvalidArgument, "tau values must be integers");
    } else {
      throw Error(ErrorCode::InvalidArgument, "sweep parameter must be alpha or tau");
    }
    validate(c);
    out.push_back({v, aggregate(parameter + "=" + config_detail::format_double(v), run_suite(suite, c, jobs))});
  }
  return out;
}

inline std::string format_optional(std::optional<double> v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

/// `value,object_recall,relation_accuracy` with a header line.
inline std::string curve_csv(const std::vector<SweepPoint>& points) {
  std::string out = "value,object_recall,relation_accuracy\n";
  for (const auto& p : points) {
    out += config_detail::format_double(p.value) + "," + format_optional(p.metrics.object_recall()) + "," +
           format_optional(p.metrics.relation_accuracy()) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const SuiteMetrics& m) {
  nlohmann::json j{{"label", m.label},
                   {"runs", m.runs},
                   {"object_recall", m.object_recall()},
                   {"objects_found", m.report.objects_found},
                   {"objects_total", m.report.objects_total},
                   {"relations_satisfied", m.report.relations_satisfied},
                   {"relations_total", m.report.relations_total},
                   {"degradation_rate", m.degradation_rate()},
                   {"nonfinite_rate", m.nonfinite_rate()},
                   {"locality_violations", m.locality_violations},
                   {"seeds", m.seeds}};
  const auto ra = m.relation_accuracy();
  j["relation_accuracy"] = ra ? nlohmann::json(*ra) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& d : r.records) {
    nlohmann::json objs = nlohmann::json::array(), rels = nlohmann::json::array();
    for (const auto& o : d.objects)
      objs.push_back({{"name", o.name}, {"mass", o.mass}, {"success", o.success}, {"status", engine::to_string(o.status)}});
    for (const auto& x : d.relations) rels.push_back({{"descriptor", x.descriptor}, {"satisfied", x.satisfied}});
    recs.push_back({{"stage", d.stage}, {"mode", directive::to_string(d.mode)}, {"objects", objs}, {"relations", rels}});
  }
  nlohmann::json j{{"objects_found", r.objects_found},
                   {"objects_total", r.objects_total},
                   {"relations_satisfied", r.relations_satisfied},
                   {"relations_total", r.relations_total},
                   {"records", recs}};
  j["object_recall"] = r.objects_total ? nlohmann::json(r.object_recall()) : nlohmann::json(nullptr);
  const auto ra = r.relation_accuracy();
  j["relation_accuracy"] = ra ? nlohmann::json(*ra) : nlohmann::json(nullptr);
  return j;
}

}  // namespace srf::eval
