#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "srf/config.hpp"
#include "srf/diffusion/latent_io.hpp"
#include "srf/directive/parser.hpp"
#include "srf/eval/harness.hpp"

namespace fs = std::filesystem;

namespace srf::cli {

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &n, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoError, "sha256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < n; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string two_digits(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return buf;
}

bool backend_code(ErrorCode c) {
  return c == ErrorCode::ProtocolError || c == ErrorCode::BackendError || c == ErrorCode::Timeout;
}

int exit_for(const Error& e) {
  if (backend_code(e.code()) || e.code() == ErrorCode::IoError) return kBackendFailure;
  switch (e.code()) {
    case ErrorCode::TemplateMismatch:
    case ErrorCode::EmptyEntity:
    case ErrorCode::Undecomposable:
    case ErrorCode::ParseError:
    case ErrorCode::UnknownRelation:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidBox:
    case ErrorCode::EmptyInput:
      return kParseFailure;
    default:
      return kDirectiveFailure;
  }
}

/// Writes files below a root and remembers them for the manifest.
class RunWriter {
 public:
  explicit RunWriter(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& rel, const std::string& bytes) {
    const auto path = root_ / rel;
    fs::create_directories(path.parent_path());
    layout::write_file(path.string(), bytes);
    files_.push_back(rel);
  }

  void write_manifest() {
    std::sort(files_.begin(), files_.end());
    std::string body;
    for (const auto& f : files_) body += sha256_hex(read_file((root_ / f).string())) + " " + f + "\n";
    layout::write_file((root_ / "manifest.txt").string(), body);
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string denoiser_cmd;
  unsigned jobs = 1;
};

RunConfig resolve_config(const Options& o, RunConfig base = {}) {
  RunConfig c = o.config_path.empty() ? base : load_config(o.config_path, base);
  if (o.seed) c.seed = *o.seed;
  if (!o.denoiser_cmd.empty()) {
    c.denoiser = "external";
    c.denoiser_cmd = o.denoiser_cmd;
  }
  validate(c);
  return c;
}

const directive::Lexicon& lexicon_for(const RunConfig& c, std::optional<directive::Lexicon>& holder) {
  if (c.lexicon.empty()) return directive::Lexicon::builtin();
  holder = directive::Lexicon::load(c.lexicon);
  return *holder;
}

int cmd_decompose(const std::string& text_arg, const std::string& file, const Options& o, std::ostream& out,
                  std::ostream& err) {
  std::string body = text_arg;
  if (!file.empty()) body = read_file(file);
  if (text::trim(body).empty()) {
    err << "decompose: no text given\n";
    return kParseFailure;
  }
  RunConfig c = resolve_config(o);
  std::optional<directive::Lexicon> lex_holder;
  const auto& lex = lexicon_for(c, lex_holder);
  directive::DirectiveScript script;
  try {
    script = directive::decompose(body, lex);
  } catch (const Error& e) {
    err << "decompose: ";
    if (e.index()) err << "clause " << *e.index() << ": ";
    err << to_string(e.code()) << ": " << e.detail() << "\n";
    return kParseFailure;
  }
  const auto formatted = directive::format_script(script);
  if (o.out.empty()) out << formatted;
  else layout::write_file(o.out, formatted);
  return kOk;
}

int cmd_layout(const std::string& script_path, const std::string& anchors_path, const Options& o, std::ostream& out,
               std::ostream& err) {
  RunConfig c = resolve_config(o);
  std::optional<directive::Lexicon> lex_holder;
  const auto& lex = lexicon_for(c, lex_holder);
  const auto script = directive::load_script(script_path, lex);
  auto anchors = anchors_path.empty() ? std::map<std::string, layout::BBox>{} : layout::to_map(layout::load_boxes(anchors_path));
  const auto p = make_pipeline(c, &lex);
  std::set<std::string> placed;
  for (std::size_t i = 0; i < script.directives.size(); ++i) {
    const auto& d = script.directives[i];
    std::vector<layout::NamedBox> report;
    if (const auto* syn = d.synthesis()) {
      try {
        auto cs = layout::relation_to_constraints(d, anchors, layout::BBox::canvas(), lex, p.layout);
        std::vector<layout::BBox> existing;
        for (const auto& [name, box] : anchors) {
          if (!placed.count(name)) continue;
          if (syn->position && name == syn->position->anchor.name) continue;
          if (syn->interaction && name == syn->interaction->partner.name) continue;
          if (cs.index_of(name)) continue;
          existing.push_back(box);
        }
        auto sol = layout::solve_layout_relaxed(cs, existing, c.seed ^ (i * 0x9e3779b97f4a7c15ULL), p.solver);
        for (std::size_t v = 0; v < cs.vars.size(); ++v) {
          report.emplace_back(cs.vars[v].name, sol.solution.boxes[v]);
          anchors[cs.vars[v].name] = sol.solution.boxes[v];
          placed.insert(cs.vars[v].name);
        }
        if (sol.relaxation != layout::Relaxation::None)
          err << "layout: stage " << i << " relaxed (" << layout::to_string(sol.relaxation) << ")\n";
      } catch (const Error& e) {
        err << "layout: stage " << i << ": " << e.what() << "\n";
        return kDirectiveFailure;
      }
    } else if (const auto* ed = d.editing()) {
      if (auto it = anchors.find(ed->source.name); it != anchors.end()) {
        const auto box = it->second;
        anchors.erase(it);
        anchors[ed->target.name] = box;
        report.emplace_back(ed->target.name, box);
        if (placed.erase(ed->source.name)) placed.insert(ed->target.name);
      }
    } else {
      anchors.erase(d.erasing()->target.name);
      placed.erase(d.erasing()->target.name);
    }
    const auto text_out = layout::format_boxes(report);
    if (o.out.empty()) {
      out << "# stage " << two_digits(i) << "\n" << text_out;
    } else {
      fs::create_directories(o.out);
      layout::write_file((fs::path(o.out) / (two_digits(i) + ".txt")).string(), text_out);
    }
  }
  return kOk;
}

std::string heatmap(const RealGrid& logits) {
  RealGrid p = softmax(logits);
  double mx = 0.0;
  for (double v : p.values()) mx = std::max(mx, v);
  if (mx > 0.0)
    for (auto& v : p.values()) v /= mx;
  return layout::to_pgm(p);
}

int cmd_run(const std::string& script_path, const std::string& background, const std::string& anchors_path,
            const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) {
    err << "run: --out is required\n";
    return kUsage;
  }
  RunConfig c;
  std::optional<directive::Lexicon> lex_holder;
  directive::DirectiveScript script;
  std::vector<layout::NamedBox> anchor_list;
  try {
    c = resolve_config(o);
    script = directive::load_script(script_path, lexicon_for(c, lex_holder));
    if (!anchors_path.empty()) anchor_list = layout::load_boxes(anchors_path);
  } catch (const Error& e) {
    err << "run: " << e.what() << "\n";
    return e.code() == ErrorCode::IoError ? kParseFailure : exit_for(e);
  }
  diffusion::Latent bg;
  try {
    bg = background == "noise" ? noise_background(c, c.seed) : diffusion::load_latent(background);
  } catch (const Error& e) {
    err << "run: background: " << e.what() << "\n";
    return kBackendFailure;
  }
  if (bg.channels != static_cast<std::size_t>(c.latent_channels) || bg.height != static_cast<std::size_t>(c.latent_height) ||
      bg.width != static_cast<std::size_t>(c.latent_width)) {
    err << "run: background is " << diffusion::shape_string(bg) << ", config expects " << c.latent_channels << "x"
        << c.latent_height << "x" << c.latent_width << "\n";
    return kParseFailure;
  }

  const fs::path root(o.out);
  for (const char* sub : {"stages", "traces", "heatmaps", "layout"}) fs::remove_all(root / sub);
  fs::create_directories(root);
  RunWriter w(root);
  w.write("config.txt", format_config(c));
  w.write("script.txt", directive::format_script(script));
  w.write("anchors.txt", layout::format_boxes(anchor_list));

  engine::ProgressiveResult result;
  try {
    auto den = make_denoiser(c);
    const auto sched = make_schedule(c);
    result = engine::run_progressive(bg, script, *den, sched, make_pipeline(c, &lexicon_for(c, lex_holder)),
                                     layout::to_map(anchor_list));
  } catch (const Error& e) {
    err << "run: " << e.what() << "\n";
    w.write("status.txt", std::string("failed: ") + e.what() + "\n");
    w.write_manifest();
    return backend_code(e.code()) ? kBackendFailure : exit_for(e);
  }

  for (std::size_t i = 0; i < result.traces.size(); ++i) {
    const auto nn = two_digits(i);
    const auto& tr = result.traces[i];
    w.write("stages/" + nn + ".latent", diffusion::encode_latent(result.stages[i]));
    w.write("traces/" + nn + ".json", engine::to_json(tr).dump(1) + "\n");
    w.write("layout/" + nn + ".txt", layout::format_boxes(tr.layout));
    for (const auto& [k, logits] : tr.final_attention)
      w.write("heatmaps/" + nn + "_token_" + std::to_string(k) + ".pgm", heatmap(logits));
  }
  int code = kOk;
  std::string status = "ok\n";
  if (result.failure) {
    status = "failed: stage " + std::to_string(result.failure->stage) + ": " + result.failure->message + "\n";
    err << "run: " << status;
    code = backend_code(result.failure->code) ? kBackendFailure : kDirectiveFailure;
  }
  w.write("status.txt", status);
  w.write_manifest();
  out << "run: " << result.traces.size() << " of " << script.directives.size() << " stages written to " << o.out << "\n";
  return code;
}

int cmd_eval(const std::string& run_dir, const Options& o, std::ostream& out, std::ostream& err) {
  const fs::path root(run_dir);
  std::vector<fs::path> traces;
  if (fs::is_directory(root / "traces"))
    for (const auto& e : fs::directory_iterator(root / "traces"))
      if (e.path().extension() == ".json") traces.push_back(e.path());
  if (traces.empty() || !fs::exists(root / "script.txt")) {
    err << "eval: '" << run_dir << "' holds no traces\n";
    return kParseFailure;
  }
  std::sort(traces.begin(), traces.end());
  RunConfig c = fs::exists(root / "config.txt") ? load_config((root / "config.txt").string()) : RunConfig{};
  std::optional<directive::Lexicon> lex_holder;
  const auto& lex = lexicon_for(c, lex_holder);
  const auto script = directive::load_script((root / "script.txt").string(), lex);
  const auto anchors =
      fs::exists(root / "anchors.txt") ? layout::to_map(layout::load_boxes((root / "anchors.txt").string())) : std::map<std::string, layout::BBox>{};
  if (traces.size() != script.directives.size()) {
    err << "eval: run is incomplete (" << traces.size() << " of " << script.directives.size() << " stages)\n";
    return kDirectiveFailure;
  }
  const auto last = engine::load_trace(traces.back().string());
  const auto report = eval::evaluate(script, last, anchors, c.recall_threshold, lex, make_pipeline(c, &lex).layout);
  const auto j = eval::to_json(report);
  if (!o.out.empty()) layout::write_file(o.out, j.dump(1) + "\n");
  out << "object_recall " << eval::format_optional(report.objects_total ? std::optional(report.object_recall()) : std::nullopt)
      << "\nrelation_accuracy " << eval::format_optional(report.relation_accuracy()) << "\n";
  return kOk;
}

int cmd_ablate(const std::string& suite_path, const Options& o, std::ostream& out) {
  auto suite = eval::load_suite(suite_path);
  suite.config = resolve_config(o, suite.config);
  const auto table = eval::ablation_run(suite, o.jobs);
  nlohmann::json j = nlohmann::json::array();
  char line[160];
  out << "variant      object_recall  relation_accuracy  degradation  locality_violations\n";
  for (const auto& m : table) {
    std::snprintf(line, sizeof line, "%-12s %13.4f  %17s  %11.4f  %zu\n", m.label.c_str(), m.object_recall(),
                  eval::format_optional(m.relation_accuracy()).c_str(), m.degradation_rate(), m.locality_violations);
    out << line;
    j.push_back(eval::to_json(m));
  }
  if (!o.out.empty()) layout::write_file(o.out, j.dump(1) + "\n");
  return kOk;
}

int cmd_sweep(const std::string& suite_path, const std::string& param, const std::string& values_arg, const Options& o,
              std::ostream& out) {
  auto suite = eval::load_suite(suite_path);
  suite.config = resolve_config(o, suite.config);
  std::vector<double> values;
  for (auto v : text::split(values_arg, ',')) {
    v = text::trim(v);
    if (!v.empty()) values.push_back(config_detail::parse_number<double>(v, "values", 0));
  }
  const auto points = eval::sweep(suite, param, values, o.jobs);
  const auto csv = eval::curve_csv(points);
  nlohmann::json side = nlohmann::json::array();
  for (const auto& p : points) {
    auto j = eval::to_json(p.metrics);
    j["value"] = p.value;
    side.push_back(std::move(j));
  }
  if (o.out.empty()) {
    out << csv;
  } else {
    layout::write_file(o.out, csv);
    layout::write_file(fs::path(o.out).replace_extension(".json").string(), side.dump(1) + "\n");
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Progressive stimulus-response-fusion text-to-latent pipeline"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub, bool with_jobs) {
    sub->add_option("--config", o.config_path, "key = value config file");
    sub->add_option("--seed", o.seed, "run seed (overrides the config)");
    sub->add_option("--out", o.out, "output path");
    sub->add_option("--denoiser-cmd", o.denoiser_cmd, "external denoiser command line");
    if (with_jobs) sub->add_option("--jobs", o.jobs, "parallel worker runs")->check(CLI::PositiveNumber);
  };

  std::string text_arg, file, script, background, anchors, run_dir, suite, param, values;
  auto* dec = app.add_subcommand("decompose", "split text into a directive script");
  dec->add_option("text", text_arg, "text to decompose");
  dec->add_option("--file", file, "read the text from a file");
  common(dec, false);

  auto* lay = app.add_subcommand("layout", "solve the boxes of each synthesis directive");
  lay->add_option("script", script, "directive script")->required();
  lay->add_option("--anchors", anchors, "scene anchor boxes");
  common(lay, false);

  auto* run_cmd = app.add_subcommand("run", "run a script and write a run directory");
  run_cmd->add_option("script", script, "directive script")->required();
  run_cmd->add_option("--background", background, "background latent file, or 'noise'")->required();
  run_cmd->add_option("--anchors", anchors, "scene anchor boxes");
  common(run_cmd, false);

  auto* ev = app.add_subcommand("eval", "score a run directory");
  ev->add_option("run_dir", run_dir, "run directory")->required();
  common(ev, false);

  auto* abl = app.add_subcommand("ablate", "full / no_fusion / no_sr on a suite");
  abl->add_option("suite", suite, "suite file")->required();
  common(abl, true);

  auto* sw = app.add_subcommand("sweep", "metric curve over alpha or tau");
  sw->add_option("suite", suite, "suite file")->required();
  sw->add_option("--param", param, "alpha or tau")->required()->check(CLI::IsMember({"alpha", "tau"}));
  sw->add_option("--values", values, "comma-separated ascending values")->required();
  common(sw, true);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*dec) return cmd_decompose(text_arg, file, o, out, err);
    if (*lay) return cmd_layout(script, anchors, o, out, err);
    if (*run_cmd) return cmd_run(script, background, anchors, o, out, err);
    if (*ev) return cmd_eval(run_dir, o, out, err);
    if (*abl) return cmd_ablate(suite, o, out);
    if (*sw) return cmd_sweep(suite, param, values, o, out);
  } catch (const Error& e) {
    err << app.get_subcommands().front()->get_name() << ": " << e.what() << "\n";
    return exit_for(e);
  }
  return kUsage;
}

}  // namespace srf::cli
