#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "srf/diffusion/ddim.hpp"
#include "srf/directive/script_io.hpp"
#include "srf/engine/fusion.hpp"
#include "srf/engine/stimulus.hpp"
#include "srf/engine/trace.hpp"
#include "srf/layout/constraints.hpp"
#include "srf/layout/solver.hpp"

namespace srf::engine {

/// Entity name → token id, in order of first appearance in the script.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const directive::DirectiveScript& script) {
    for (const auto& d : script.directives)
      for (const auto& n : directive::entity_names(d)) add(n);
  }

  TokenId add(const std::string& name) {
    auto [it, inserted] = ids_.emplace(name, static_cast<TokenId>(ids_.size()));
    return it->second;
  }
  TokenId at(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) throw Error(ErrorCode::InvalidArgument, "'" + name + "' is not in the vocabulary");
    return it->second;
  }
  std::vector<TokenId> tokens() const {
    std::vector<TokenId> out;
    for (const auto& [_, k] : ids_) out.push_back(k);
    std::sort(out.begin(), out.end());
    return out;
  }
  const std::map<std::string, TokenId>& map() const noexcept { return ids_; }

 private:
  std::map<std::string, TokenId> ids_;
};

struct PipelineConfig {
  StimulusConfig stimulus;
  FusionConfig fusion;
  layout::LayoutConfig layout;
  layout::SolverOptions solver;
  diffusion::InversionOptions inversion;
  bool latent_fusion = true;  // false: M̂ ≡ 1 at every step
  std::uint64_t seed = 0;
  const directive::Lexicon* lexicon = nullptr;

  const directive::Lexicon& lex() const { return lexicon ? *lexicon : directive::Lexicon::builtin(); }
};

/// Everything a stage reads and the next stage inherits.
struct ProgressState {
  diffusion::Latent latent;
  std::map<std::string, layout::BBox> anchors;
  std::vector<ObjectRecord> objects;
  Vocabulary vocab;
};

namespace detail {

inline std::optional<std::size_t> find_alive(const std::vector<ObjectRecord>& objects, const std::string& name) {
  for (std::size_t i = objects.size(); i-- > 0;)
    if (objects[i].name == name && objects[i].status == ObjectStatus::Alive) return i;
  return std::nullopt;
}

inline BinaryGrid union_of(const std::vector<BinaryGrid>& masks, std::size_t h, std::size_t w) {
  BinaryGrid out(h, w, 0);
  for (const auto& m : masks)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] | m[i];
  return out;
}

inline double mean_mass(const AttentionStack& attention, const std::map<TokenId, BinaryGrid>& masks) {
  if (masks.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [k, m] : masks) s += mass_in(softmax(attention.at(k).values()), m);
  return s / static_cast<double>(masks.size());
}

/// Fixed region for editing and erasing: the thresholded inversion attention
/// of `token`, averaged over timesteps.
inline BinaryGrid reference_region(const diffusion::Inversion& inv, TokenId token, double quantile) {
  std::vector<RealGrid> maps;
  for (std::size_t t = 1; t < inv.attention.size(); ++t) maps.push_back(inv.attention[t].at(token));
  return attention_mask(maps, quantile).mask.grid;
}

}  // namespace detail

/// One directive on top of `state.latent`. `state` is updated only when the
/// stage completes.
inline StageTrace run_directive(ProgressState& state, const directive::Directive& d, std::size_t stage,
                                diffusion::Denoiser& denoiser, const diffusion::NoiseSchedule& sched,
                                const PipelineConfig& cfg) {
  using directive::Mode;
  const int T = sched.steps();
  cfg.stimulus.validate(T);
  cfg.fusion.validate(T);
  const auto& bg = state.latent;
  const std::size_t H = bg.height, W = bg.width;

  StageTrace tr;
  tr.stage = stage;
  tr.mode = d.mode();
  tr.directive = directive::format_directive(d);

  auto vocab = state.vocab;
  for (const auto& n : directive::entity_names(d)) vocab.add(n);
  auto anchors = state.anchors;
  auto objects = state.objects;

  std::vector<TokenId> inversion_tokens;
  std::map<TokenId, BinaryGrid> masks;  // per stimulated token
  TokenId reference_token = 0;
  std::string fixed_source;

  if (const auto* syn = d.synthesis()) {
    auto cs = layout::relation_to_constraints(d, anchors, layout::BBox::canvas(), cfg.lex(), cfg.layout);
    std::vector<layout::BBox> existing;
    // Only placed objects block new boxes; scene anchors are regions.
    for (const auto& o : objects) {
      if (o.status != ObjectStatus::Alive || !o.box) continue;
      if (syn->position && o.name == syn->position->anchor.name) continue;
      if (syn->interaction && o.name == syn->interaction->partner.name) continue;
      if (cs.index_of(o.name)) continue;
      existing.push_back(*o.box);
    }
    const auto solved = layout::solve_layout_relaxed(cs, existing, cfg.seed ^ (stage * 0x9e3779b97f4a7c15ULL), cfg.solver);
    tr.relaxation = layout::to_string(solved.relaxation);
    for (std::size_t v = 0; v < cs.vars.size(); ++v) {
      const auto& name = cs.vars[v].name;
      const auto& box = solved.solution.boxes[v];
      const TokenId k = vocab.at(name);
      auto m = layout::rasterize_mask(box, H, W).grid;
      masks[k] = m;
      tr.layout.emplace_back(name, box);
      anchors[name] = box;
      if (auto i = detail::find_alive(objects, name)) objects[*i].status = ObjectStatus::Replaced;
      objects.push_back({name, k, m, box, stage, ObjectStatus::Alive});
    }
  } else if (const auto* ed = d.editing()) {
    reference_token = vocab.at(ed->source.name);
    inversion_tokens = {reference_token};
    fixed_source = "edit";
  } else {
    reference_token = vocab.at(d.erasing()->target.name);
    inversion_tokens = {reference_token};
    fixed_source = "erase";
  }

  const auto inv = diffusion::ddim_inversion(bg, denoiser, sched, inversion_tokens, cfg.inversion);

  BinaryGrid fixed_mask;
  if (const auto* ed = d.editing()) {
    fixed_mask = detail::reference_region(inv, reference_token, cfg.fusion.attn_quantile);
    const TokenId target = vocab.at(ed->target.name);
    masks[target] = fixed_mask;
    std::optional<layout::BBox> box;
    BinaryGrid object_mask = fixed_mask;
    if (auto i = detail::find_alive(objects, ed->source.name)) {
      objects[*i].status = ObjectStatus::Replaced;
      box = objects[*i].box;
      object_mask = objects[*i].mask;
    }
    if (auto it = anchors.find(ed->source.name); it != anchors.end()) {
      box = it->second;
      anchors.erase(it);
    }
    if (box) {
      anchors[ed->target.name] = *box;
      tr.layout.emplace_back(ed->target.name, *box);
    }
    if (auto i = detail::find_alive(objects, ed->target.name)) objects[*i].status = ObjectStatus::Replaced;
    objects.push_back({ed->target.name, target, object_mask, box, stage, ObjectStatus::Alive});
  } else if (const auto* er = d.erasing()) {
    fixed_mask = detail::reference_region(inv, reference_token, cfg.fusion.attn_quantile);
    masks[reference_token] = fixed_mask;
    anchors.erase(er->target.name);
    if (auto i = detail::find_alive(objects, er->target.name)) objects[*i].status = ObjectStatus::Erased;
  }

  for (const auto& [k, _] : masks) tr.stimulated.push_back(k);
  std::vector<BinaryGrid> all_masks;
  for (const auto& [_, m] : masks) all_masks.push_back(m);
  const BinaryGrid nominal = d.synthesis() ? detail::union_of(all_masks, H, W) : fixed_mask;
  tr.nominal_mask = nominal;
  const layout::LayoutMask box_mask{nominal, layout::MaskSource::FromBox};
  const BinaryGrid full(H, W, 1);

  // Starting latent.
  diffusion::Latent z;
  if (d.synthesis()) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(stage), 0x5eedu};
    const auto noise = diffusion::gaussian_latent(bg.channels, H, W, seq);
    z = cfg.latent_fusion ? fuse_latents(noise, inv.trajectory[T], nominal) : noise;
  } else {
    z = inv.trajectory[T];
  }

  auto targets_at = [&](int t) {
    TargetMaps targets;
    if (d.synthesis()) return mask_targets(masks, cfg.stimulus.delta);
    if (d.editing()) {
      targets[tr.stimulated.front()] = reference_target(inv.attention[t].at(reference_token), cfg.stimulus.delta);
    } else {
      targets[reference_token] = uniform_target(H, W, cfg.stimulus.delta);
    }
    return targets;
  };

  BinaryGrid last_attn_mask = nominal;
  for (int step = 1; step <= T; ++step) {
    const int t = T - step + 1;
    const auto targets = targets_at(t);
    auto out = denoiser.denoise(z, t, tr.stimulated);
    diffusion::validate_output(out, z, tr.stimulated);
    StepRecord rec;
    rec.step = step;
    rec.t = t;
    rec.loss = stimulus_loss(out.attention, targets).loss;
    if (step == 1)
      for (const auto& [k, m] : masks) tr.initial_mass[k] = mass_in(softmax(out.attention.at(k).values()), m);

    const double alpha = cfg.stimulus.alpha_at(step);
    if (step <= cfg.stimulus.stimulus_steps && alpha > 0.0) {
      z = latent_response(z, denoiser, targets, alpha, t, cfg.stimulus.inner_iters).z;
      out = denoiser.denoise(z, t, tr.stimulated);
      diffusion::validate_output(out, z, tr.stimulated);
      rec.loss_after = stimulus_loss(out.attention, targets).loss;
    }
    rec.attention_mass_in_mask = detail::mean_mass(out.attention, masks);

    const auto z_prev = diffusion::ddim_reverse_step(z, out.eps, t, sched);

    std::vector<RealGrid> stimulated_maps;
    for (TokenId k : tr.stimulated) stimulated_maps.push_back(out.attention.at(k));
    const auto attn = attention_mask(stimulated_maps, cfg.fusion.attn_quantile);
    last_attn_mask = attn.mask.grid;

    const BinaryGrid* m_hat = nullptr;
    if (!cfg.latent_fusion) {
      m_hat = &full;
      rec.mask_source = "full";
    } else if (d.synthesis()) {
      m_hat = &mask_schedule(step, cfg.fusion.tau, box_mask, attn.mask).grid;
      rec.mask_source = step <= cfg.fusion.tau ? "box" : "attention";
    } else {
      m_hat = &fixed_mask;
      rec.mask_source = fixed_source;
    }
    z = fuse_latents(z_prev, inv.trajectory[t - 1], *m_hat);
    tr.steps.push_back(std::move(rec));
  }

  const auto all_tokens = vocab.tokens();
  auto final_out = denoiser.denoise(z, 0, all_tokens);
  diffusion::validate_output(final_out, z, all_tokens);
  tr.final_attention = std::move(final_out.attention);
  for (const auto& [k, m] : masks) tr.final_mass[k] = mass_in(softmax(tr.final_attention.at(k).values()), m);

  tr.locality_mask = d.synthesis() ? detail::union_of({nominal, last_attn_mask}, H, W) : fixed_mask;
  for (std::size_t i = 0; i < z.plane(); ++i) {
    if (tr.locality_mask[i]) continue;
    for (std::size_t c = 0; c < z.channels; ++c)
      if (z.data[c * z.plane() + i] != bg.data[c * z.plane() + i]) {
        ++tr.locality_violations;
        break;
      }
  }
  tr.max_abs_latent = z.max_abs();
  tr.vocabulary = vocab.map();
  tr.objects = objects;

  state.latent = std::move(z);
  state.anchors = std::move(anchors);
  state.objects = std::move(objects);
  state.vocab = std::move(vocab);
  return tr;
}

struct StageFailure {
  std::size_t stage = 0;
  ErrorCode code = ErrorCode::InvalidArgument;
  std::string message;
};

struct ProgressiveResult {
  std::vector<diffusion::Latent> stages;
  std::vector<StageTrace> traces;
  ProgressState state;
  std::optional<StageFailure> failure;

  const diffusion::Latent& final_latent() const { return state.latent; }
};

/// Folds `run_directive` over the script. The first failing directive stops
/// the run; completed stages are kept.
inline ProgressiveResult run_progressive(const diffusion::Latent& background, const directive::DirectiveScript& script,
                                         diffusion::Denoiser& denoiser, const diffusion::NoiseSchedule& sched,
                                         const PipelineConfig& cfg,
                                         const std::map<std::string, layout::BBox>& scene_anchors = {}) {
  if (script.directives.empty()) throw Error(ErrorCode::EmptyInput, "script has no directives");
  ProgressiveResult r;
  r.state.latent = background;
  r.state.anchors = scene_anchors;
  r.state.vocab = Vocabulary(script);
  for (std::size_t i = 0; i < script.directives.size(); ++i) {
    try {
      r.traces.push_back(run_directive(r.state, script.directives[i], i, denoiser, sched, cfg));
      r.stages.push_back(r.state.latent);
    } catch (const Error& e) {
      r.failure = StageFailure{i, e.code(), e.what()};
      break;
    }
  }
  return r;
}

}  // namespace srf::engine
