// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "srf/config.hpp"
#include "srf/diffusion/ddim.hpp"
#include "srf/diffusion/reference_denoiser.hpp"
#include "srf/directive/parser.hpp"
#include "srf/engine/fusion.hpp"
#include "srf/engine/stimulus.hpp"
#include "srf/eval/harness.hpp"
#include "support/layout_oracle.hpp"

namespace fs = std::filesystem;
using namespace srf;
using diffusion::Latent;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string data(const std::string& rel) { return std::string(SRF_DATA_DIR) + "/" + rel; }

Verdict gradient_oracle() {
  const auto t0 = Clock::now();
  diffusion::ReferenceDenoiser den({.seed = 11});
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> corner(0, 9), extent(3, 6), step(1, 50);
  double worst = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    const auto z = diffusion::gaussian_latent(4, 16, 16, 500 + probe);
    BinaryGrid m(16, 16, 0);
    const int r0 = corner(rng), c0 = corner(rng), hr = extent(rng), hc = extent(rng);
    for (int r = r0; r < r0 + hr; ++r)
      for (int c = c0; c < c0 + hc; ++c) m(r, c) = 1;
    const auto targets = engine::mask_targets({{0, m}, {1, BinaryGrid(16, 16, 1)}}, 0.8);
    const int t = step(rng);
    const auto grad = engine::stimulus_gradient(z, den, t, targets).second;
    Latent v(4, 16, 16);
    for (double& x : v.data) x = n(rng);
    const double h = 1e-5;
    auto up = z, dn = z;
    for (std::size_t i = 0; i < z.size(); ++i) up.data[i] += h * v.data[i], dn.data[i] -= h * v.data[i];
    const double fd =
        (engine::stimulus_gradient(up, den, t, targets).first - engine::stimulus_gradient(dn, den, t, targets).first) / (2 * h);
    double an = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) an += grad.data[i] * v.data[i];
    worst = std::max(worst, std::abs(fd - an) / std::abs(an));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 10.0, fmt("worst relative error %.2e over 20 probes, %.2f s", worst, secs)};
}

Verdict inversion_roundtrip() {
  const auto t0 = Clock::now();
  const auto s = diffusion::NoiseSchedule::linear(50);
  diffusion::ReferenceDenoiser den({.seed = 5});
  const auto z0 = diffusion::gaussian_latent(4, 16, 16, 77);
  const std::vector<diffusion::TokenId> tokens{0, 1, 2};
  const auto inv = diffusion::ddim_inversion(z0, den, s, tokens);
  Latent z = inv.trajectory.back();
  for (int t = 50; t >= 1; --t) z = diffusion::ddim_reverse_step(z, den.denoise(z, t, tokens).eps, t, s);
  double err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) err = std::max(err, std::abs(z.data[i] - z0.data[i]));
  const double secs = seconds_since(t0);
  return {err < 1e-8 && secs < 5.0, fmt("max abs error %.2e, %.2f s", err, secs)};
}

bool bitwise_equal(const Latent& a, const Latent& b) {
  return a.same_shape(b) && std::memcmp(a.data.data(), b.data.data(), 8 * a.size()) == 0;
}

Verdict fusion_identities() {
  const auto a = diffusion::gaussian_latent(4, 16, 16, 1), b = diffusion::gaussian_latent(4, 16, 16, 2);
  const bool ones = bitwise_equal(engine::fuse_latents(a, b, BinaryGrid(16, 16, 1)), a);
  const bool zeros = bitwise_equal(engine::fuse_latents(a, b, BinaryGrid(16, 16, 0)), b);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + trial % 4, h = 1 + trial % 16, w = 1 + (trial / 16) % 16;
    const auto zs = diffusion::gaussian_latent(c, h, w, 10000 + 2 * trial);
    const auto zb = diffusion::gaussian_latent(c, h, w, 10001 + 2 * trial);
    std::bernoulli_distribution on(density(rng));
    BinaryGrid m(h, w);
    for (auto& v : m.values()) v = on(rng);
    const auto out = engine::fuse_latents(zs, zb, m);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h * w; ++i) {
        const double want = m[i] ? zs.data[ch * h * w + i] : zb.data[ch * h * w + i];
        mismatches += std::memcmp(&want, &out.data[ch * h * w + i], 8) != 0;
      }
  }
  return {ones && zeros && mismatches == 0,
          fmt("ones %s, zeros %s, %zu mismatching elements over 1000 random cases", ones ? "exact" : "differ",
              zeros ? "exact" : "differ", mismatches)};
}

Verdict schedule_exactness() {
  const auto box = layout::LayoutMask::filled(16, 16, true);
  const auto attn = layout::LayoutMask::filled(16, 16, false, layout::MaskSource::FromAttention);
  int mismatches = 0, checked = 0;
  for (int tau = 0; tau <= 50; ++tau)
    for (int step = 1; step <= 50; ++step, ++checked)
      mismatches += &engine::mask_schedule(step, tau, box, attn) != (step <= tau ? &box : &attn);
  return {mismatches == 0, fmt("%d mismatches over %d (step, tau) pairs", mismatches, checked)};
}

Verdict stimulus_efficacy() {
  const auto suite = eval::load_suite(data("suite/efficacy.suite"));
  RunConfig base = suite.config;
  RunConfig off = base;
  off.alpha = 0.0;
  const auto on_runs = eval::run_suite(suite, base, 1, true);
  const auto off_runs = eval::run_suite(suite, off, 1, true);
  std::size_t paired = 0, window = 0, total = on_runs.size();
  for (std::size_t i = 0; i < total; ++i) {
    if (on_runs[i].failure || off_runs[i].failure) continue;
    const auto& tr = on_runs[i].traces.back();
    const auto& tr0 = off_runs[i].traces.back();
    const auto k = tr.stimulated.front();
    paired += tr.final_mass.at(k) > tr0.final_mass.at(k);
    const auto w = tr.window_loss();
    window += w && w->second < w->first;
  }
  const bool ok = total > 0 && 100 * paired >= 95 * total && 100 * window >= 95 * total;
  return {ok, fmt("mass beats alpha=0 in %zu/%zu runs, window loss decreases in %zu/%zu", paired, total, window, total)};
}

Verdict ablation_ordering() {
  const auto suite = eval::load_suite(data("suite/ablation.suite"));
  const auto m = eval::ablation_run(suite, 1);
  const auto& full = m[0];
  const auto& no_fusion = m[1];
  const auto& no_sr = m[2];
  const double rf = full.object_recall(), rn = no_fusion.object_recall(), rs = no_sr.object_recall();
  const double af = full.relation_accuracy().value_or(0.0), an = no_fusion.relation_accuracy().value_or(0.0);
  const bool ok = rf > rs && rs > rn && af > an;
  return {ok, fmt("recall full %.3f > no_sr %.3f > no_fusion %.3f; relation full %.3f > no_fusion %.3f", rf, rs, rn, af,
                  an)};
}

Verdict solver_oracle() {
  std::mt19937_64 rng(7);
  int feasible = 0, matched = 0, invalid = 0, infeasible = 0, raised = 0, grid_missed = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = oracle::random_instance(rng);
    const auto cmp = oracle::compare_with_grid(inst, static_cast<std::uint64_t>(i));
    using V = oracle::OracleVerdict;
    invalid += cmp.verdict == V::InvalidOutput;
    if (inst.contradictory) {
      ++infeasible;
      raised += cmp.verdict == V::Infeasible;
    } else if (cmp.grid_feasible) {
      ++feasible;
      matched += cmp.verdict == V::Match;
    } else if (cmp.verdict == V::Infeasible) {
      ++infeasible;
      ++raised;
    } else {
      // valid solver witness the grid cannot resolve
      ++feasible;
      ++grid_missed;
    }
  }
  const bool ok = invalid == 0 && raised == infeasible && 100 * matched >= 99 * feasible;
  return {ok, fmt("%d/%d feasible match the grid (%d feasible only off-grid), %d/%d infeasible raise, %d invalid",
                  matched, feasible, grid_missed, raised, infeasible, invalid)};
}

Verdict alpha_sweep() {
  const auto suite = eval::load_suite(data("suite/ablation.suite"));
  const auto pts = eval::sweep(suite, "alpha", {0, 20, 40, 60, 200}, 1);
  const double r0 = pts[0].metrics.object_recall();
  bool above = true;
  std::string curve;
  for (std::size_t i = 1; i <= 3; ++i) {
    above = above && pts[i].metrics.object_recall() > r0;
    curve += fmt("%g:%.3f ", pts[i].value, pts[i].metrics.object_recall());
  }
  const double d40 = pts[2].metrics.degradation_rate(), d200 = pts[4].metrics.degradation_rate();
  return {above && d200 > d40,
          fmt("recall alpha=0 %.3f vs %s; degradation alpha=40 %.3f < alpha=200 %.3f", r0, curve.c_str(), d40, d200)};
}

Verdict run_determinism() {
  const auto dir = fs::temp_directory_path() / "srf_acceptance_determinism";
  fs::remove_all(dir);
  std::string manifests[2];
  int codes[2];
  for (int i = 0; i < 2; ++i) {
    std::ostringstream out, err;
    const auto run = dir / ("run" + std::to_string(i));
    codes[i] = cli::run({"run", data("demo/script.txt"), "--background", "noise", "--anchors", data("demo/anchors.txt"),
                         "--config", data("demo/demo.conf"), "--seed", "42", "--out", run.string()},
                        out, err);
    std::ifstream in(run / "manifest.txt", std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    manifests[i] = ss.str();
  }
  const bool ok = codes[0] == 0 && codes[1] == 0 && !manifests[0].empty() && manifests[0] == manifests[1];
  std::size_t lines = std::count(manifests[0].begin(), manifests[0].end(), '\n');
  return {ok, fmt("exit codes %d/%d, manifests of %zu entries %s", codes[0], codes[1], lines,
                  manifests[0] == manifests[1] ? "identical" : "differ")};
}

Verdict parser_corpus() {
  std::ifstream in(data("corpus/clauses.txt"));
  std::string line;
  int total = 0, matched = 0, rendered = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto sep = line.find(" => ");
    if (sep == std::string::npos) continue;
    ++total;
    try {
      const auto d = directive::parse_directive(line.substr(0, sep));
      matched += directive::format_directive(d) == line.substr(sep + 4);
      rendered += directive::parse_directive(directive::render(d)) == d;
    } catch (const Error&) {
    }
  }
  std::string hard = "parsed";
  try {
    directive::decompose("a horse under a car and between a cat and a dog");
  } catch (const Error& e) {
    hard = std::string(to_string(e.code()));
  }
  const bool ok = total == 50 && matched == total && rendered == total && hard == "Undecomposable";
  return {ok, fmt("%d/%d template matches, %d/%d render roundtrips, hard sentence -> %s", matched, total, rendered, total,
                  hard.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"ddim inversion roundtrip", inversion_roundtrip},
      {"fusion identities", fusion_identities},
      {"mask schedule exactness", schedule_exactness},
      {"stimulus efficacy", stimulus_efficacy},
      {"ablation ordering", ablation_ordering},
      {"layout solver oracle", solver_oracle},
      {"alpha sweep shape", alpha_sweep},
      {"end-to-end determinism", run_determinism},
      {"parser corpus", parser_corpus},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
