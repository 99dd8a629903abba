// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one PASS/FAIL line per criterion.
//
//   duet_acceptance            run all criteria
//   duet_acceptance 3 5        run only criteria 3 and 5
//
// Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "duet/errors.hpp"
#include "duet/experiment.hpp"
#include "duet/finite_diff.hpp"
#include "duet/image.hpp"
#include "duet/lm.hpp"
#include "duet/model.hpp"
#include "duet/rng.hpp"
#include "duet/tasks.hpp"
#include "duet/text.hpp"
#include "oracles.hpp"

using namespace duet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1 -------------------------------------------------------------------

Outcome token_arithmetic() {
  const ModelConfig m = ModelConfig::full_scale();
  const std::size_t a = m.encoder_a.tokens_per_tile();
  const std::size_t b = m.encoder_b.tokens_per_tile();
  const std::size_t total = token_budget(m.encoder_a, m.encoder_b);
  std::ostringstream d;
  d << "A=" << a << " B=" << b << " per-tile=" << total << " fused=" << m.fused_tokens_per_tile();
  return {a == 256 && b == 256 && total == 512 && m.fused_tokens_per_tile() == 512, d.str()};
}

// ---- 2 -------------------------------------------------------------------

Outcome tiling_arithmetic() {
  const TileGrid g = select_grid(2048, 1280, 6, 448);
  const ImageBuffer img(1280, 2048, 3, 0.5);
  const TileSet one = segment(img, 448, 6, true);
  bool tiles_ok = one.tiles.size() == 6 && one.thumbnail.has_value();
  for (const ImageBuffer* p : one.patches()) tiles_ok = tiles_ok && p->width == 448 && p->height == 448;
  const std::size_t two = 2 * one.patch_count();
  std::ostringstream d;
  d << "grid " << g.cols << "x" << g.rows << ", patches per image " << one.patch_count() << ", two images " << two;
  return {g.cols == 3 && g.rows == 2 && tiles_ok && one.patch_count() == 7 && two == 14, d.str()};
}

// ---- 3 -------------------------------------------------------------------

Outcome unshuffle_law() {
  Rng rng(3);
  std::size_t bad = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t r = 1 + rng.below(4);
    const std::size_t n = 1 + rng.below(3);
    const std::size_t c = 1 + rng.below(5);
    const std::size_t s = r * (1 + rng.below(5));
    std::vector<double> v(n * c * s * s);
    for (double& x : v) x = rng.normal();
    const TokenGrid in = TokenGrid::from_tensor(Tensor::from({n, c, s, s}, v));
    const TokenGrid out = pixel_unshuffle(in, r);
    const TokenGrid back = pixel_shuffle(out, r);
    const bool shape_ok = out.data.shape() == Shape{n, c * r * r, s / r, s / r};
    const bool exact = back.data.shape() == in.data.shape() &&
                       std::equal(v.begin(), v.end(), back.data.data().begin());
    if (!shape_ok || !exact) ++bad;
  }
  return {bad == 0, std::to_string(200 - bad) + "/200 cases"};
}

// ---- 4 -------------------------------------------------------------------

Outcome fusion_invariants() {
  Rng rng(4);
  std::size_t bad = 0;
  std::string first;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(7);
    const std::size_t ta = 1 + rng.below(9);
    const std::size_t tb = 1 + rng.below(9);
    const std::size_t d = 1 + rng.below(5);
    const auto a = oracle::random_sequence(rng, n, ta, d, Branch::A);
    const auto b = oracle::random_sequence(rng, n, tb, d, Branch::B);
    const std::string why = oracle::check_interleave(a, b, fuse_post_interleave(a, b));
    if (!why.empty()) {
      ++bad;
      if (first.empty()) first = why;
    }
    const auto b_eq = oracle::random_sequence(rng, n, ta, d, Branch::B);
    const Linear down("down", 2 * d, d, 11, false);
    const auto ch = fuse_post_channel(a, b_eq, down);
    if (ch.size() != n * ta || ch.embeddings.shape() != Shape{n * ta, d}) {
      ++bad;
      if (first.empty()) first = "post-channel length";
    }
  }
  return {bad == 0, std::to_string(100 - std::min<std::size_t>(bad, 100)) + "/100 configs" +
                        (first.empty() ? "" : ", first violation: " + first)};
}

// ---- 5 -------------------------------------------------------------------

ModelConfig gradcheck_model() {
  ModelConfig m = ModelConfig::desk();
  m.encoder_a.tile_size = 8;
  m.encoder_a.patch_size = 4;
  m.encoder_a.grid_side = 2;
  m.encoder_a.embed_dim = 8;
  m.encoder_a.heads = 2;
  m.encoder_a.unshuffle_r = 1;
  m.encoder_a.basis = PatchBasis::full;
  m.encoder_b.tile_size = 8;
  m.encoder_b.patch_size = 2;
  m.encoder_b.grid_side = 4;
  m.encoder_b.embed_dim = 4;
  m.encoder_b.heads = 1;
  m.encoder_b.unshuffle_r = 2;
  m.encoder_b.basis = PatchBasis::full;
  m.projector_hidden = 8;
  m.lm.d_lm = 8;
  m.lm.layers = 1;
  m.lm.heads = 2;
  m.lm.context_limit = 32;
  m.seed = 5;
  return m;
}

Outcome gradient_check() {
  HybridModel model(gradcheck_model());
  Rng rng(5);
  // 16x8 image: a 2x1 grid plus the thumbnail.
  ImageBuffer img(8, 16, 3);
  for (double& v : img.pixels) v = rng.uniform();
  auto loss = [&] {
    const ImageFeatures f = model.encode(img);
    const AssembledSequence seq = model.assemble({f}, "q", "ab");
    return lm_loss(model.lm(), {&seq});
  };

  const ParameterRefs params = model.parameters();
  std::size_t n_params = 0;
  for (Parameter* p : params) {
    p->tensor.set_requires_grad(true);
    p->tensor.zero_grad();
    n_params += p->tensor.numel();
  }
  backward(loss());

  double worst = 0.0;
  std::string worst_name;
  for (Parameter* p : params) {
    std::vector<double> analytic(p->tensor.numel(), 0.0);
    if (p->tensor.has_grad()) analytic.assign(p->tensor.grad().begin(), p->tensor.grad().end());
    const Tensor numeric = finite_difference_grad([&](const Tensor&) { return loss().item(); }, p->tensor, 1e-5);
    const double err = max_relative_error(analytic, numeric.data(), 1e-5);
    if (err > worst) {
      worst = err;
      worst_name = p->name;
    }
  }
  return {worst < 1e-4, std::to_string(n_params) + " parameters, max rel err " + fmt("%.3g", worst) + " (" +
                            worst_name + ")"};
}

// ---- 6 -------------------------------------------------------------------

std::map<std::string, std::uint64_t> group_hashes(const ParameterRefs& params) {
  static const std::vector<std::string> groups{"encoderA", "encoderB", "projectorA", "projectorB", "lm"};
  std::map<std::string, std::uint64_t> out;
  for (const auto& g : groups) out[g] = 1469598103934665603ULL;
  for (Parameter* p : params) {
    for (const auto& g : groups) {
      if (!matches_prefix(p->name, g)) continue;
      const auto d = p->tensor.data();
      out[g] = fnv1a({reinterpret_cast<const unsigned char*>(d.data()), d.size_bytes()}, out[g]);
    }
  }
  return out;
}

Outcome freeze_semantics() {
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.task.n_train = 16;
  cfg.task.n_eval = 16;
  cfg.train.batch_size = 16;
  cfg.train.stage1 = {55, 1e-3, 0.0, 5};
  cfg.train.stage2 = {5, 1e-3, 0.01, 1};
  Session session(cfg, load_or_generate(cfg));
  const ParameterRefs params = session.model().parameters();

  const auto before1 = group_hashes(params);
  AdamW opt1(AdamWConfig{.weight_decay = cfg.plan(1).weight_decay});
  StageRunner r1 = session.make_runner(1, opt1);
  std::vector<double> losses;
  while (!r1.done()) losses.push_back(r1.step().loss);
  const auto after1 = group_hashes(params);

  const std::size_t warm = cfg.plan(1).warmup_steps;
  std::size_t rises = 0;
  for (std::size_t i = warm + 1; i < losses.size() && i <= warm + 50; ++i) rises += losses[i] >= losses[i - 1];
  const bool s1_frozen = before1.at("encoderA") == after1.at("encoderA") &&
                         before1.at("encoderB") == after1.at("encoderB") && before1.at("lm") == after1.at("lm");
  const bool s1_moves = before1.at("projectorA") != after1.at("projectorA") &&
                        before1.at("projectorB") != after1.at("projectorB");

  AdamW opt2(AdamWConfig{.weight_decay = cfg.plan(2).weight_decay});
  StageRunner r2 = session.make_runner(2, opt2);
  while (!r2.done()) r2.step();
  const auto after2 = group_hashes(params);
  const bool s2_frozen = after1.at("encoderA") == after2.at("encoderA") && after1.at("encoderB") == after2.at("encoderB");
  const bool s2_moves = after1.at("projectorA") != after2.at("projectorA") &&
                        after1.at("projectorB") != after2.at("projectorB") && after1.at("lm") != after2.at("lm");

  std::ostringstream d;
  d << "stage1 frozen bytes " << (s1_frozen ? "identical" : "CHANGED") << ", projectors "
    << (s1_moves ? "updated" : "NOT updated") << ", loss " << fmt("%.4f", losses[warm]) << " -> "
    << fmt("%.4f", losses.back()) << " with " << rises << " non-decreasing steps; stage2 encoders "
    << (s2_frozen ? "identical" : "CHANGED") << ", projectors+lm " << (s2_moves ? "updated" : "NOT updated");
  return {s1_frozen && s1_moves && rises == 0 && s2_frozen && s2_moves, d.str()};
}

// ---- 7 -------------------------------------------------------------------

Outcome hybrid_beats_single() {
  ExperimentConfig base = ExperimentConfig::desk();
  const Dataset data = load_or_generate(base);

  // The generator's construction: the oracle reads every eval label at full
  // resolution, and shape/texture live in disjoint frequency bands.
  std::size_t oracle_wrong = 0;
  for (const Sample& s : data.eval) oracle_wrong += complementary_oracle(data.spec, s.images[0]) != s.label;
  Rng rng(7);
  std::size_t violations = 0;
  for (std::size_t shape = 0; shape < kShapes; ++shape) {
    for (std::size_t tex = 0; tex < kTextures; ++tex) {
      ComplementaryParams p;
      p.shape = shape;
      p.texture = tex;
      p.offset_x = rng.below(3);
      p.offset_y = rng.below(3);
      p.background = {60, 70, 50};
      p.foreground = {170, 180, 160};
      p.amplitude = 24;
      violations += complementary_frequency_violations(data.spec, p);
    }
  }

  std::map<std::string, double> acc;
  for (EncoderSet e : {EncoderSet::AB, EncoderSet::A, EncoderSet::B}) {
    ExperimentConfig cfg = base;
    cfg.model.encoders = e;
    cfg.id = to_string(e);
    acc[to_string(e)] = run_experiment(cfg, data, {}).row.accuracy;
  }
  const double hybrid = acc["A+B"];
  const double best_single = std::max(acc["A"], acc["B"]);
  std::ostringstream d;
  d << "hybrid " << fmt("%.3f", hybrid) << ", A-only " << fmt("%.3f", acc["A"]) << ", B-only "
    << fmt("%.3f", acc["B"]) << ", margin " << fmt("%.3f", hybrid - best_single) << "; oracle errors "
    << oracle_wrong << ", frequency violations " << violations;
  return {hybrid >= 0.90 && acc["A"] <= 0.60 && acc["B"] <= 0.60 && hybrid - best_single >= 0.30 &&
              oracle_wrong == 0 && violations == 0,
          d.str()};
}

// ---- 8 -------------------------------------------------------------------

Outcome tiling_helps() {
  const auto cells = load_matrix(std::filesystem::path(DUET_SOURCE_DIR) / "config" / "examples" / "tiling_matrix.json");
  const Dataset data = load_or_generate(cells.front().config);
  std::map<bool, double> acc;
  std::map<bool, std::size_t> steps;
  for (const auto& cell : cells) {
    const ExperimentResult r = run_experiment(cell.config, data, {});
    acc[cell.config.model.tiling] = r.row.accuracy;
    steps[cell.config.model.tiling] = r.row.train_steps;
  }
  std::ostringstream d;
  d << "tiling on " << fmt("%.3f", acc[true]) << ", off " << fmt("%.3f", acc[false]) << ", margin "
    << fmt("%.3f", acc[true] - acc[false]) << ", steps " << steps[true] << "/" << steps[false];
  return {acc.size() == 2 && steps[true] == steps[false] && acc[true] >= acc[false] + 0.15, d.str()};
}

// ---- 9 -------------------------------------------------------------------

ExperimentConfig small_config() {
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.task.n_train = 64;
  cfg.task.n_eval = 16;
  cfg.train.stage1.steps = 6;
  cfg.train.stage2.steps = 6;
  return cfg;
}

std::string metrics_stream(const std::vector<MetricsRecord>& records) {
  std::string out;
  for (const auto& r : records) out += r.to_json(false).dump() + "\n";
  return out;
}

Outcome determinism() {
  const ExperimentConfig cfg = small_config();
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(cfg);
  const bool same_stream = !a.metrics.empty() && metrics_stream(a.metrics) == metrics_stream(b.metrics);
  const bool same_report = a.row.accuracy == b.row.accuracy;

  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "duet_acceptance_ckpt";
  std::filesystem::remove_all(dir);
  const Dataset data = load_or_generate(cfg);
  const std::size_t k = 3;
  double continued = 0.0;
  {
    Session s(cfg, data);
    AdamW opt(AdamWConfig{.weight_decay = cfg.plan(2).weight_decay});
    StageRunner r = s.make_runner(2, opt);
    for (std::size_t i = 0; i < k; ++i) r.step();
    Checkpoint::capture(s.model().parameters(), &opt, s.checkpoint_meta(2, k)).save(dir);
    continued = r.step().loss;
  }
  double resumed = 0.0;
  {
    Session s(cfg, data);
    AdamW opt(AdamWConfig{.weight_decay = cfg.plan(2).weight_decay});
    Checkpoint::load(dir).restore(s.model().parameters(), &opt);
    StageRunner r = s.make_runner(2, opt, k);
    resumed = r.step().loss;
  }
  std::filesystem::remove_all(dir);

  std::ostringstream d;
  d << "metrics streams " << (same_stream ? "identical" : "DIFFER") << " (" << a.metrics.size()
    << " records), next-step loss continued " << fmt("%.17g", continued) << " resumed " << fmt("%.17g", resumed);
  return {same_stream && same_report && continued == resumed, d.str()};
}

// ---- 10 ------------------------------------------------------------------

Outcome context_budget() {
  bool raised = false;
  {
    ModelConfig m = ModelConfig::desk();
    m.lm.context_limit = 64;
    HybridModel model(m);
    ImageBuffer img(64, 96, 3, 0.5);  // 3x2 grid + thumbnail = 7 patches, 224 visual tokens
    try {
      model.assemble({model.encode(img)}, "q", "a");
    } catch (const BudgetError&) {
      raised = true;
    }
  }

  // Full-scale lengths with a narrow embedding width: only the positions
  // matter for the budget, not d_lm.
  const ModelConfig full = ModelConfig::full_scale();
  const std::size_t n_visual = 7 * full.fused_tokens_per_tile();
  const std::size_t d = 2;
  VisualSequence v;
  v.n_tiles = 7;
  v.embeddings = Tensor::zeros({n_visual, d});
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t i = 0; i < 512; ++i) v.provenance.push_back({t, i < 256 ? Branch::A : Branch::B, i % 256});
  }
  const auto prompt = tokenize(build_prompt(1, "Describe the image in one short sentence."));
  const auto answer = answer_tokens("ok");
  std::size_t length = 0;
  bool fits = false;
  try {
    const AssembledSequence seq = splice(prompt, answer, {v}, Tensor::zeros({full.lm.vocab, d}), full.lm.context_limit);
    length = seq.size();
    fits = length <= full.lm.context_limit && length == spliced_length(prompt, answer, {n_visual});
  } catch (const BudgetError&) {
  }
  std::ostringstream dd;
  dd << "over-budget " << (raised ? "raised BudgetError" : "NOT raised") << ", full-scale single image " << length
     << " <= " << full.lm.context_limit;
  return {raised && fits, dd.str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "token arithmetic", token_arithmetic},
      {2, "tiling arithmetic", tiling_arithmetic},
      {3, "pixel-unshuffle law", unshuffle_law},
      {4, "fusion invariants", fusion_invariants},
      {5, "end-to-end gradient", gradient_check},
      {6, "freeze semantics", freeze_semantics},
      {7, "hybrid beats single", hybrid_beats_single},
      {8, "tiling helps", tiling_helps},
      {9, "determinism and resume", determinism},
      {10, "context budget", context_budget},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
