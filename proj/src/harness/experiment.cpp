// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdio>
#include <fstream>

#include "duet/errors.hpp"
#include "duet/experiment.hpp"
#include "duet/rng.hpp"

namespace duet {

Session::Session(const ExperimentConfig& cfg, Dataset data)
    : cfg_(cfg), data_(std::move(data)), model_(std::make_unique<HybridModel>(cfg.model)) {
  if (data_.train.empty() || data_.eval.empty()) throw ConfigError("dataset has an empty split");
  train_cache_.resize(data_.train.size());
  eval_cache_.resize(data_.eval.size());
}

void Session::set_feature_cache(bool on) {
  cache_on_ = on;
  if (!on) {
    for (auto& c : train_cache_) c.reset();
    for (auto& c : eval_cache_) c.reset();
  }
}

std::vector<ImageFeatures> Session::encode(const Sample& s) const {
  std::vector<ImageFeatures> out;
  out.reserve(s.images.size());
  for (const ImageBuffer& img : s.images) out.push_back(model_->encode(img));
  return out;
}

const std::vector<ImageFeatures>& Session::features(bool train, std::size_t index) {
  auto& cache = train ? train_cache_ : eval_cache_;
  const Sample& s = train ? data_.train.at(index) : data_.eval.at(index);
  auto& slot = cache.at(index);
  if (!slot) {
    if (cache_on_) {
      NoGradGuard no_grad;
      slot = encode(s);
    } else {
      slot = encode(s);
    }
  }
  return *slot;
}

Tensor Session::batch_loss(const std::vector<std::size_t>& indices) {
  std::vector<AssembledSequence> seqs;
  seqs.reserve(indices.size());
  for (std::size_t i : indices) {
    const Sample& s = data_.train.at(i);
    seqs.push_back(model_->assemble(features(true, i), s.question, s.answer));
    if (!cache_on_) train_cache_[i].reset();
  }
  std::vector<const AssembledSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  return lm_loss(model_->lm(), ptrs);
}

std::string Session::answer(const Sample& s) {
  NoGradGuard no_grad;
  const std::vector<ImageFeatures> feats = encode(s);
  const AssembledSequence seq = model_->assemble_prompt(feats, s.question);
  std::vector<TokenId> ids = greedy_decode(model_->lm(), seq, cfg_.eval_max_new);
  if (!ids.empty() && ids.back() == tok::kEos) ids.pop_back();
  return detokenize(ids);
}

double Session::evaluate() {
  NoGradGuard no_grad;
  set_feature_cache(true);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data_.eval.size(); ++i) {
    const Sample& s = data_.eval[i];
    const AssembledSequence seq = model_->assemble_prompt(features(false, i), s.question);
    std::vector<TokenId> ids = greedy_decode(model_->lm(), seq, cfg_.eval_max_new);
    if (!ids.empty() && ids.back() == tok::kEos) ids.pop_back();
    correct += detokenize(ids) == s.answer;
  }
  return static_cast<double>(correct) / static_cast<double>(data_.eval.size());
}

StageRunner Session::make_runner(int stage, AdamW& optimizer, std::size_t start_step) {
  const StagePlan plan = cfg_.plan(stage);
  set_feature_cache(stage == 1 || cfg_.train.freeze_encoders);
  return StageRunner(plan, model_->parameters(), optimizer, data_.train.size(), cfg_.seed,
                     [this](const std::vector<std::size_t>& idx) { return batch_loss(idx); }, start_step);
}

std::string Session::config_hash() const {
  const std::string text = config_to_json(cfg_).dump();
  const std::uint64_t h = fnv1a({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json Session::checkpoint_meta(int stage, std::size_t next_step) const {
  return {{"config_hash", config_hash()}, {"stage", "stage" + std::to_string(stage)}, {"step", next_step}};
}

// ---- reports --------------------------------------------------------------------

nlohmann::json ReportRow::to_json() const {
  return {{"config_id", config_id},
          {"encoders", encoders},
          {"fusion", fusion},
          {"tiling", tiling},
          {"frozen", frozen},
          {"accuracy", accuracy},
          {"encoder_tokens_per_tile", encoder_tokens_per_tile},
          {"fused_tokens_per_tile", fused_tokens_per_tile},
          {"visual_tokens_per_image", visual_tokens_per_image},
          {"train_steps", train_steps},
          {"status", status},
          {"wall_ms", wall_ms}};
}

bool AblationReport::complete() const {
  for (const auto& r : rows) {
    if (r.status != "ok") return false;
  }
  return true;
}

std::string AblationReport::to_csv() const {
  std::string out =
      "config_id,encoders,fusion,tiling,frozen,accuracy,encoder_tokens_per_tile,fused_tokens_per_tile,"
      "visual_tokens_per_image,train_steps,status\n";
  auto quoted = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  char acc[32];
  for (const auto& r : rows) {
    std::snprintf(acc, sizeof acc, "%.4f", r.accuracy);
    out += quoted(r.config_id) + "," + r.encoders + "," + r.fusion + "," + r.tiling + "," + r.frozen + "," + acc +
           "," + std::to_string(r.encoder_tokens_per_tile) + "," + std::to_string(r.fused_tokens_per_tile) + "," +
           std::to_string(r.visual_tokens_per_image) + "," + std::to_string(r.train_steps) + "," +
           quoted(r.status) + "\n";
  }
  return out;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) rows_json.push_back(r.to_json());
  return {{"complete", complete()}, {"rows", rows_json}};
}

// ---- runs -----------------------------------------------------------------------

Dataset load_or_generate(const ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) return read_dataset(cfg.data_dir);
  return generate(cfg.task);
}

namespace {

ReportRow describe(const ExperimentConfig& cfg) {
  const ModelConfig& m = cfg.model;
  ReportRow r;
  r.config_id = cfg.id;
  r.encoders = to_string(m.encoders);
  r.fusion = m.encoders == EncoderSet::AB ? to_string(m.fusion) : "none";
  r.tiling = m.tiling ? "on" : "off";
  r.frozen = cfg.train.freeze_encoders ? "yes" : "no";
  r.encoder_tokens_per_tile = m.encoder_tokens_per_tile();
  r.fused_tokens_per_tile = m.fused_tokens_per_tile();
  r.train_steps = cfg.train.stage1.steps + cfg.train.stage2.steps;
  return r;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  return run_experiment(cfg, load_or_generate(cfg), opts);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, Dataset data, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.row = describe(cfg);
  Session session(cfg, std::move(data));
  result.row.visual_tokens_per_image =
      cfg.model.fused_tokens_per_tile() * session.model().tile(session.data().eval.front().images.front()).patch_count();

  std::ofstream metrics_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    metrics_file.open(opts.out_dir / "metrics.jsonl");
  }
  MetricsLog log(metrics_file.is_open() ? &metrics_file : nullptr);
  std::optional<AdamW> last_opt;
  for (int stage = 1; stage <= 2; ++stage) {
    const StagePlan plan = cfg.plan(stage);
    last_opt.emplace(AdamWConfig{0.9, 0.999, 1e-8, plan.weight_decay});
    if (plan.steps == 0) continue;
    StageRunner runner = session.make_runner(stage, *last_opt);
    runner.run(log);
    if (opts.progress != nullptr) {
      *opts.progress << cfg.id << " " << plan.name << ": " << plan.steps << " steps, last loss "
                     << log.records().back().loss << '\n';
    }
  }
  result.checkpoint =
      Checkpoint::capture(session.model().parameters(), &*last_opt, session.checkpoint_meta(2, cfg.train.stage2.steps));
  if (!opts.out_dir.empty()) {
    result.checkpoint.save(opts.out_dir / "checkpoint");
    std::ofstream(opts.out_dir / "config.json") << config_to_json(cfg).dump(2) << '\n';
  }
  result.row.accuracy = session.evaluate();
  if (opts.progress != nullptr) *opts.progress << cfg.id << " eval accuracy " << result.row.accuracy << '\n';
  result.metrics = log.records();
  result.row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

AblationReport ablate(const std::vector<MatrixCell>& cells, const RunOptions& opts) {
  AblationReport report;
  for (const MatrixCell& cell : cells) {
    RunOptions cell_opts = opts;
    if (!opts.out_dir.empty()) cell_opts.out_dir = opts.out_dir / cell.id;
    try {
      report.rows.push_back(run_experiment(cell.config, cell_opts).row);
    } catch (const std::exception& e) {
      ReportRow row = describe(cell.config);
      row.status = std::string("failed: ") + e.what();
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace duet
