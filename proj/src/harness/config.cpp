// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include "duet/errors.hpp"
#include "duet/experiment.hpp"

namespace duet {
namespace {

using nlohmann::json;

json encoder_to_json(const EncoderConfig& e) {
  return {{"name", e.name},
          {"tile_size", e.tile_size},
          {"patch_size", e.patch_size},
          {"channels", e.channels},
          {"embed_dim", e.embed_dim},
          {"depth", e.depth},
          {"heads", e.heads},
          {"grid_side", e.grid_side},
          {"unshuffle_r", e.unshuffle_r},
          {"basis", to_string(e.basis)},
          {"norm_mean", e.norm_mean},
          {"norm_std", e.norm_std}};
}

json stage_to_json(const StageSettings& s) {
  json j{{"steps", s.steps}, {"lr", s.lr}, {"weight_decay", s.weight_decay}, {"warmup_steps", nullptr}};
  if (s.warmup_steps) j["warmup_steps"] = *s.warmup_steps;
  return j;
}

void find_unknown(const json& given, const json& known, const std::string& path, std::vector<std::string>& out) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!known.contains(it.key())) {
      out.push_back(key);
    } else if (it->is_object() && known[it.key()].is_object()) {
      find_unknown(*it, known[it.key()], key, out);
    }
  }
}

void merge_into(json& dst, const json& src) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    if (it->is_object() && dst.contains(it.key()) && dst[it.key()].is_object()) {
      merge_into(dst[it.key()], *it);
    } else {
      dst[it.key()] = *it;
    }
  }
}

// Typed read of a key that is known to exist after merging with the defaults.
template <typename T>
T read(const json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + path + key + "': " + e.what());
  }
}

EncoderConfig encoder_from_json(const json& j, const std::string& path) {
  EncoderConfig e;
  e.name = read<std::string>(j, "name", path);
  e.tile_size = read<std::size_t>(j, "tile_size", path);
  e.patch_size = read<std::size_t>(j, "patch_size", path);
  e.channels = read<std::size_t>(j, "channels", path);
  e.embed_dim = read<std::size_t>(j, "embed_dim", path);
  e.depth = read<std::size_t>(j, "depth", path);
  e.heads = read<std::size_t>(j, "heads", path);
  e.grid_side = read<std::size_t>(j, "grid_side", path);
  e.unshuffle_r = read<std::size_t>(j, "unshuffle_r", path);
  e.basis = patch_basis_from_string(read<std::string>(j, "basis", path));
  e.norm_mean = read<std::vector<double>>(j, "norm_mean", path);
  e.norm_std = read<std::vector<double>>(j, "norm_std", path);
  return e;
}

StageSettings stage_from_json(const json& j, const std::string& path) {
  StageSettings s;
  s.steps = read<std::size_t>(j, "steps", path);
  s.lr = read<double>(j, "lr", path);
  s.weight_decay = read<double>(j, "weight_decay", path);
  if (!j.at("warmup_steps").is_null()) s.warmup_steps = read<std::size_t>(j, "warmup_steps", path);
  return s;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.id = "desk";
  c.seed = 0;
  c.model = ModelConfig::desk();
  c.train.batch_size = 16;
  c.train.stage1 = StageSettings{100, 2e-3, 0.01, std::nullopt};
  c.train.stage2 = StageSettings{600, 2e-3, 0.01, std::nullopt};
  return c;
}

StagePlan ExperimentConfig::plan(int stage) const {
  const StageSettings& s = stage == 1 ? train.stage1 : train.stage2;
  StagePlan p = stage == 1 ? StagePlan::stage1(s.steps, s.lr, s.weight_decay)
                           : StagePlan::stage2(s.steps, s.lr, s.weight_decay);
  if (stage == 1 && !train.stage1_train_projector_a) p.frozen_prefixes.push_back("projectorA");
  if (stage == 2 && !train.freeze_encoders) p.frozen_prefixes.clear();
  if (s.warmup_steps) p.warmup_steps = *s.warmup_steps;
  p.batch_size = train.batch_size;
  return p;
}

json config_to_json(const ExperimentConfig& c) {
  const ModelConfig& m = c.model;
  return {
      {"id", c.id},
      {"seed", c.seed},
      {"data_dir", c.data_dir},
      {"task",
       {{"kind", to_string(c.task.kind)},
        {"image_width", c.task.image_width},
        {"image_height", c.task.image_height},
        {"tile_size", c.task.tile_size},
        {"n_classes", c.task.n_classes},
        {"n_train", c.task.n_train},
        {"n_eval", c.task.n_eval},
        {"patch_a", c.task.patch_a},
        {"patch_b", c.task.patch_b}}},
      {"model",
       {{"encoders", to_string(m.encoders)},
        {"fusion", to_string(m.fusion)},
        {"projector_hidden", m.projector_hidden},
        {"tiling", m.tiling},
        {"max_tiles", m.max_tiles},
        {"thumbnail", m.thumbnail},
        {"encoder_a", encoder_to_json(m.encoder_a)},
        {"encoder_b", encoder_to_json(m.encoder_b)},
        {"lm",
         {{"d_lm", m.lm.d_lm},
          {"layers", m.lm.layers},
          {"heads", m.lm.heads},
          {"vocab", m.lm.vocab},
          {"context_limit", m.lm.context_limit}}}}},
      {"train",
       {{"freeze_encoders", c.train.freeze_encoders},
        {"batch_size", c.train.batch_size},
        {"stage1_train_projector_a", c.train.stage1_train_projector_a},
        {"stage1", stage_to_json(c.train.stage1)},
        {"stage2", stage_to_json(c.train.stage2)}}},
      {"eval", {{"max_new", c.eval_max_new}}},
  };
}

ExperimentConfig config_from_json(const json& given) {
  if (!given.is_object()) throw ConfigError("config must be a JSON object");
  json doc = config_to_json(ExperimentConfig::desk());
  std::vector<std::string> unknown;
  find_unknown(given, doc, "", unknown);
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  merge_into(doc, given);

  ExperimentConfig c;
  c.id = read<std::string>(doc, "id", "");
  c.seed = read<std::uint64_t>(doc, "seed", "");
  c.data_dir = read<std::string>(doc, "data_dir", "");

  const json& t = doc["task"];
  c.task.kind = task_kind_from_string(read<std::string>(t, "kind", "task."));
  c.task.image_width = read<std::size_t>(t, "image_width", "task.");
  c.task.image_height = read<std::size_t>(t, "image_height", "task.");
  c.task.tile_size = read<std::size_t>(t, "tile_size", "task.");
  c.task.n_classes = read<std::size_t>(t, "n_classes", "task.");
  c.task.n_train = read<std::size_t>(t, "n_train", "task.");
  c.task.n_eval = read<std::size_t>(t, "n_eval", "task.");
  c.task.patch_a = read<std::size_t>(t, "patch_a", "task.");
  c.task.patch_b = read<std::size_t>(t, "patch_b", "task.");
  c.task.seed = c.seed;

  const json& m = doc["model"];
  c.model.encoders = encoder_set_from_string(read<std::string>(m, "encoders", "model."));
  c.model.fusion = fusion_kind_from_string(read<std::string>(m, "fusion", "model."));
  c.model.projector_hidden = read<std::size_t>(m, "projector_hidden", "model.");
  c.model.tiling = read<bool>(m, "tiling", "model.");
  c.model.max_tiles = read<std::size_t>(m, "max_tiles", "model.");
  c.model.thumbnail = read<bool>(m, "thumbnail", "model.");
  c.model.encoder_a = encoder_from_json(m["encoder_a"], "model.encoder_a.");
  c.model.encoder_b = encoder_from_json(m["encoder_b"], "model.encoder_b.");
  const json& lm = m["lm"];
  c.model.lm.d_lm = read<std::size_t>(lm, "d_lm", "model.lm.");
  c.model.lm.layers = read<std::size_t>(lm, "layers", "model.lm.");
  c.model.lm.heads = read<std::size_t>(lm, "heads", "model.lm.");
  c.model.lm.vocab = read<std::size_t>(lm, "vocab", "model.lm.");
  c.model.lm.context_limit = read<std::size_t>(lm, "context_limit", "model.lm.");
  c.model.seed = c.seed;

  const json& tr = doc["train"];
  c.train.freeze_encoders = read<bool>(tr, "freeze_encoders", "train.");
  c.train.batch_size = read<std::size_t>(tr, "batch_size", "train.");
  c.train.stage1_train_projector_a = read<bool>(tr, "stage1_train_projector_a", "train.");
  c.train.stage1 = stage_from_json(tr["stage1"], "train.stage1.");
  c.train.stage2 = stage_from_json(tr["stage2"], "train.stage2.");
  c.eval_max_new = read<std::size_t>(doc["eval"], "max_new", "eval.");

  if (c.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  c.task.validate();
  try {
    c.model.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json_file(path)); }

void apply_override(json& doc, const std::string& dotted_key, const json& value) {
  json* node = &doc;
  std::stringstream ss(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  const json defaults = config_to_json(ExperimentConfig::desk());
  const json* known = &defaults;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!known->is_object() || !known->contains(parts[i])) {
      throw ConfigError("unknown config keys: " + dotted_key);
    }
    known = &(*known)[parts[i]];
    if (i + 1 == parts.size()) {
      (*node)[parts[i]] = value;
    } else {
      if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
      node = &(*node)[parts[i]];
    }
  }
}

std::vector<MatrixCell> parse_matrix(const json& j, const std::filesystem::path& base_dir) {
  static const json kKnown{{"id", ""}, {"base", nullptr}, {"cells", nullptr}};
  std::vector<std::string> unknown;
  find_unknown(j, kKnown, "", unknown);
  if (!unknown.empty()) {
    std::string msg = "unknown matrix keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  auto resolve = [&](const json& ref) {
    if (ref.is_string()) return read_json_file(base_dir / ref.get<std::string>());
    if (ref.is_object()) return ref;
    throw ConfigError("matrix: config reference must be a path or an object");
  };
  const json base = j.contains("base") ? resolve(j["base"]) : json::object();
  if (!j.contains("cells") || !j["cells"].is_array() || j["cells"].empty()) {
    throw ConfigError("matrix: 'cells' must be a non-empty array");
  }
  std::vector<MatrixCell> cells;
  for (const json& cell : j["cells"]) {
    static const json kCellKeys{{"id", ""}, {"config", nullptr}, {"overrides", nullptr}};
    unknown.clear();
    find_unknown(cell, kCellKeys, "cells[].", unknown);
    if (!unknown.empty()) throw ConfigError("unknown matrix keys: " + unknown.front());
    json doc = base;
    if (cell.contains("config")) merge_into(doc, resolve(cell["config"]));
    if (cell.contains("overrides")) {
      for (auto it = cell["overrides"].begin(); it != cell["overrides"].end(); ++it) {
        apply_override(doc, it.key(), *it);
      }
    }
    MatrixCell mc;
    mc.id = cell.value("id", "cell" + std::to_string(cells.size()));
    doc["id"] = mc.id;
    mc.config = config_from_json(doc);
    cells.push_back(std::move(mc));
  }
  return cells;
}

std::vector<MatrixCell> load_matrix(const std::filesystem::path& path) {
  return parse_matrix(read_json_file(path), path.parent_path());
}

}  // namespace duet
