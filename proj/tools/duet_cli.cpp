// SPDX-License-Identifier: Apache-2.0
// duet: dataset generation, training, evaluation and ablation runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "duet/errors.hpp"
#include "duet/experiment.hpp"
#include "duet/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string report = "csv";
};

duet::ExperimentConfig load(const Common& c) {
  json doc = json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw duet::ConfigError("cannot open config " + c.config);
    doc = json::parse(in);
  }
  if (c.seed) doc["seed"] = *c.seed;
  return duet::config_from_json(doc);
}

void write_report(const duet::AblationReport& report, const Common& c) {
  const std::string text = c.report == "json" ? report.to_json().dump(2) + "\n" : report.to_csv();
  std::cout << text;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream(fs::path(c.out) / "report.csv") << report.to_csv();
    std::ofstream(fs::path(c.out) / "report.json") << report.to_json().dump(2) << '\n';
  }
}

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--report", c.report, "report format")->check(CLI::IsMember({"csv", "json"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid vision-encoder multimodal pipeline at desk scale"};
  app.require_subcommand(1);

  Common gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write the configured task as JSON-lines + PPM files");
  add_common(gen_cmd, gen, true);

  Common train;
  auto* train_cmd = app.add_subcommand("train", "run both training stages, evaluate, save a checkpoint");
  add_common(train_cmd, train, false);

  Common eval;
  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved checkpoint on the eval split");
  add_common(eval_cmd, eval, false);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory (default: <out>/checkpoint)");

  Common abl;
  auto* abl_cmd = app.add_subcommand("ablate", "run every cell of a matrix config");
  add_common(abl_cmd, abl, false);
  abl_cmd->get_option("--config")->required();

  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t tile = 448;
  std::size_t max_tiles = 6;
  std::size_t images = 1;
  bool no_thumbnail = false;
  Common insp;
  auto* insp_cmd = app.add_subcommand("inspect-tiling", "print grid selection and patch counts for an image size");
  insp_cmd->add_option("--width", width, "image width")->required();
  insp_cmd->add_option("--height", height, "image height")->required();
  insp_cmd->add_option("--tile", tile, "tile size");
  insp_cmd->add_option("--max-tiles", max_tiles, "tile cap");
  insp_cmd->add_option("--images", images, "number of images of this size");
  insp_cmd->add_flag("--no-thumbnail", no_thumbnail, "do not append the thumbnail");
  insp_cmd->add_option("--config", insp.config, "take tile size and token counts from this config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      const duet::ExperimentConfig cfg = load(gen);
      duet::write_dataset(gen.out, duet::generate(cfg.task));
      std::cout << "wrote " << cfg.task.n_train << " train / " << cfg.task.n_eval << " eval samples to " << gen.out
                << '\n';
      return 0;
    }
    if (*train_cmd) {
      const duet::ExperimentConfig cfg = load(train);
      duet::RunOptions opts;
      opts.out_dir = train.out;
      opts.progress = &std::cerr;
      duet::AblationReport report;
      report.rows.push_back(duet::run_experiment(cfg, opts).row);
      write_report(report, train);
      return 0;
    }
    if (*eval_cmd) {
      const duet::ExperimentConfig cfg = load(eval);
      fs::path dir = checkpoint.empty() ? fs::path(eval.out) / "checkpoint" : fs::path(checkpoint);
      duet::Session session(cfg, duet::load_or_generate(cfg));
      duet::Checkpoint::load(dir).restore(session.model().parameters(), nullptr);
      const double acc = session.evaluate();
      std::cout << json{{"config_id", cfg.id}, {"accuracy", acc}}.dump() << '\n';
      return 0;
    }
    if (*abl_cmd) {
      std::vector<duet::MatrixCell> cells = duet::load_matrix(abl.config);
      if (abl.seed) {
        for (auto& c : cells) {
          json doc = duet::config_to_json(c.config);
          doc["seed"] = *abl.seed;
          c.config = duet::config_from_json(doc);
        }
      }
      duet::RunOptions opts;
      opts.out_dir = abl.out;
      opts.progress = &std::cerr;
      const duet::AblationReport report = duet::ablate(cells, opts);
      write_report(report, abl);
      return report.complete() ? 0 : 1;
    }
    if (*insp_cmd) {
      std::optional<duet::ModelConfig> model;
      if (!insp.config.empty()) {
        model = load(insp).model;
        tile = model->tile_size();
        max_tiles = model->max_tiles;
        no_thumbnail = !model->thumbnail;
      }
      const duet::TileGrid grid = duet::select_grid(width, height, max_tiles, tile);
      const std::size_t thumb = (grid.count() > 1 && !no_thumbnail) ? 1 : 0;
      const std::size_t patches = grid.count() + thumb;
      json j{{"width", width},          {"height", height},        {"tile_size", tile},
             {"max_tiles", max_tiles},  {"grid_cols", grid.cols},  {"grid_rows", grid.rows},
             {"tiles", grid.count()},   {"thumbnail", thumb == 1}, {"patches_per_image", patches},
             {"images", images},        {"total_patches", patches * images}};
      if (model) {
        j["fused_tokens_per_tile"] = model->fused_tokens_per_tile();
        j["visual_tokens"] = model->fused_tokens_per_tile() * patches * images;
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
  } catch (const duet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
