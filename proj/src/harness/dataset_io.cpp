// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "duet/errors.hpp"
#include "duet/tasks.hpp"

namespace duet {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json spec_to_json(const TaskSpec& s) {
  return {{"kind", to_string(s.kind)}, {"image_width", s.image_width}, {"image_height", s.image_height},
          {"tile_size", s.tile_size},  {"n_classes", s.n_classes},     {"n_train", s.n_train},
          {"n_eval", s.n_eval},        {"seed", s.seed},               {"patch_a", s.patch_a},
          {"patch_b", s.patch_b}};
}

TaskSpec spec_from_json(const json& j) {
  TaskSpec s;
  s.kind = task_kind_from_string(j.at("kind").get<std::string>());
  s.image_width = j.at("image_width").get<std::size_t>();
  s.image_height = j.at("image_height").get<std::size_t>();
  s.tile_size = j.at("tile_size").get<std::size_t>();
  s.n_classes = j.at("n_classes").get<std::size_t>();
  s.n_train = j.at("n_train").get<std::size_t>();
  s.n_eval = j.at("n_eval").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.patch_a = j.at("patch_a").get<std::size_t>();
  s.patch_b = j.at("patch_b").get<std::size_t>();
  return s;
}

void write_split(const fs::path& dir, const std::string& split, const std::vector<Sample>& samples) {
  std::ofstream index(dir / (split + ".jsonl"));
  if (!index) throw std::runtime_error("cannot write " + (dir / (split + ".jsonl")).string());
  char name[64];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    json paths = json::array();
    for (std::size_t k = 0; k < s.images.size(); ++k) {
      std::snprintf(name, sizeof name, "images/%s_%06zu_%zu.ppm", split.c_str(), i, k);
      write_ppm(dir / name, s.images[k]);
      paths.push_back(name);
    }
    index << json{{"images", paths}, {"question", s.question}, {"answer", s.answer}, {"label", s.label}}.dump()
          << '\n';
  }
}

std::vector<Sample> read_split(const fs::path& dir, const std::string& split) {
  std::ifstream index(dir / (split + ".jsonl"));
  if (!index) throw std::runtime_error("cannot read " + (dir / (split + ".jsonl")).string());
  std::vector<Sample> out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Sample s;
    for (const auto& p : j.at("images")) s.images.push_back(read_ppm(dir / p.get<std::string>()));
    s.question = j.at("question").get<std::string>();
    s.answer = j.at("answer").get<std::string>();
    s.label = j.value("label", std::size_t{0});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "images");
  {
    std::ofstream spec(dir / "spec.json");
    spec << spec_to_json(ds.spec).dump(2) << '\n';
  }
  write_split(dir, "train", ds.train);
  write_split(dir, "eval", ds.eval);
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream spec(dir / "spec.json");
  if (!spec) throw std::runtime_error("cannot read " + (dir / "spec.json").string());
  Dataset ds;
  ds.spec = spec_from_json(json::parse(spec));
  ds.train = read_split(dir, "train");
  ds.eval = read_split(dir, "eval");
  return ds;
}

}  // namespace duet
