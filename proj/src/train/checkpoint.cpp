// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>

#include "duet/errors.hpp"
#include "duet/trainer.hpp"

namespace duet {
namespace {

constexpr const char* kMomentM = "adam.m/";
constexpr const char* kMomentV = "adam.v/";

void snap_and_append(Checkpoint& ck, const std::string& name, const std::vector<std::size_t>& shape,
                     std::span<double> values) {
  Checkpoint::Entry e{name, shape, ck.blob.size(), values.size()};
  for (double& x : values) {
    const float f = static_cast<float>(x);
    x = static_cast<double>(f);
    ck.blob.push_back(f);
  }
  ck.entries.push_back(std::move(e));
}

const Checkpoint::Entry* find_entry(const std::vector<Checkpoint::Entry>& entries, const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

}  // namespace

Checkpoint Checkpoint::capture(const ParameterRefs& params, AdamW* optimizer, nlohmann::json meta) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  for (Parameter* p : params) snap_and_append(ck, p->name, p->tensor.shape(), p->tensor.mutable_data());
  if (optimizer != nullptr) {
    ck.meta["adam_steps"] = optimizer->steps_taken();
    for (auto& [name, mom] : optimizer->moments()) {
      snap_and_append(ck, kMomentM + name, {mom.m.size()}, mom.m);
      snap_and_append(ck, kMomentV + name, {mom.v.size()}, mom.v);
    }
  }
  return ck;
}

void Checkpoint::restore(const ParameterRefs& params, AdamW* optimizer) const {
  for (Parameter* p : params) {
    const Entry* e = find_entry(entries, p->name);
    if (e == nullptr) throw ContractError("checkpoint: no entry for parameter " + p->name);
    if (e->shape != p->tensor.shape()) {
      throw ContractError("checkpoint: shape mismatch for " + p->name + ": " + shape_str(e->shape) + " vs " +
                          shape_str(p->tensor.shape()));
    }
    auto dst = p->tensor.mutable_data();
    for (std::size_t i = 0; i < e->count; ++i) dst[i] = blob[e->offset + i];
  }
  if (optimizer == nullptr) return;
  optimizer->moments().clear();
  optimizer->set_steps_taken(meta.value("adam_steps", std::uint64_t{0}));
  const std::string pm = kMomentM;
  const std::string pv = kMomentV;
  for (const Entry& e : entries) {
    const bool is_m = e.name.starts_with(pm);
    if (!is_m && !e.name.starts_with(pv)) continue;
    auto& mom = optimizer->moments()[e.name.substr(pm.size())];
    auto& dst = is_m ? mom.m : mom.v;
    dst.assign(blob.begin() + static_cast<std::ptrdiff_t>(e.offset),
               blob.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count));
  }
}

nlohmann::json Checkpoint::manifest() const {
  nlohmann::json j = meta;
  j["format"] = "f32-le";
  j["entries"] = nlohmann::json::array();
  for (const Entry& e : entries) {
    j["entries"].push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"count", e.count}});
  }
  return j;
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.json");
    m << manifest().dump(2) << '\n';
    if (!m) throw std::runtime_error("checkpoint: cannot write " + (dir / "manifest.json").string());
  }
  std::ofstream w(dir / "weights.bin", std::ios::binary);
  for (float f : blob) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                           static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    w.write(reinterpret_cast<const char*>(le), 4);
  }
  if (!w) throw std::runtime_error("checkpoint: cannot write " + (dir / "weights.bin").string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.json");
  if (!m) throw std::runtime_error("checkpoint: cannot read " + (dir / "manifest.json").string());
  nlohmann::json j = nlohmann::json::parse(m);
  Checkpoint ck;
  std::size_t total = 0;
  for (const auto& e : j.at("entries")) {
    Entry entry{e.at("name").get<std::string>(), e.at("shape").get<std::vector<std::size_t>>(),
                e.at("offset").get<std::size_t>(), e.at("count").get<std::size_t>()};
    total = std::max(total, entry.offset + entry.count);
    ck.entries.push_back(std::move(entry));
  }
  j.erase("entries");
  j.erase("format");
  ck.meta = std::move(j);

  std::ifstream w(dir / "weights.bin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(w)), std::istreambuf_iterator<char>());
  if (bytes.size() != total * 4) {
    throw ContractError("checkpoint: weights.bin has " + std::to_string(bytes.size()) + " bytes, manifest needs " +
                        std::to_string(total * 4));
  }
  ck.blob.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const unsigned char* b = &bytes[4 * i];
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    ck.blob[i] = std::bit_cast<float>(bits);
  }
  return ck;
}

}  // namespace duet
