// Copyright 2026 The cddpm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cddpm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cddpm/config.hpp"

namespace cddpm {
namespace fs = std::filesystem;
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_tensors(const fs::path& path, const std::vector<const Tensor*>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Tensor* t : tensors)
    out.write(reinterpret_cast<const char*>(t->data.data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void read_tensors(const fs::path& path, const std::vector<Tensor*>& tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::size_t expected = 0;
  for (Tensor* t : tensors) expected += t->size() * sizeof(double);
  if (fs::file_size(path) != expected)
    throw std::runtime_error(path.string() + ": size " + std::to_string(fs::file_size(path)) + ", expected " +
                             std::to_string(expected));
  for (Tensor* t : tensors)
    in.read(reinterpret_cast<char*>(t->data.data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  if (!in) throw std::runtime_error("read failed: " + path.string());
}

// Writes to a temporary sibling and renames, so a reader never sees a
// half-written file.
template <class Fn>
void atomic_write(const fs::path& path, Fn&& fn) {
  fs::path tmp = path;
  tmp += ".tmp";
  fn(tmp);
  fs::rename(tmp, path);
}

}  // namespace

void save_checkpoint(const fs::path& dir, const TrainState& state, const TrainConfig& train,
                     const NetworkConfig& network, const nlohmann::ordered_json& config_echo) {
  fs::create_directories(dir);
  const ag::ParamStore& store = state.nets.params();
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  std::vector<const Tensor*> values, moments;
  for (const auto& e : store.entries()) {
    params.push_back({{"name", e.name}, {"shape", e.value.shape}, {"group", e.group}, {"offset", offset}});
    offset += e.value.size();
    values.push_back(&e.value);
  }
  for (const auto& t : state.optimizer.first_moment()) moments.push_back(&t);
  for (const auto& t : state.optimizer.second_moment()) moments.push_back(&t);

  atomic_write(dir / "params.bin", [&](const fs::path& p) { write_tensors(p, values); });
  atomic_write(dir / "adam.bin", [&](const fs::path& p) { write_tensors(p, moments); });
  if (state.gmm) {
    atomic_write(dir / "gmm.txt", [&](const fs::path& p) {
      std::ofstream out(p, std::ios::trunc);
      write_gmm_text(out, *state.gmm);
      if (!out) throw std::runtime_error("write failed: " + p.string());
    });
  } else {
    fs::remove(dir / "gmm.txt");
  }

  nlohmann::ordered_json manifest{{"format", kCheckpointFormat},
                                  {"progress",
                                   {{"warmup_epochs_done", state.warmup_epochs_done},
                                    {"em_round", state.round},
                                    {"complete", state.complete},
                                    {"global_step", state.global_step},
                                    {"adam_steps", state.optimizer.steps()},
                                    {"has_gmm", state.gmm.has_value()}}},
                                  {"seeds", {{"train", train.seed}, {"network_init", network.seed}}},
                                  {"network", to_json(network)},
                                  {"train", to_json(train)},
                                  {"config_echo", config_echo},
                                  {"param_count", offset},
                                  {"params", params}};
  atomic_write(dir / "manifest.json", [&](const fs::path& p) {
    std::ofstream out(p, std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + p.string());
  });
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("checkpoint manifest not found: " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  try {
    if (m.value("format", std::string()) != kCheckpointFormat)
      throw std::runtime_error("unsupported checkpoint format '" + m.value("format", std::string()) + "', expected '" +
                               kCheckpointFormat + "'");
    const NetworkConfig network = network_config_from_json(m.at("network"));
    const TrainConfig train = train_config_from_json(m.at("train"));
    Checkpoint ck{train, network, nlohmann::ordered_json(m.at("config_echo")), TrainState(network, train)};
    TrainState& s = ck.state;

    const auto& expected = m.at("params");
    ag::ParamStore& store = s.nets.params();
    if (expected.size() != store.count())
      throw std::runtime_error("parameter count mismatch: manifest " + std::to_string(expected.size()) + ", network " +
                               std::to_string(store.count()));
    std::vector<Tensor*> values, moments;
    for (std::size_t i = 0; i < store.count(); ++i) {
      auto& e = store.at(i);
      if (expected[i].at("name").get<std::string>() != e.name || expected[i].at("shape").get<Shape>() != e.value.shape)
        throw std::runtime_error("parameter layout mismatch at '" + e.name + "'");
      values.push_back(&e.value);
    }
    for (auto& t : s.optimizer.first_moment()) moments.push_back(&t);
    for (auto& t : s.optimizer.second_moment()) moments.push_back(&t);
    read_tensors(dir / "params.bin", values);
    read_tensors(dir / "adam.bin", moments);

    const auto& p = m.at("progress");
    s.warmup_epochs_done = p.at("warmup_epochs_done").get<int>();
    s.round = p.at("em_round").get<int>();
    s.complete = p.at("complete").get<bool>();
    s.global_step = p.at("global_step").get<std::int64_t>();
    s.optimizer.set_steps(p.at("adam_steps").get<std::int64_t>());
    if (p.at("has_gmm").get<bool>()) {
      std::ifstream g(dir / "gmm.txt");
      if (!g) throw std::runtime_error("checkpoint gmm.txt missing in " + dir.string());
      s.gmm = read_gmm_text(g);
      s.gmm->validate();
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
}

}  // namespace cddpm
