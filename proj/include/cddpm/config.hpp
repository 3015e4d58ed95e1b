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

#pragma once

// Run configuration file: JSON with sections "dataset", "network", "train"
// plus "output_dir" and "knn_k". Unknown keys are rejected at every level.
// The latent width and the network init seed are set only in "train"
// (latent_dim, seed) and copied into the network config on resolve.

#include <filesystem>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "cddpm/data_io.hpp"
#include "cddpm/networks.hpp"
#include "cddpm/trainer.hpp"

namespace cddpm {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DatasetSpec {
  // "synth", a named dataset (see load_dataset), or a manifest directory.
  std::string name = "synth";
  std::string split = "all";
  std::size_t limit = 0;
  // Keep only these classes, relabeled 0..n-1 in list order (empty = all).
  // Applied before `limit`.
  std::vector<int> classes;
  int downscale = 1;
  std::string root;  // empty: CDDPM_DATA_DIR or ./data
  SynthOptions synth{};
};

struct RunConfig {
  DatasetSpec dataset;
  NetworkConfig network;
  TrainConfig train;
  std::string output_dir = "runs/default";
  std::vector<int> knn_k{3, 5, 7, 9, 100};

  // Copies shared fields into the network config and validates everything.
  void resolve();
};

nlohmann::ordered_json to_json(const NetworkConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const DatasetSpec& d);
nlohmann::ordered_json to_json(const RunConfig& c);

// Each parser starts from `base` and overrides the keys present in j.
NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

Dataset load_run_dataset(const DatasetSpec& spec);

}  // namespace cddpm
