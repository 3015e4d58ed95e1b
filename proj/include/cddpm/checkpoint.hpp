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

#include <filesystem>
#include <json.hpp>
#include <string>

#include "cddpm/trainer.hpp"

namespace cddpm {

inline constexpr const char* kCheckpointFormat = "cddpm-checkpoint/1";

// Checkpoint directory layout:
//   manifest.json  format stamp, config echo, progress counters, seeds,
//                  parameter names/shapes/groups/offsets
//   params.bin     network parameters, little-endian float64, manifest order
//   adam.bin       first then second Adam moments, same layout
//   gmm.txt        mixture prior, one line per component (pi, mu, sigma2)
struct Checkpoint {
  TrainConfig train;
  NetworkConfig network;
  nlohmann::ordered_json config_echo;
  TrainState state;
};

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& train,
                     const NetworkConfig& network, const nlohmann::ordered_json& config_echo = {});
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cddpm
