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

// Alternating EM training: E-step fits the latent GMM on encoder outputs,
// M-step runs Adam on the objective with the GMM frozen.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cddpm/data_io.hpp"
#include "cddpm/gmm.hpp"
#include "cddpm/networks.hpp"
#include "cddpm/objective.hpp"
#include "cddpm/optimizer.hpp"
#include "cddpm/schedule.hpp"

namespace cddpm {

enum class LatentSource { kPosteriorMean, kSample };

struct TrainConfig {
  int clusters = 3;
  int latent_dim = 8;
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double lambda = 0.01;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int mstep_epochs = 1;
  int em_rounds = 8;
  int warmup_epochs = 5;
  GmmFitOptions gmm{};
  bool gmm_warm_start = true;
  LatentSource estep_latents = LatentSource::kPosteriorMean;
  bool grad_through_w = true;
  std::uint64_t seed = 0;
  // 0 selects the hardware concurrency. Results do not depend on this.
  std::size_t threads = 1;
  // Write a checkpoint every N EM rounds (0 = only at the end).
  int checkpoint_every = 1;
  // Log the full-dataset loss (fixed draws) before and after each M-step.
  bool diagnostics = true;

  NoiseSchedule schedule() const { return NoiseSchedule::linear(timesteps, beta_start, beta_end); }
  void validate() const;
};

struct LossRecord {
  int em_round = 0;  // 0 during warm-up
  int epoch = 0;
  int step = 0;
  LossBreakdown loss;
};
nlohmann::ordered_json to_json(const LossRecord& r);

struct TrainState {
  Networks nets;
  Adam optimizer;
  std::optional<GMMParams> gmm;
  int warmup_epochs_done = 0;
  int round = 0;  // completed EM rounds
  bool complete = false;
  std::int64_t global_step = 0;

  TrainState(const NetworkConfig& net, const TrainConfig& cfg);
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using LogSink = std::function<void(const nlohmann::ordered_json&)>;

// Encoder latents for every image: posterior means, or reparameterized
// samples drawn from streams derived from `seed`. Returns [N, J].
Tensor extract_latents(const ImageSet& data, const Networks& nets, LatentSource source, std::uint64_t seed,
                       std::size_t threads);

// Reorders the components of `fit` so that the total squared distance
// between matching means of `fit` and `previous` is minimal.
GMMParams align_to(const GMMParams& fit, const GMMParams& previous);

// Fresh k-means++ fit seeded from `seed`. When `warm` is given, EM is also
// run from it, and the warm result is kept unless the fresh fit reaches a
// higher likelihood, in which case the fresh fit is aligned to `warm`.
GMMParams fit_latent_gmm(const Tensor& Z, const TrainConfig& cfg, const GMMParams* warm, std::uint64_t seed);

// Fits the GMM on the current latents; warm-starts from `warm` when given.
GMMParams e_step(const ImageSet& data, const Networks& nets, const TrainConfig& cfg, const GMMParams* warm, int round);

struct MStepResult {
  std::vector<LossRecord> records;
  std::vector<double> epoch_mean_total;
};

// `epochs` passes of mini-batch Adam on the objective with params frozen.
// params may be null only for lambda == 0 (warm-up). Throws TrainingAborted
// on a non-finite loss.
MStepResult m_step(const ImageSet& data, const GMMParams* params, TrainState& state, const TrainConfig& cfg,
                   double lambda, int round, int epochs, const LogSink& log = {});

// Mean objective over the whole dataset with draws fixed by `seed`; no update.
LossBreakdown dataset_loss(const ImageSet& data, const Networks& nets, const GMMParams* params,
                           const NoiseSchedule& schedule, double lambda, std::uint64_t seed, const TrainConfig& cfg);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  // Stored verbatim in every checkpoint manifest.
  nlohmann::ordered_json config_echo;
  LogSink log;
};

struct TrainResult {
  TrainState state;
  Tensor latents;  // final posterior means [N, J]
  std::vector<int> assignments;
};

// Warm-up with prior matching disabled, then em_rounds of E/M, then a final
// GMM fit on the learned latents. Resumes from `resume` when given.
TrainResult train(const ImageSet& data, const TrainConfig& cfg, const NetworkConfig& net,
                  const TrainOptions& options = {}, std::optional<TrainState> resume = std::nullopt);

}  // namespace cddpm
