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

#include <functional>
#include <optional>
#include <vector>

#include "cddpm/rng.hpp"
#include "cddpm/schedule.hpp"
#include "cddpm/tensor.hpp"

namespace cddpm {

struct GMMParams;

// eps_theta(x_t, t, z): predicted noise with the shape of x_t.
using NoisePredictor = std::function<Tensor(const Tensor& x_t, int t, const std::vector<double>& z)>;

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule);

struct PosteriorParams {
  Tensor mean;
  double variance = 0.0;
};

// q(x_{t-1} | x_t, x0) expressed through the noise eps that produced x_t.
// variance = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t, zero at t = 1.
PosteriorParams true_posterior_params(const Tensor& x_t, const Tensor& eps, int t, const NoiseSchedule& schedule);

// Mean of the reverse transition given a noise prediction.
Tensor reverse_mean(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& schedule);

// One conditional denoising step. For t > 1 returns mean + sqrt(beta_t) * noise,
// with noise drawn from rng; for t = 1 returns the mean.
Tensor reverse_step(const Tensor& x_t, int t, const std::vector<double>& z, const NoisePredictor& predictor,
                    const NoiseSchedule& schedule, Rng& rng);
// Same step with caller-supplied noise (ignored at t = 1).
Tensor reverse_step(const Tensor& x_t, int t, const std::vector<double>& z, const NoisePredictor& predictor,
                    const NoiseSchedule& schedule, const Tensor& noise);

// Conditioning for ancestral sampling: either explicit latent vectors, or a
// mixture prior with one (0-based) cluster index per output image.
struct GenerationCondition {
  std::vector<std::vector<double>> latents;
  const GMMParams* prior = nullptr;
  std::vector<int> clusters;

  static GenerationCondition from_latents(std::vector<std::vector<double>> z);
  static GenerationCondition from_clusters(const GMMParams& params, std::vector<int> clusters);
};

struct GeneratedBatch {
  std::vector<Tensor> images;
  std::vector<std::vector<double>> latents;
  // Conditioning cluster per image; empty when conditioned on explicit latents.
  std::vector<int> clusters;
};

// Draws x_T ~ N(0, I) and applies T reverse steps per image. Each image uses
// its own stream derived from rng, so results do not depend on n.
GeneratedBatch generate(int n, const GenerationCondition& condition, const NoisePredictor& predictor,
                        const Shape& image_shape, const NoiseSchedule& schedule, Rng& rng);

}  // namespace cddpm
