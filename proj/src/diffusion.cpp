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

#include "cddpm/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cddpm/gmm.hpp"

namespace cddpm {

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "forward_sample");
  const double ab = schedule.alpha_bar(t);
  if (t < 1) throw std::out_of_range("forward_sample: timestep must be >= 1");
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x0.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor reverse_mean(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps_hat, "reverse_mean");
  const double beta = schedule.beta(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  Tensor mean(x_t.shape);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
  return mean;
}

PosteriorParams true_posterior_params(const Tensor& x_t, const Tensor& eps, int t, const NoiseSchedule& schedule) {
  PosteriorParams p;
  p.mean = reverse_mean(x_t, t, eps, schedule);
  p.variance = (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - schedule.alpha_bar(t)) * schedule.beta(t);
  return p;
}

Tensor reverse_step(const Tensor& x_t, int t, const std::vector<double>& z, const NoisePredictor& predictor,
                    const NoiseSchedule& schedule, const Tensor& noise) {
  if (!predictor) throw std::invalid_argument("reverse_step: no noise predictor");
  const Tensor eps_hat = predictor(x_t, t, z);
  if (eps_hat.shape != x_t.shape) {
    throw ShapeError("reverse_step: predictor returned " + shape_str(eps_hat.shape) + " for input " +
                     shape_str(x_t.shape));
  }
  Tensor out = reverse_mean(x_t, t, eps_hat, schedule);
  if (t > 1) {
    require_same_shape(x_t, noise, "reverse_step noise");
    const double sd = std::sqrt(schedule.beta(t));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sd * noise[i];
  }
  return out;
}

Tensor reverse_step(const Tensor& x_t, int t, const std::vector<double>& z, const NoisePredictor& predictor,
                    const NoiseSchedule& schedule, Rng& rng) {
  Tensor noise(x_t.shape);
  if (t > 1) rng.fill_normal(noise.span());
  return reverse_step(x_t, t, z, predictor, schedule, noise);
}

GenerationCondition GenerationCondition::from_latents(std::vector<std::vector<double>> z) {
  GenerationCondition c;
  c.latents = std::move(z);
  return c;
}

GenerationCondition GenerationCondition::from_clusters(const GMMParams& params, std::vector<int> clusters) {
  GenerationCondition c;
  c.prior = &params;
  c.clusters = std::move(clusters);
  return c;
}

GeneratedBatch generate(int n, const GenerationCondition& condition, const NoisePredictor& predictor,
                        const Shape& image_shape, const NoiseSchedule& schedule, Rng& rng) {
  if (!predictor) throw std::invalid_argument("generate: no trained noise predictor");
  if (n < 0) throw std::invalid_argument("generate: negative count");
  GeneratedBatch batch;
  if (condition.prior) {
    if (condition.clusters.size() != static_cast<std::size_t>(n))
      throw std::invalid_argument("generate: need one cluster index per image");
    for (int c : condition.clusters) {
      if (c < 0 || c >= condition.prior->K())
        throw std::out_of_range("generate: cluster index " + std::to_string(c) + " outside [0," +
                                std::to_string(condition.prior->K()) + ")");
    }
    batch.clusters = condition.clusters;
  } else if (condition.latents.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("generate: need one latent vector per image");
  }

  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next_u64();

  for (int i = 0; i < n; ++i) {
    Rng local(seeds[i]);
    std::vector<double> z;
    if (condition.prior) {
      z = sample_component(*condition.prior, condition.clusters[i], local);
    } else {
      z = condition.latents[i];
    }
    Tensor x(image_shape);
    local.fill_normal(x.span());
    for (int t = schedule.steps(); t >= 1; --t) x = reverse_step(x, t, z, predictor, schedule, local);
    batch.images.push_back(std::move(x));
    batch.latents.push_back(std::move(z));
  }
  return batch;
}

}  // namespace cddpm
