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

// Training objective: single-timestep noise reconstruction plus the
// lambda-weighted categorical and Gaussian prior-matching KL terms.
//
// Reduction convention: squared error is summed over pixels within a
// sample; every term is averaged over the batch.

#include <span>
#include <vector>

#include "cddpm/autograd.hpp"
#include "cddpm/gmm.hpp"
#include "cddpm/networks.hpp"
#include "cddpm/rng.hpp"
#include "cddpm/schedule.hpp"

namespace cddpm {

struct LossBreakdown {
  double recon = 0.0;
  double kl_cat = 0.0;
  double kl_gauss = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

// ||eps - eps_hat||^2 summed over elements.
double noise_recon_loss(const Tensor& eps, const Tensor& eps_hat);

// KL(w || pi) = sum_c w_c log(w_c / pi_c), with 0 log 0 = 0. Throws
// std::domain_error when pi_c = 0 for some w_c > 0.
double categorical_kl(std::span<const double> w, std::span<const double> pi);

// sum_c w_c KL(N(mu_phi, sigma2_phi) || N(mu_c, sigma2_c)).
double gaussian_prior_kl(const EncoderOutput& enc, const GMMParams& params, std::span<const double> w);

// Differentiable kl_cat + kl_gauss of one sample, with w = p(c | z)
// recomputed from z. When grad_through_w is false, w is treated as a
// constant in the backward pass. The two terms are written to *kl_cat and
// *kl_gauss when non-null.
ag::Var prior_matching(ag::Tape& tape, ag::Var mu, ag::Var log_sigma2, ag::Var z, const GMMParams& params,
                       bool grad_through_w, double* kl_cat = nullptr, double* kl_gauss = nullptr);

// Random quantities of one training sample.
struct SampleDraws {
  int t = 1;
  Tensor eps;
  std::vector<double> latent_eps;

  static SampleDraws draw(Rng& rng, const Shape& image_shape, int latent_dim, int T);
};

struct ObjectiveOptions {
  bool grad_through_w = true;
  std::size_t threads = 1;
};

// Builds the loss graph of one sample on tape. params may be null only when
// lambda == 0 (warm-up), in which case the KL terms are reported as 0.
ag::Var sample_loss(ag::Tape& tape, const Networks& nets, const Tensor& x0, const GMMParams* params,
                    const NoiseSchedule& schedule, double lambda, const SampleDraws& draws,
                    const ObjectiveOptions& options, LossBreakdown& out);

// Batch-averaged loss. Per-sample draws come from seeds taken from rng in
// order. When grads is non-null the gradient of the batch-mean total with
// respect to every network parameter is added into it.
LossBreakdown total_loss(std::span<const Tensor* const> batch, const Networks& nets, const GMMParams* params,
                         const NoiseSchedule& schedule, double lambda, Rng& rng, const ObjectiveOptions& options,
                         ag::Grads* grads = nullptr);

}  // namespace cddpm
