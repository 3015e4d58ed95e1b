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

// Diagonal-covariance Gaussian mixture over the latent space.
//
// Cluster indices are 0-based throughout. All densities are evaluated in
// log space and normalized with log-sum-exp.

#include <iosfwd>
#include <string>
#include <vector>

#include "cddpm/rng.hpp"
#include "cddpm/tensor.hpp"

namespace cddpm {

inline constexpr double kVarianceFloor = 1e-6;

struct GMMParams {
  int J = 0;
  std::vector<double> pi;      // [K]
  std::vector<double> mu;      // [K * J], row per component
  std::vector<double> sigma2;  // [K * J]

  int K() const { return static_cast<int>(pi.size()); }
  const double* mean(int c) const { return mu.data() + static_cast<std::size_t>(c) * J; }
  const double* var(int c) const { return sigma2.data() + static_cast<std::size_t>(c) * J; }

  // Throws std::invalid_argument when pi is not a distribution, shapes
  // disagree, or a variance is below the floor.
  void validate() const;
  bool operator==(const GMMParams&) const = default;
};

// log pi_c + log N(z | mu_c, diag(sigma2_c)) for every component.
std::vector<double> component_log_scores(std::span<const double> z, const GMMParams& params);

// q(c | x0) = p(c | z), a length-K probability vector.
std::vector<double> responsibilities(std::span<const double> z, const GMMParams& params);

// Argmax of the responsibilities, ties toward the lowest index.
int assign(std::span<const double> z, const GMMParams& params);
std::vector<int> assign_all(const Tensor& Z, const GMMParams& params);

struct PriorSample {
  int cluster = 0;
  std::vector<double> z;
};
// c ~ Cat(pi), z ~ N(mu_c, diag(sigma2_c)).
PriorSample sample_prior(const GMMParams& params, Rng& rng);
std::vector<double> sample_component(const GMMParams& params, int c, Rng& rng);

// Total log-likelihood sum_n log sum_c pi_c N(z_n | mu_c, sigma2_c). Z is [N, J].
double log_likelihood(const Tensor& Z, const GMMParams& params);

struct GmmFitOptions {
  int max_iters = 200;
  // Stop once the mean per-sample log-likelihood improves by less than tol.
  double tol = 1e-8;
  // Independent k-means++ initializations; the best final likelihood wins.
  int restarts = 1;
};

struct GmmFitResult {
  GMMParams params;
  // Total log-likelihood after initialization and after every M-update.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
};

// k-means++ seeding followed by one hard-assignment pass.
GMMParams kmeanspp_init(const Tensor& Z, int K, Rng& rng);

GmmFitResult fit_gmm(const Tensor& Z, int K, const GmmFitOptions& options, Rng& rng);
// EM from the given starting point (warm start).
GmmFitResult fit_gmm_from(const Tensor& Z, GMMParams init, const GmmFitOptions& options);

// One line per component: pi, mu[0..J), sigma2[0..J), whitespace separated.
void write_gmm_text(std::ostream& os, const GMMParams& params);
GMMParams read_gmm_text(std::istream& is);

}  // namespace cddpm
