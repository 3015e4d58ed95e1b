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

#include "cddpm/objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cddpm/ops.hpp"
#include "cddpm/parallel.hpp"
#include "cddpm/simd.hpp"

namespace cddpm {
namespace {

constexpr std::size_t kLossShards = 4;

// Per-component KL(N(m, e^s) || N(mu_c, sigma2_c)).
std::vector<double> component_kls(const double* m, const double* s, const GMMParams& p) {
  std::vector<double> kl(p.K());
  for (int c = 0; c < p.K(); ++c) {
    double acc = 0.0;
    for (int j = 0; j < p.J; ++j) {
      const double v = p.var(c)[j];
      const double d = m[j] - p.mean(c)[j];
      acc += std::log(v) + std::exp(s[j]) / v + d * d / v - 1.0 - s[j];
    }
    kl[c] = 0.5 * acc;
  }
  return kl;
}

}  // namespace

double noise_recon_loss(const Tensor& eps, const Tensor& eps_hat) {
  require_same_shape(eps, eps_hat, "noise_recon_loss");
  return simd::sqdist(eps.size(), eps.ptr(), eps_hat.ptr());
}

double categorical_kl(std::span<const double> w, std::span<const double> pi) {
  if (w.size() != pi.size()) throw ShapeError("categorical_kl: length mismatch");
  double kl = 0.0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (w[c] <= 0.0) continue;
    if (pi[c] <= 0.0) throw std::domain_error("categorical_kl: infinite divergence (pi_c = 0 where w_c > 0)");
    kl += w[c] * (std::log(w[c]) - std::log(pi[c]));
  }
  return kl;
}

double gaussian_prior_kl(const EncoderOutput& enc, const GMMParams& params, std::span<const double> w) {
  const std::size_t J = params.J;
  if (enc.mu.size() != J || enc.log_sigma2.size() != J) throw ShapeError("gaussian_prior_kl: latent size mismatch");
  if (w.size() != static_cast<std::size_t>(params.K())) throw ShapeError("gaussian_prior_kl: K mismatch");
  for (double v : params.sigma2)
    if (!(v > 0.0)) throw std::domain_error("gaussian_prior_kl: non-positive component variance");
  const std::vector<double> kl = component_kls(enc.mu.data(), enc.log_sigma2.data(), params);
  double out = 0.0;
  for (std::size_t c = 0; c < w.size(); ++c) out += w[c] * kl[c];
  return out;
}

ag::Var prior_matching(ag::Tape& tape, ag::Var mv, ag::Var sv, ag::Var zv, const GMMParams& params, bool grad_through_w,
                       double* kl_cat_out, double* kl_gauss_out) {
  const Tensor& m = tape.value(mv);
  const Tensor& s = tape.value(sv);
  const Tensor& z = tape.value(zv);
  const int J = params.J, K = params.K();
  if (m.size() != static_cast<std::size_t>(J) || s.size() != m.size() || z.size() != m.size()) {
    throw ShapeError("prior_matching: latent size mismatch");
  }
  std::vector<double> w = responsibilities(z.span(), params);
  std::vector<double> kl = component_kls(m.ptr(), s.ptr(), params);
  double kl_cat = 0.0, kl_gauss = 0.0;
  // dF/dw_c up to a constant shift (which the softmax Jacobian cancels).
  std::vector<double> dw(K, 0.0);
  for (int c = 0; c < K; ++c) {
    kl_gauss += w[c] * kl[c];
    if (w[c] > 0.0) {
      const double lr = std::log(w[c]) - std::log(params.pi[c]);
      kl_cat += w[c] * lr;
      dw[c] = lr + kl[c];
    }
  }
  if (kl_cat_out) *kl_cat_out = kl_cat;
  if (kl_gauss_out) *kl_gauss_out = kl_gauss;
  Tensor out({1});
  out[0] = kl_cat + kl_gauss;

  return tape.push(std::move(out),
                   [mv, sv, zv, &params, w = std::move(w), dw = std::move(dw), grad_through_w](ag::Tape& t, int self) {
                     const double g = t.grad(self)[0];
                     const int J = params.J, K = params.K();
                     const Tensor& m = t.value(mv);
                     const Tensor& s = t.value(sv);
                     Tensor& gm = t.grad(mv);
                     Tensor& gs = t.grad(sv);
                     for (int j = 0; j < J; ++j) {
                       double dm = 0.0, inv = 0.0;
                       for (int c = 0; c < K; ++c) {
                         dm += w[c] * (m[j] - params.mean(c)[j]) / params.var(c)[j];
                         inv += w[c] / params.var(c)[j];
                       }
                       gm[j] += g * dm;
                       gs[j] += g * 0.5 * (std::exp(s[j]) * inv - 1.0);
                     }
                     if (!grad_through_w) return;
                     // dF/dl_c = w_c (dw_c - sum_k w_k dw_k); dl_c/dz_j = -(z_j - mu_cj) / sigma2_cj.
                     double mean_dw = 0.0;
                     for (int c = 0; c < K; ++c) mean_dw += w[c] * dw[c];
                     const Tensor& z = t.value(zv);
                     Tensor& gz = t.grad(zv);
                     for (int c = 0; c < K; ++c) {
                       const double dl = w[c] * (dw[c] - mean_dw);
                       if (dl == 0.0) continue;
                       for (int j = 0; j < J; ++j) gz[j] -= g * dl * (z[j] - params.mean(c)[j]) / params.var(c)[j];
                     }
                   });
}

SampleDraws SampleDraws::draw(Rng& rng, const Shape& image_shape, int latent_dim, int T) {
  SampleDraws d;
  d.t = rng.uniform_int(1, T);
  d.eps = Tensor(image_shape);
  rng.fill_normal(d.eps.span());
  d.latent_eps.resize(latent_dim);
  rng.fill_normal(d.latent_eps);
  return d;
}

ag::Var sample_loss(ag::Tape& tape, const Networks& nets, const Tensor& x0, const GMMParams* params,
                    const NoiseSchedule& schedule, double lambda, const SampleDraws& draws,
                    const ObjectiveOptions& options, LossBreakdown& out) {
  if (!params && lambda != 0.0) throw std::invalid_argument("sample_loss: prior matching needs GMM parameters");
  const int J = nets.config().latent_dim;
  ag::Var x0v = tape.constant(x0);
  Networks::EncoderVars enc = nets.encode(tape, x0v);
  ag::Var z = ag::reparameterize(tape, enc.mu, enc.log_sigma2, Tensor({J}, std::vector<double>(draws.latent_eps)));
  ag::Var x_t = tape.constant(forward_sample(x0, draws.t, draws.eps, schedule));
  ag::Var eps_hat = nets.predict_noise(tape, x_t, draws.t, z);
  ag::Var recon = ag::sum_squared_error(tape, eps_hat, draws.eps);

  out = LossBreakdown{};
  out.lambda = lambda;
  out.recon = tape.value(recon)[0];
  if (!params) {
    out.total = out.recon;
    return recon;
  }
  ag::Var prior =
      prior_matching(tape, enc.mu, enc.log_sigma2, z, *params, options.grad_through_w, &out.kl_cat, &out.kl_gauss);
  ag::Var total = ag::weighted_sum(tape, {recon, prior}, {1.0, lambda});
  out.total = tape.value(total)[0];
  return total;
}

LossBreakdown total_loss(std::span<const Tensor* const> batch, const Networks& nets, const GMMParams* params,
                         const NoiseSchedule& schedule, double lambda, Rng& rng, const ObjectiveOptions& options,
                         ag::Grads* grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("total_loss: empty batch");
  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next_u64();

  const Shape shape = nets.config().image_shape();
  const int J = nets.config().latent_dim;
  const int T = schedule.steps();
  const std::size_t shards = std::min(n, kLossShards);
  std::vector<LossBreakdown> per_sample(n);
  std::vector<ag::Grads> shard_grads(grads ? shards : 0);

  parallel_shards(shards, options.threads, [&](std::size_t shard) {
    if (grads) shard_grads[shard] = ag::zero_grads(nets.params());
    for (std::size_t i = shard * n / shards; i < (shard + 1) * n / shards; ++i) {
      Rng local(seeds[i]);
      const SampleDraws draws = SampleDraws::draw(local, shape, J, T);
      ag::Tape tape(grads != nullptr);
      ag::Var loss = sample_loss(tape, nets, *batch[i], params, schedule, lambda, draws, options, per_sample[i]);
      if (grads) tape.backward(loss, shard_grads[shard], 1.0 / static_cast<double>(n));
    }
  });
  if (grads)
    for (const auto& g : shard_grads) ag::add_into(*grads, g);

  LossBreakdown mean;
  mean.lambda = lambda;
  for (const auto& b : per_sample) {
    mean.recon += b.recon;
    mean.kl_cat += b.kl_cat;
    mean.kl_gauss += b.kl_gauss;
    mean.total += b.total;
  }
  const double inv = 1.0 / static_cast<double>(n);
  mean.recon *= inv;
  mean.kl_cat *= inv;
  mean.kl_gauss *= inv;
  mean.total *= inv;
  return mean;
}

}  // namespace cddpm
