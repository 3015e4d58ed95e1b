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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cddpm/objective.hpp"
#include "support.hpp"

using namespace cddpm;
using testing::random_tensor;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.height = c.width = 8;
  c.latent_dim = 3;
  c.widths = {4, 8};
  c.groups = 2;
  c.time_embed_dim = 8;
  c.embed_dim = 8;
  c.encoder_pool = 2;
  c.seed = 21;
  return c;
}

GMMParams random_gmm(int K, int J, Rng& rng) {
  GMMParams p;
  p.J = J;
  double s = 0;
  for (int c = 0; c < K; ++c) {
    p.pi.push_back(0.2 + rng.uniform());
    s += p.pi.back();
    for (int j = 0; j < J; ++j) {
      p.mu.push_back(rng.normal());
      p.sigma2.push_back(0.3 + rng.uniform());
    }
  }
  for (double& v : p.pi) v /= s;
  return p;
}

// Monte Carlo estimate of KL(N(m, diag e^s) || N(mu, diag v)) with its standard error.
std::pair<double, double> mc_gauss_kl(const std::vector<double>& m, const std::vector<double>& s, const double* mu,
                                      const double* v, int n, Rng& rng) {
  double sum = 0, sum2 = 0;
  const std::size_t J = m.size();
  for (int k = 0; k < n; ++k) {
    double lq = 0, lp = 0;
    for (std::size_t j = 0; j < J; ++j) {
      const double e = rng.normal();
      const double x = m[j] + std::exp(0.5 * s[j]) * e;
      lq += -0.5 * (s[j] + e * e);
      lp += -0.5 * (std::log(v[j]) + (x - mu[j]) * (x - mu[j]) / v[j]);
    }
    const double d = lq - lp;
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / n;
  return {mean, std::sqrt((sum2 / n - mean * mean) / n)};
}

}  // namespace

TEST_CASE("noise reconstruction loss") {
  Rng rng(1);
  const Tensor a = random_tensor({1, 3, 3}, rng);
  CHECK(noise_recon_loss(a, a) == 0.0);
  Tensor b = a;
  b[0] += 2.0;
  b[4] -= 1.0;
  CHECK(noise_recon_loss(a, b) == doctest::Approx(5.0));
  CHECK_THROWS_AS(noise_recon_loss(a, Tensor({1, 3, 2})), ShapeError);
}

TEST_CASE("categorical KL") {
  const std::vector<double> pi{0.2, 0.3, 0.5};
  CHECK(categorical_kl(pi, pi) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(categorical_kl(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK(categorical_kl(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(categorical_kl(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}), std::domain_error);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w(4), p(4);
    double sw = 0, sp = 0;
    for (int c = 0; c < 4; ++c) {
      sw += w[c] = rng.uniform();
      sp += p[c] = rng.uniform() + 0.01;
    }
    for (int c = 0; c < 4; ++c) {
      w[c] /= sw;
      p[c] /= sp;
    }
    CHECK(categorical_kl(w, p) >= 0.0);
  }
}

TEST_CASE("Gaussian prior KL reduces to the standard VAE term") {
  Rng rng(3);
  const GMMParams std_normal{4, {1.0}, std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)};
  for (int trial = 0; trial < 10; ++trial) {
    EncoderOutput enc;
    double ref = 0;
    for (int j = 0; j < 4; ++j) {
      enc.mu.push_back(rng.normal());
      enc.log_sigma2.push_back(rng.normal());
      const double s2 = std::exp(enc.log_sigma2[j]);
      ref += 0.5 * (s2 + enc.mu[j] * enc.mu[j] - 1.0 - enc.log_sigma2[j]);
    }
    CHECK(std::abs(gaussian_prior_kl(enc, std_normal, std::vector<double>{1.0}) - ref) <= 1e-12);
  }
  // Matching posterior and prior give zero.
  EncoderOutput same{{0.5, -0.5}, {std::log(0.3), std::log(2.0)}};
  const GMMParams g{2, {1.0}, {0.5, -0.5}, {0.3, 2.0}};
  CHECK(gaussian_prior_kl(same, g, std::vector<double>{1.0}) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("closed-form KL terms agree with Monte Carlo estimates") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const int K = 1 + trial % 5, J = 1 + (3 * trial) % 16;
    const GMMParams g = random_gmm(K, J, rng);
    EncoderOutput enc;
    for (int j = 0; j < J; ++j) {
      enc.mu.push_back(rng.normal());
      enc.log_sigma2.push_back(0.5 * rng.normal());
    }
    std::vector<double> w(K);
    double sw = 0;
    for (double& v : w) sw += v = rng.uniform() + 0.05;
    for (double& v : w) v /= sw;

    double mc = 0, var = 0;
    for (int c = 0; c < K; ++c) {
      const auto [m, se] = mc_gauss_kl(enc.mu, enc.log_sigma2, g.mean(c), g.var(c), 100000, rng);
      mc += w[c] * m;
      var += w[c] * w[c] * se * se;
    }
    CAPTURE(trial);
    CHECK(std::abs(gaussian_prior_kl(enc, g, w) - mc) <= 3.0 * std::sqrt(var));

    // Categorical term: E_{c ~ w}[log w_c - log pi_c].
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int k = 0; k < n; ++k) {
      const double u = rng.uniform();
      int c = 0;
      double acc = w[0];
      while (u >= acc && c < K - 1) acc += w[++c];
      const double d = std::log(w[c]) - std::log(g.pi[c]);
      s += d;
      s2 += d * d;
    }
    const double mean = s / n, se = std::sqrt(std::max(0.0, s2 / n - mean * mean) / n);
    CHECK(std::abs(categorical_kl(w, g.pi) - mean) <= std::max(3.0 * se, 1e-12));
  }
}

TEST_CASE("loss breakdown identity and monotonicity in lambda") {
  Networks nets(tiny_config());
  Rng rng(5);
  const GMMParams g = random_gmm(2, 3, rng);
  std::vector<Tensor> images;
  for (int i = 0; i < 5; ++i) images.push_back(random_tensor({1, 8, 8}, rng, 0.5));
  std::vector<const Tensor*> batch;
  for (const auto& x : images) batch.push_back(&x);
  const NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
  double prev = -1e300;
  for (double lambda : {0.0, 0.001, 0.01, 0.1, 1.0}) {
    Rng draws(99);
    const LossBreakdown b = total_loss(batch, nets, &g, s, lambda, draws, {});
    CHECK(std::abs(b.total - (b.recon + lambda * (b.kl_cat + b.kl_gauss))) <= 1e-9 * std::max(1.0, b.total));
    CHECK(b.recon >= 0.0);
    CHECK(b.kl_cat >= 0.0);
    CHECK(b.lambda == lambda);
    CHECK(std::isfinite(b.kl_gauss));
    CHECK(b.kl_cat + b.kl_gauss > 0.0);
    CHECK(b.total > prev);
    prev = b.total;
  }
  Rng draws(1);
  CHECK_THROWS_AS(total_loss(batch, nets, nullptr, s, 0.1, draws, {}), std::invalid_argument);
  const LossBreakdown warm = total_loss(batch, nets, nullptr, s, 0.0, draws, {});
  CHECK(warm.kl_cat == 0.0);
  CHECK(warm.kl_gauss == 0.0);
  CHECK(warm.total == warm.recon);
}

TEST_CASE("sample loss reconstruction matches a direct evaluation") {
  Networks nets(tiny_config());
  Rng rng(6);
  const Tensor x0 = random_tensor({1, 8, 8}, rng, 0.5);
  const NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
  const SampleDraws d = SampleDraws::draw(rng, x0.shape, 3, 50);
  CHECK(d.t >= 1);
  CHECK(d.t <= 50);
  ag::Tape tape(false);
  LossBreakdown b;
  sample_loss(tape, nets, x0, nullptr, s, 0.0, d, {}, b);
  const EncoderOutput enc = nets.encode(x0);
  const auto z = reparameterize(enc, d.latent_eps);
  const Tensor eps_hat = nets.predict_noise(forward_sample(x0, d.t, d.eps, s), d.t, z);
  CHECK(b.recon == doctest::Approx(noise_recon_loss(d.eps, eps_hat)).epsilon(1e-12));
}

TEST_CASE("total_loss gradients match central differences") {
  Networks nets(tiny_config());
  Rng rng(7);
  const GMMParams g = random_gmm(2, 3, rng);
  std::vector<Tensor> images;
  for (int i = 0; i < 3; ++i) images.push_back(random_tensor({1, 8, 8}, rng, 0.5));
  std::vector<const Tensor*> batch;
  for (const auto& x : images) batch.push_back(&x);
  const NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
  const double lambda = 0.5;
  auto loss = [&] {
    Rng draws(2024);
    return total_loss(batch, nets, &g, s, lambda, draws, {}).total;
  };
  ag::Grads grads = ag::zero_grads(nets.params());
  Rng draws(2024);
  total_loss(batch, nets, &g, s, lambda, draws, {}, &grads);

  std::vector<std::pair<int, std::size_t>> coords;
  for (std::size_t p = 0; p < nets.params().count(); ++p)
    for (std::size_t i = 0; i < nets.params().at(p).value.size(); ++i) coords.emplace_back(static_cast<int>(p), i);
  std::shuffle(coords.begin(), coords.end(), rng.engine());
  int encoder_checked = 0;
  for (int k = 0; k < 60; ++k) {
    auto [p, i] = coords[k];
    const double numeric = testing::central_diff(loss, &nets.params().at(p).value.data[i]);
    CAPTURE(nets.params().at(p).name);
    CHECK(testing::rel_err(grads[p].data[i], numeric, 1e-6) <= 1e-4);
    if (nets.params().at(p).group == kEncoderParams) ++encoder_checked;
  }
  CHECK(encoder_checked > 0);
}

TEST_CASE("stopping gradients through w only changes encoder gradients") {
  Networks nets(tiny_config());
  Rng rng(8);
  const GMMParams g = random_gmm(3, 3, rng);
  std::vector<Tensor> images;
  for (int i = 0; i < 3; ++i) images.push_back(random_tensor({1, 8, 8}, rng, 0.5));
  std::vector<const Tensor*> batch;
  for (const auto& x : images) batch.push_back(&x);
  const NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
  ag::Grads with = ag::zero_grads(nets.params()), without = ag::zero_grads(nets.params());
  Rng d1(5), d2(5);
  const LossBreakdown a = total_loss(batch, nets, &g, s, 1.0, d1, {true, 1}, &with);
  const LossBreakdown b = total_loss(batch, nets, &g, s, 1.0, d2, {false, 1}, &without);
  CHECK(a.total == b.total);
  bool encoder_differs = false;
  for (std::size_t p = 0; p < with.size(); ++p) {
    if (nets.params().at(p).group == kPredictorParams) {
      CHECK(with[p].data == without[p].data);
    } else if (with[p].data != without[p].data) {
      encoder_differs = true;
    }
  }
  CHECK(encoder_differs);
}

TEST_CASE("loss and gradients do not depend on the thread count") {
  Networks nets(tiny_config());
  Rng rng(9);
  const GMMParams g = random_gmm(2, 3, rng);
  std::vector<Tensor> images;
  for (int i = 0; i < 7; ++i) images.push_back(random_tensor({1, 8, 8}, rng, 0.5));
  std::vector<const Tensor*> batch;
  for (const auto& x : images) batch.push_back(&x);
  const NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
  ag::Grads g1 = ag::zero_grads(nets.params()), g3 = ag::zero_grads(nets.params());
  Rng d1(3), d3(3);
  const LossBreakdown a = total_loss(batch, nets, &g, s, 0.1, d1, {true, 1}, &g1);
  const LossBreakdown b = total_loss(batch, nets, &g, s, 0.1, d3, {true, 3}, &g3);
  CHECK(a.total == b.total);
  for (std::size_t p = 0; p < g1.size(); ++p) CHECK(g1[p].data == g3[p].data);
}
