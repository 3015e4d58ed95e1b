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

#include "cddpm/networks.hpp"
#include "cddpm/ops.hpp"
#include "support.hpp"

using namespace cddpm;
using testing::random_tensor;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.channels = 1;
  c.height = c.width = 8;
  c.latent_dim = 3;
  c.widths = {4, 8};
  c.groups = 2;
  c.time_embed_dim = 8;
  c.embed_dim = 8;
  c.encoder_pool = 2;
  c.seed = 3;
  return c;
}

// Up to `count` parameter coordinates of the given group, spread over all tensors.
std::vector<std::pair<int, std::size_t>> sample_coords(const ag::ParamStore& store, int group, int count, Rng& rng) {
  std::vector<std::pair<int, std::size_t>> all;
  for (std::size_t p = 0; p < store.count(); ++p)
    if (store.at(p).group == group)
      for (std::size_t i = 0; i < store.at(p).value.size(); ++i) all.emplace_back(static_cast<int>(p), i);
  std::shuffle(all.begin(), all.end(), rng.engine());
  all.resize(std::min<std::size_t>(all.size(), count));
  return all;
}

}  // namespace

TEST_CASE("timestep embedding") {
  const Tensor e = timestep_embedding(0, 6);
  CHECK(e.data == std::vector<double>{0, 0, 0, 1, 1, 1});
  const Tensor e5 = timestep_embedding(5, 8);
  CHECK(e5[0] == doctest::Approx(std::sin(5.0)));
  CHECK(e5[4] == doctest::Approx(std::cos(5.0)));
}

TEST_CASE("config validation") {
  NetworkConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.groups = 3;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.latent_dim = 0;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.encoder_pool = 3;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.height = 7;
  CHECK_THROWS(c.validate());
}

TEST_CASE("desk-scale default stays under a million parameters") {
  Networks nets(NetworkConfig{});
  CHECK(nets.params().total_size() < 1000000);
  CHECK(nets.params().total_size(kPredictorParams) > 0);
  CHECK(nets.params().total_size(kEncoderParams) > 0);
}

TEST_CASE("reparameterize") {
  EncoderOutput enc{{0.5, -1.0}, {0.0, std::log(4.0)}};
  CHECK(reparameterize(enc, std::vector<double>{0, 0}) == enc.mu);
  const auto z = reparameterize(enc, std::vector<double>{1, 1});
  CHECK(z[0] == doctest::Approx(1.5));
  CHECK(z[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(reparameterize(enc, std::vector<double>{1}), ShapeError);

  // Monte Carlo moments.
  Rng rng(4);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const double v = reparameterize(enc, std::vector<double>{0.0, rng.normal()})[1];
    s += v;
    s2 += v * v;
  }
  const double m = s / n, var = s2 / n - m * m;
  CHECK(std::abs(m - (-1.0)) <= 3.0 * std::sqrt(4.0 / n));
  CHECK(std::abs(var - 4.0) <= 3.0 * 4.0 * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("encoder outputs are deterministic, finite and per-sample") {
  Networks nets(tiny_config());
  Rng rng(5);
  std::vector<Tensor> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(random_tensor({1, 8, 8}, rng));
  std::vector<EncoderOutput> outs;
  for (const auto& x : xs) outs.push_back(nets.encode(x));
  for (const auto& o : outs) {
    CHECK(o.mu.size() == 3);
    CHECK(o.log_sigma2.size() == 3);
    for (int j = 0; j < 3; ++j) {
      CHECK(std::isfinite(o.mu[j]));
      CHECK(o.log_sigma2[j] >= kLogVarMin);
      CHECK(o.log_sigma2[j] <= kLogVarMax);
    }
  }
  const std::vector<int> perm{2, 0, 3, 1};
  for (int i = 0; i < 4; ++i) CHECK(nets.encode(xs[perm[i]]).mu == outs[perm[i]].mu);
  CHECK_THROWS_AS(nets.encode(Tensor({1, 8, 7})), ShapeError);
}

TEST_CASE("noise predictor is deterministic and conditioned on t and z") {
  Networks nets(tiny_config());
  Rng rng(6);
  const Tensor x = random_tensor({1, 8, 8}, rng);
  const std::vector<double> z1{0.1, -0.4, 0.7}, z2{-1.0, 0.3, 0.2};
  const Tensor a = nets.predict_noise(x, 10, z1);
  CHECK(a.shape == x.shape);
  CHECK(nets.predict_noise(x, 10, z1).data == a.data);
  auto max_diff = [](const Tensor& p, const Tensor& q) {
    double m = 0;
    for (std::size_t i = 0; i < p.size(); ++i) m = std::max(m, std::abs(p[i] - q[i]));
    return m;
  };
  CHECK(max_diff(a, nets.predict_noise(x, 10, z2)) > 0.0);
  CHECK(max_diff(a, nets.predict_noise(x, 11, z1)) > 0.0);
  CHECK_THROWS_AS(nets.predict_noise(x, 10, std::vector<double>{1.0}), ShapeError);
  CHECK_THROWS_AS(nets.predict_noise(Tensor({1, 4, 4}), 10, z1), ShapeError);
  const NoisePredictor p = nets.predictor();
  CHECK(p(x, 10, z1).data == a.data);
}

TEST_CASE("noise predictor gradients match central differences") {
  Networks nets(tiny_config());
  Rng rng(7);
  const Tensor x = random_tensor({1, 8, 8}, rng), target = random_tensor({1, 8, 8}, rng);
  const Tensor zt({3}, std::vector<double>{0.3, -0.2, 0.9});
  auto loss = [&] {
    ag::Tape tape(false);
    Tensor y = tape.value(nets.predict_noise(tape, tape.constant(x), 42, tape.constant(zt)));
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
    return s;
  };
  ag::Grads grads = ag::zero_grads(nets.params());
  ag::Tape tape;
  ag::Var zv = tape.constant(zt), xv = tape.constant(x);
  tape.backward(ag::sum_squared_error(tape, nets.predict_noise(tape, xv, 42, zv), target), grads);

  int checked = 0;
  for (auto [p, i] : sample_coords(nets.params(), kPredictorParams, 60, rng)) {
    const double numeric = testing::central_diff(loss, &nets.params().at(p).value.data[i]);
    CAPTURE(nets.params().at(p).name);
    CHECK(testing::rel_err(grads[p].data[i], numeric, 1e-6) <= 1e-4);
    ++checked;
  }
  CHECK(checked == 60);
  // Encoder parameters are untouched by the predictor graph.
  for (std::size_t p = 0; p < grads.size(); ++p)
    if (nets.params().at(p).group == kEncoderParams)
      for (double g : grads[p].data) CHECK(g == 0.0);

  // Gradient with respect to the latent input.
  Tensor z_mut = zt;
  for (int j = 0; j < 3; ++j) {
    auto loss_z = [&] {
      ag::Tape t(false);
      Tensor y = t.value(nets.predict_noise(t, t.constant(x), 42, t.constant(z_mut)));
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
      return s;
    };
    CHECK(testing::rel_err(tape.grad(zv).data[j], testing::central_diff(loss_z, &z_mut.data[j]), 1e-6) <= 1e-4);
  }
}

TEST_CASE("encode then reparameterize is differentiable end to end") {
  Networks nets(tiny_config());
  Rng rng(8);
  const Tensor x = random_tensor({1, 8, 8}, rng);
  const Tensor eps = random_tensor({3}, rng), target = random_tensor({3}, rng);
  auto build = [&](ag::Tape& tape) {
    auto enc = nets.encode(tape, tape.constant(x));
    ag::Var z = ag::reparameterize(tape, enc.mu, enc.log_sigma2, eps);
    return ag::sum_squared_error(tape, z, target);
  };
  auto loss = [&] {
    ag::Tape tape(false);
    return tape.value(build(tape))[0];
  };
  ag::Grads grads = ag::zero_grads(nets.params());
  ag::Tape tape;
  tape.backward(build(tape), grads);
  for (auto [p, i] : sample_coords(nets.params(), kEncoderParams, 50, rng)) {
    const double numeric = testing::central_diff(loss, &nets.params().at(p).value.data[i]);
    CAPTURE(nets.params().at(p).name);
    CHECK(testing::rel_err(grads[p].data[i], numeric, 1e-6) <= 1e-4);
  }
}
