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

#include <vector>

#include "cddpm/networks.hpp"
#include "cddpm/rng.hpp"
#include "cddpm/simd.hpp"
#include "support.hpp"

using namespace cddpm;

namespace {

struct BackendGuard {
  ~BackendGuard() {
    if (!simd::set_backend(simd::Backend::kAvx2)) simd::set_backend(simd::Backend::kScalar);
  }
};

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("scalar kernels match hand-computed values") {
  const auto& k = simd::scalar_kernels();
  std::vector<double> x{1, 2, 3}, y{4, 5, 6}, w{0.5, 1, 2};
  CHECK(k.dot(3, x.data(), y.data()) == 32.0);
  CHECK(k.sqdist(3, x.data(), y.data()) == 27.0);
  CHECK(k.wsqdist(3, x.data(), y.data(), w.data()) == doctest::Approx(4.5 + 9 + 18));
  k.axpy(3, 2.0, x.data(), y.data());
  CHECK(y == std::vector<double>{6, 9, 12});
  k.scale(3, 0.5, y.data());
  CHECK(y == std::vector<double>{3, 4.5, 6});
  CHECK(k.dot(0, nullptr, nullptr) == 0.0);
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  const simd::KernelTable* avx = simd::avx2_kernels();
  if (!avx) {
    MESSAGE("AVX2 variant unavailable on this host; equivalence not exercised");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  Rng rng(11);
  for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 100, 257, 1000}) {
    CAPTURE(n);
    auto x = random_vec(n, rng), y = random_vec(n, rng), m = random_vec(n, rng), w = random_vec(n, rng);
    for (double& v : w) v = std::abs(v);
    const double tol = 1e-13 * static_cast<double>(n + 1);
    CHECK(testing::rel_err(avx->dot(n, x.data(), y.data()), ref.dot(n, x.data(), y.data()), 1.0) <= tol);
    CHECK(testing::rel_err(avx->sqdist(n, x.data(), y.data()), ref.sqdist(n, x.data(), y.data()), 1.0) <= tol);
    CHECK(testing::rel_err(avx->wsqdist(n, x.data(), m.data(), w.data()), ref.wsqdist(n, x.data(), m.data(), w.data()),
                           1.0) <= tol);
    auto y1 = y, y2 = y;
    avx->axpy(n, -0.37, x.data(), y1.data());
    ref.axpy(n, -0.37, x.data(), y2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-15));
    y1 = y;
    y2 = y;
    avx->scale(n, 1.7, y1.data());
    ref.scale(n, 1.7, y2.data());
    CHECK(y1 == y2);
  }
}

TEST_CASE("unaligned views give the same results") {
  const simd::KernelTable* avx = simd::avx2_kernels();
  if (!avx) return;
  Rng rng(3);
  auto x = random_vec(67, rng), y = random_vec(67, rng);
  for (std::size_t off = 0; off < 4; ++off) {
    const std::size_t n = 60;
    CHECK(avx->dot(n, x.data() + off, y.data() + off) ==
          doctest::Approx(simd::scalar_kernels().dot(n, x.data() + off, y.data() + off)).epsilon(1e-13));
  }
}

TEST_CASE("backend switch changes the active table and network outputs stay equivalent") {
  BackendGuard guard;
  REQUIRE(simd::set_backend(simd::Backend::kScalar));
  CHECK(simd::active().backend == simd::Backend::kScalar);
  CHECK(simd::backend_name(simd::Backend::kScalar) == "scalar");

  NetworkConfig cfg;
  cfg.seed = 5;
  Networks nets(cfg);
  Rng rng(8);
  const Tensor x = testing::random_tensor(cfg.image_shape(), rng);
  std::vector<double> z(cfg.latent_dim, 0.3);
  const Tensor ref = nets.predict_noise(x, 17, z);
  const EncoderOutput enc_ref = nets.encode(x);

  if (!simd::set_backend(simd::Backend::kAvx2)) {
    MESSAGE("AVX2 backend unavailable; skipping network equivalence");
    return;
  }
  CHECK(simd::active().backend == simd::Backend::kAvx2);
  const Tensor fast = nets.predict_noise(x, 17, z);
  const EncoderOutput enc_fast = nets.encode(x);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(fast.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-10));
  for (int j = 0; j < cfg.latent_dim; ++j) {
    CHECK(enc_fast.mu[j] == doctest::Approx(enc_ref.mu[j]).epsilon(1e-10));
    CHECK(enc_fast.log_sigma2[j] == doctest::Approx(enc_ref.log_sigma2[j]).epsilon(1e-10));
  }
}
