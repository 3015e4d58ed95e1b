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

// Data-parallel inner loops used by the network layers, the GMM and the
// distance-based evaluation code. Each kernel has a scalar reference
// implementation and (on x86-64) an AVX2/FMA variant; the active table is
// chosen once at startup from CPUID and can be overridden for testing.

#include <cstddef>
#include <string_view>

namespace cddpm::simd {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // sum_i x[i] * y[i]
  double (*dot)(std::size_t n, const double* x, const double* y);
  // sum_i (x[i] - y[i])^2
  double (*sqdist)(std::size_t n, const double* x, const double* y);
  // sum_i (x[i] - m[i])^2 * w[i]
  double (*wsqdist)(std::size_t n, const double* x, const double* m, const double* w);
  // y[i] *= a
  void (*scale)(std::size_t n, double a, double* y);
};

const KernelTable& scalar_kernels();
// Null when the build has no AVX2 variant or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

// The table in use. Defaults to the best supported backend unless the
// CDDPM_SIMD environment variable is set to "scalar".
const KernelTable& active();
// Returns false if the backend is not available on this machine.
bool set_backend(Backend b);
std::string_view backend_name(Backend b);

inline void axpy(std::size_t n, double a, const double* x, double* y) { active().axpy(n, a, x, y); }
inline double dot(std::size_t n, const double* x, const double* y) { return active().dot(n, x, y); }
inline double sqdist(std::size_t n, const double* x, const double* y) { return active().sqdist(n, x, y); }
inline double wsqdist(std::size_t n, const double* x, const double* m, const double* w) {
  return active().wsqdist(n, x, m, w);
}
inline void scale(std::size_t n, double a, double* y) { active().scale(n, a, y); }

}  // namespace cddpm::simd
