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

#include "cddpm/simd.hpp"

namespace cddpm::simd {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sqdist_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

double wsqdist_scalar(std::size_t n, const double* x, const double* m, const double* w) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - m[i];
    s += d * d * w[i];
  }
  return s;
}

void scale_scalar(std::size_t n, double a, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Backend::kScalar, axpy_scalar,    dot_scalar,
                                 sqdist_scalar,    wsqdist_scalar, scale_scalar};
  return table;
}

}  // namespace cddpm::simd
