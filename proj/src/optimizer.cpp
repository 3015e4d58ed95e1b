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

#include "cddpm/optimizer.hpp"

#include <cmath>

namespace cddpm {

Adam::Adam(const ag::ParamStore& store, Options options)
    : options_(options), m_(ag::zero_grads(store)), v_(ag::zero_grads(store)) {}

void Adam::step(ag::ParamStore& store, const ag::Grads& grads) {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t p = 0; p < store.count(); ++p) {
    Tensor& w = store.at(p).value;
    const Tensor& g = grads[p];
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
  }
}

}  // namespace cddpm
