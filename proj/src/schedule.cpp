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

#include "cddpm/schedule.hpp"

#include <stdexcept>
#include <string>

namespace cddpm {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("noise schedule needs T >= 1, got " + std::to_string(T));
  if (beta_start > beta_end) throw std::invalid_argument("noise schedule needs beta_start <= beta_end");
  std::vector<double> betas(T);
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  if (T > 1) betas.back() = beta_end;
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) { return NoiseSchedule(std::move(betas)); }

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("noise schedule needs T >= 1, got 0");
  alphas_.resize(betas_.size());
  alpha_bars_.resize(betas_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    const double b = betas_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("beta at t=" + std::to_string(i + 1) + " outside (0,1): " + std::to_string(b));
    }
    alphas_[i] = 1.0 - b;
    prod *= alphas_[i];
    alpha_bars_[i] = prod;
  }
}

int NoiseSchedule::check(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1," + std::to_string(steps()) + "]");
  }
  return t;
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  return alpha_bars_.at(check(t) - 1);
}

}  // namespace cddpm
