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

#include <vector>

namespace cddpm {

// Fixed forward-process variance schedule. Timesteps are 1-based:
// beta(1) .. beta(T). alpha_bar(0) is defined as 1.
class NoiseSchedule {
 public:
  // Linear interpolation of betas from beta_start to beta_end inclusive.
  static NoiseSchedule linear(int T, double beta_start, double beta_end);
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(check(t) - 1); }
  double alpha(int t) const { return alphas_.at(check(t) - 1); }
  double alpha_bar(int t) const;

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  explicit NoiseSchedule(std::vector<double> betas);
  int check(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

}  // namespace cddpm
