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

#include <cstdint>

#include "cddpm/autograd.hpp"

namespace cddpm {

// Adam with bias correction.
class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(const ag::ParamStore& store, Options options);

  void step(ag::ParamStore& store, const ag::Grads& grads);

  const Options& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }
  std::int64_t steps() const { return t_; }

  // Moment buffers, exposed for checkpointing.
  ag::Grads& first_moment() { return m_; }
  ag::Grads& second_moment() { return v_; }
  const ag::Grads& first_moment() const { return m_; }
  const ag::Grads& second_moment() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  Options options_;
  ag::Grads m_;
  ag::Grads v_;
  std::int64_t t_ = 0;
};

}  // namespace cddpm
