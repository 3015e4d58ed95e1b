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

// Differentiable layer primitives on per-sample tensors. Image tensors are
// [C, H, W]; vectors are [N]; scalars are [1].

#include "cddpm/autograd.hpp"

namespace cddpm::ag {

// Same-padding convolution with an odd square kernel; w is [Co, Ci, k, k], b is [Co].
Var conv2d(Tape& tape, Var x, Var w, Var b);
// y = W x + b with W [Out, In].
Var linear(Tape& tape, Var x, Var w, Var b);
Var group_norm(Tape& tape, Var x, int groups, Var gamma, Var beta, double eps = 1e-5);
// y[c] = x[c] * (1 + ss[c]) + ss[C + c]
Var scale_shift(Tape& tape, Var x, Var ss);
Var silu(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
Var avg_pool2(Tape& tape, Var x);
Var upsample2(Tape& tape, Var x);
// Average-pools [C, H, W] down to [C, out, out]; H and W must be multiples of out.
Var adaptive_avg_pool(Tape& tape, Var x, int out);
Var concat_channels(Tape& tape, Var a, Var b);
Var flatten(Tape& tape, Var x);
Var slice(Tape& tape, Var v, int begin, int len);
// Elementwise clamp; gradient is zero where the input was clipped.
Var clamp(Tape& tape, Var x, double lo, double hi);
// z = mu + exp(0.5 * logvar) * eps, eps constant.
Var reparameterize(Tape& tape, Var mu, Var logvar, const Tensor& eps);
// sum_i (pred_i - target_i)^2 as a scalar; target is constant.
Var sum_squared_error(Tape& tape, Var pred, const Tensor& target);
// sum_k weights[k] * scalars[k]
Var weighted_sum(Tape& tape, const std::vector<Var>& scalars, const std::vector<double>& weights);

}  // namespace cddpm::ag
