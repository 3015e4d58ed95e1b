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

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cddpm {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::string shape_str(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major double tensor. Images are stored channel-major [C, H, W].
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape)) throw ShapeError("tensor data does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

}  // namespace cddpm
