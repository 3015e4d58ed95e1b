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

#include "cddpm/autograd.hpp"

#include <stdexcept>

#include "cddpm/simd.hpp"

namespace cddpm::ag {

int ParamStore::add(std::string name, Tensor init, int group) {
  entries_.push_back({std::move(name), std::move(init), group});
  return static_cast<int>(entries_.size() - 1);
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::size_t ParamStore::total_size(int group) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.group == group) n += e.value.size();
  return n;
}

Grads zero_grads(const ParamStore& store) {
  Grads g;
  g.reserve(store.count());
  for (const auto& e : store.entries()) g.emplace_back(e.value.shape);
  return g;
}

void add_into(Grads& dst, const Grads& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) simd::axpy(dst[i].size(), 1.0, src[i].ptr(), dst[i].ptr());
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const ParamStore& store, int param_id) {
  Node n;
  n.external = &store.at(param_id).value;
  n.param_id = param_id;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, Backward fn) {
  Node n;
  n.value = std::move(value);
  if (record_) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.data.empty()) n.grad = Tensor(value(v).shape);
  return n.grad;
}

void Tape::backward(Var root, Grads& sink, double seed) {
  if (!record_) throw std::logic_error("backward() on a non-recording tape");
  if (value(root).size() != 1) throw std::logic_error("backward() root must be a scalar");
  grad(root).data[0] += seed;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) continue;
    if (n.param_id >= 0) {
      Tensor& dst = sink.at(n.param_id);
      simd::axpy(dst.size(), 1.0, n.grad.ptr(), dst.ptr());
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

}  // namespace cddpm::ag
