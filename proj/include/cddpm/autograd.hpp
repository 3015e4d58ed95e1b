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

// Minimal reverse-mode differentiation over per-sample tensors.
//
// A Tape records nodes in creation order; backward() walks them in reverse.
// Parameters live in a ParamStore outside the tape, so one store can be
// shared read-only by many tapes (one per sample) while each tape
// accumulates into its own gradient buffer.

#include <functional>
#include <string>
#include <vector>

#include "cddpm/tensor.hpp"

namespace cddpm::ag {

struct ParamEntry {
  std::string name;
  Tensor value;
  int group = 0;
};

class ParamStore {
 public:
  int add(std::string name, Tensor init, int group);
  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;
  std::size_t total_size(int group) const;

  ParamEntry& at(std::size_t i) { return entries_.at(i); }
  const ParamEntry& at(std::size_t i) const { return entries_.at(i); }
  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

 private:
  std::vector<ParamEntry> entries_;
};

// One gradient tensor per parameter, shaped like the parameter.
using Grads = std::vector<Tensor>;
Grads zero_grads(const ParamStore& store);
void add_into(Grads& dst, const Grads& src);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  // A non-recording tape computes values only; backward() is disallowed.
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var constant(Tensor value);
  Var param(const ParamStore& store, int param_id);
  Var push(Tensor value, Backward fn);

  const Tensor& value(Var v) const;
  // Gradient buffer of v, allocated as zeros on first access.
  Tensor& grad(Var v);
  Tensor& grad(int id) { return grad(Var{id}); }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.data.empty(); }

  // Seeds d(root)/d(root) = seed and accumulates parameter gradients into sink.
  void backward(Var root, Grads& sink, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward backward;
    int param_id = -1;
  };
  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace cddpm::ag
