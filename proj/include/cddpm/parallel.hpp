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

#include <cstddef>
#include <functional>

namespace cddpm {

// Runs body(shard) for shard in [0, shards) on up to `threads` workers.
// Work is split by shard index only, so any reduction the caller performs
// over shards in index order is independent of the thread count.
void parallel_shards(std::size_t shards, std::size_t threads, const std::function<void(std::size_t)>& body);

std::size_t default_threads();

}  // namespace cddpm
