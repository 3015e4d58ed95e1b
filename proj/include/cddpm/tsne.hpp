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
#include <filesystem>
#include <span>
#include <vector>

#include "cddpm/tensor.hpp"

namespace cddpm {

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  // <= 0 selects max(N / early_exaggeration / 4, 50).
  double learning_rate = 0.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  std::uint64_t seed = 0;
};

// Exact (O(N^2)) t-SNE of the rows of X [N, D] into two dimensions.
Tensor tsne_embed(const Tensor& X, const TsneOptions& options);

struct PlotRecord {
  Tensor coords;  // [N, 2]
  std::vector<int> labels;
  std::vector<bool> highlight;

  std::size_t highlighted() const;
};

// Embeds latents with t-SNE and writes a scatter plot (colored by label,
// highlighted points overlaid in red) to `png_path`, plus the plotted data
// as a CSV next to it (same stem, .csv). labels and highlight may be empty.
PlotRecord tsne_plot(const Tensor& latents, std::span<const int> labels, const std::vector<bool>& highlight,
                     const std::filesystem::path& png_path, const TsneOptions& options);

}  // namespace cddpm
