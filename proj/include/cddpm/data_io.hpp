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
#include <optional>
#include <string>
#include <vector>

#include "cddpm/image_io.hpp"
#include "cddpm/tensor.hpp"

namespace cddpm {

// Images only. Training code paths take an ImageSet, never a Dataset, so
// they have no access to labels.
struct ImageSet {
  std::string name;
  std::string split;
  Shape shape;  // [C, H, W]
  std::vector<Tensor> images;

  std::size_t size() const { return images.size(); }
};

// Images plus optional ground-truth labels for evaluation.
struct Dataset {
  ImageSet images;
  std::vector<int> labels;  // empty when unlabeled
  int num_classes = 0;
  // Index of the first record of the source's own test split when both
  // splits were loaded (0 = no such boundary).
  std::size_t test_begin = 0;

  std::size_t size() const { return images.size(); }
  bool labeled() const { return !labels.empty(); }
};

// Native 8-bit range -> [-1, 1] and back.
inline double normalize_pixel(double v) { return v / 127.5 - 1.0; }
inline double denormalize_pixel(double v) { return (v + 1.0) * 127.5; }

struct LoadOptions {
  // "train", "test" or "all" (train followed by test).
  std::string split = "all";
  // Keep only the first `limit` records in canonical order (0 = no limit).
  std::size_t limit = 0;
  // Integer average-pooling factor applied to every image (1 = native size).
  int downscale = 1;
  // Overrides CDDPM_DATA_DIR when non-empty.
  std::filesystem::path root;
};

// Environment variable naming the dataset cache directory.
inline constexpr const char* kDataDirEnv = "CDDPM_DATA_DIR";
std::filesystem::path data_root(const LoadOptions& options);

// name is one of mnist, fashion-mnist, cifar10, coil20, or a path to a
// directory containing manifest.csv ("file,label" rows; label may be empty).
Dataset load_dataset(const std::string& name, const LoadOptions& options);

struct SynthOptions {
  int classes = 3;
  int per_class = 200;
  int size = 16;
  std::uint64_t seed = 7;
  double pixel_noise = 0.1;
  double position_jitter = 0.75;
  double amplitude_jitter = 0.15;
};

// Class c is a Gaussian blob with a class-specific position and width, plus
// per-image jitter and pixel noise. Samples are interleaved by class
// (sample i has label i % classes).
Dataset synth_mixture_images(const SynthOptions& options);

// Pixel-space nearest-centroid accuracy of a labeled dataset.
double nearest_centroid_accuracy(const Dataset& data);

// Keeps only records whose label is in `classes`, relabeled to their index in
// `classes`. Order is preserved. Needs a labeled dataset.
Dataset select_classes(Dataset data, const std::vector<int>& classes);

// Keeps the first `limit` records (0 = all).
void truncate(Dataset& data, std::size_t limit);

// Tensor [C, H, W] in [-1, 1] <-> 8-bit raster (values clamped on export).
Raster to_raster(const Tensor& image);
Tensor from_raster(const Raster& r);

// Tiles images into a grid with `cols` columns and one pixel of padding.
Raster image_grid(const std::vector<Tensor>& images, int cols);

}  // namespace cddpm
