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
#include <string>
#include <vector>

namespace cddpm {

// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
};

void write_png(const std::filesystem::path& path, const Raster& image);
// Decodes PNG to 8-bit gray or RGB (alpha dropped, palettes expanded).
Raster read_png(const std::filesystem::path& path);
// Binary (P5/P6) PGM/PPM.
Raster read_pnm(const std::filesystem::path& path);
// Dispatches on extension: .png, .pgm, .ppm.
Raster read_image(const std::filesystem::path& path);

}  // namespace cddpm
