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

#include "cddpm/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cddpm/rng.hpp"
#include "cddpm/simd.hpp"

namespace cddpm {
namespace {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads a whole file, transparently inflating gzip content. Tries `path`
// and then `path.gz`.
std::vector<std::uint8_t> read_maybe_gz(const fs::path& path) {
  fs::path actual = path;
  if (!fs::exists(actual)) actual += ".gz";
  if (!fs::exists(actual)) throw DataError("missing dataset file: " + path.string() + "[.gz]");
  gzFile f = gzopen(actual.c_str(), "rb");
  if (!f) throw DataError("cannot open " + actual.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw DataError("corrupt compressed file " + actual.string());
  return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw DataError("truncated IDX header");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
         std::uint32_t(b[off + 3]);
}

Tensor bytes_to_image(const std::uint8_t* p, const Shape& shape) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normalize_pixel(p[i]);
  return t;
}

void load_idx_pair(const fs::path& images_file, const fs::path& labels_file, Dataset& out) {
  const auto img = read_maybe_gz(images_file);
  const auto lab = read_maybe_gz(labels_file);
  if (be32(img, 0) != 0x00000803) throw DataError("bad IDX image magic in " + images_file.string());
  if (be32(lab, 0) != 0x00000801) throw DataError("bad IDX label magic in " + labels_file.string());
  const std::uint32_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  if (be32(lab, 4) != n) throw DataError("IDX image/label counts differ for " + images_file.string());
  const std::size_t px = static_cast<std::size_t>(rows) * cols;
  if (img.size() < 16 + n * px || lab.size() < 8 + n)
    throw DataError("truncated IDX records in " + images_file.string());
  const Shape shape{1, static_cast<int>(rows), static_cast<int>(cols)};
  out.images.shape = shape;
  for (std::uint32_t i = 0; i < n; ++i) {
    out.images.images.push_back(bytes_to_image(img.data() + 16 + i * px, shape));
    out.labels.push_back(lab[8 + i]);
  }
}

Dataset load_idx_dataset(const fs::path& dir, const std::string& name, const std::string& split) {
  Dataset d;
  d.num_classes = 10;
  if (split == "train" || split == "all")
    load_idx_pair(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", d);
  if (split == "all") d.test_begin = d.size();
  if (split == "test" || split == "all")
    load_idx_pair(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", d);
  d.images.name = name;
  return d;
}

Dataset load_cifar10(const fs::path& dir, const std::string& split) {
  std::vector<fs::path> files;
  if (split == "train" || split == "all")
    for (int b = 1; b <= 5; ++b) files.push_back(dir / ("data_batch_" + std::to_string(b) + ".bin"));
  if (split == "test" || split == "all") files.push_back(dir / "test_batch.bin");
  Dataset d;
  d.num_classes = 10;
  d.images.name = "cifar10";
  d.images.shape = {3, 32, 32};
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  for (const auto& f : files) {
    if (split == "all" && f.filename() == "test_batch.bin") d.test_begin = d.size();
    const auto bytes = read_maybe_gz(f);
    if (bytes.size() % kRecord != 0) throw DataError("corrupt CIFAR-10 batch " + f.string());
    for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
      if (bytes[off] > 9) throw DataError("bad CIFAR-10 label in " + f.string());
      d.labels.push_back(bytes[off]);
      d.images.images.push_back(bytes_to_image(bytes.data() + off + 1, d.images.shape));
    }
  }
  return d;
}

Tensor raster_to_image(const Raster& r, const fs::path& source, const Shape* expect) {
  Tensor t = from_raster(r);
  if (expect && !expect->empty() && t.shape != *expect)
    throw DataError("image " + source.string() + " has shape " + shape_str(t.shape) + ", expected " +
                    shape_str(*expect));
  return t;
}

Dataset load_coil20(const fs::path& dir) {
  Dataset d;
  d.num_classes = 20;
  d.images.name = "coil20";
  for (int obj = 1; obj <= 20; ++obj) {
    for (int view = 0; view < 72; ++view) {
      const fs::path f = dir / ("obj" + std::to_string(obj) + "__" + std::to_string(view) + ".png");
      if (!fs::exists(f)) throw DataError("missing dataset file: " + f.string());
      d.images.images.push_back(raster_to_image(read_png(f), f, &d.images.shape));
      if (d.images.shape.empty()) d.images.shape = d.images.images.back().shape;
      d.labels.push_back(obj - 1);
    }
  }
  return d;
}

Dataset load_manifest_dir(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw DataError("missing dataset manifest: " + manifest.string());
  Dataset d;
  d.images.name = dir.filename().string();
  std::string line;
  std::getline(in, line);
  if (line.rfind("file", 0) != 0)
    throw DataError("manifest must start with a 'file,label' header: " + manifest.string());
  bool any_label = false, any_missing = false;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string file = line.substr(0, comma);
    const std::string label = comma == std::string::npos ? "" : line.substr(comma + 1);
    const fs::path f = dir / file;
    d.images.images.push_back(raster_to_image(read_image(f), f, &d.images.shape));
    if (d.images.shape.empty()) d.images.shape = d.images.images.back().shape;
    if (label.empty()) {
      any_missing = true;
      labels.push_back(-1);
    } else {
      any_label = true;
      labels.push_back(std::stoi(label));
    }
  }
  if (any_label && any_missing) throw DataError("manifest mixes labeled and unlabeled rows: " + manifest.string());
  if (any_label) {
    d.labels = std::move(labels);
    d.num_classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  }
  return d;
}

Tensor downscale_image(const Tensor& x, int f) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % f || w % f)
    throw DataError("downscale factor " + std::to_string(f) + " does not divide " + shape_str(x.shape));
  const int ho = h / f, wo = w / f;
  Tensor y({c, ho, wo});
  const double inv = 1.0 / (f * f);
  for (int ch = 0; ch < c; ++ch)
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        y.data[(static_cast<std::size_t>(ch) * ho + yy / f) * wo + xx / f] +=
            inv * x.data[(static_cast<std::size_t>(ch) * h + yy) * w + xx];
  return y;
}

}  // namespace

fs::path data_root(const LoadOptions& options) {
  if (!options.root.empty()) return options.root;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  return "data";
}

Dataset load_dataset(const std::string& name, const LoadOptions& options) {
  if (options.split != "train" && options.split != "test" && options.split != "all")
    throw std::invalid_argument("unknown split '" + options.split + "' (expected train, test or all)");
  if (options.downscale < 1) throw std::invalid_argument("downscale factor must be >= 1");
  const fs::path root = data_root(options);
  Dataset d;
  if (name == "mnist") {
    d = load_idx_dataset(root / "mnist", "mnist", options.split);
  } else if (name == "fashion-mnist") {
    d = load_idx_dataset(root / "fashion-mnist", "fashion-mnist", options.split);
  } else if (name == "cifar10") {
    d = load_cifar10(root / "cifar-10-batches-bin", options.split);
  } else if (name == "coil20") {
    d = load_coil20(root / "coil-20-proc");
  } else if (fs::is_directory(name)) {
    d = load_manifest_dir(name);
  } else {
    throw std::invalid_argument("unknown dataset '" + name + "' (not a known name or an existing directory)");
  }
  d.images.split = options.split;
  truncate(d, options.limit);
  if (options.downscale > 1) {
    for (auto& img : d.images.images) img = downscale_image(img, options.downscale);
    if (!d.images.images.empty()) d.images.shape = d.images.images.front().shape;
  }
  if (d.size() == 0) throw std::runtime_error("dataset '" + name + "' is empty");
  return d;
}

Dataset synth_mixture_images(const SynthOptions& o) {
  if (o.classes < 2) throw std::invalid_argument("synthetic dataset needs at least 2 classes");
  if (o.per_class < 1 || o.size < 4) throw std::invalid_argument("synthetic dataset needs per_class >= 1, size >= 4");
  Dataset d;
  d.num_classes = o.classes;
  d.images.name = "synth";
  d.images.split = "all";
  d.images.shape = {1, o.size, o.size};
  Rng rng(o.seed);
  const double center = (o.size - 1) / 2.0;
  const double radius = o.size * 0.25;
  const int n = o.classes * o.per_class;
  for (int i = 0; i < n; ++i) {
    const int c = i % o.classes;
    const double angle = 2.0 * M_PI * c / o.classes;
    const double cy = center + radius * std::sin(angle) + o.position_jitter * rng.normal();
    const double cx = center + radius * std::cos(angle) + o.position_jitter * rng.normal();
    const double width = o.size * (0.08 + 0.04 * (c % 3));
    const double amp = std::clamp(1.0 + o.amplitude_jitter * rng.normal(), 0.5, 1.0);
    Tensor img(d.images.shape);
    for (int y = 0; y < o.size; ++y)
      for (int x = 0; x < o.size; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double v = -1.0 + 2.0 * amp * std::exp(-r2 / (2.0 * width * width)) + o.pixel_noise * rng.normal();
        img.data[static_cast<std::size_t>(y) * o.size + x] = std::clamp(v, -1.0, 1.0);
      }
    d.images.images.push_back(std::move(img));
    d.labels.push_back(c);
  }
  return d;
}

double nearest_centroid_accuracy(const Dataset& data) {
  if (!data.labeled()) throw std::invalid_argument("nearest_centroid_accuracy needs labels");
  const std::size_t dim = shape_size(data.images.shape);
  const int k = data.num_classes;
  std::vector<double> centroids(static_cast<std::size_t>(k) * dim, 0.0);
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    simd::axpy(dim, 1.0, data.images.images[i].ptr(), centroids.data() + data.labels[i] * dim);
    ++counts[data.labels[i]];
  }
  for (int c = 0; c < k; ++c)
    if (counts[c]) simd::scale(dim, 1.0 / counts[c], centroids.data() + c * dim);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    int best = 0;
    double bd = simd::sqdist(dim, data.images.images[i].ptr(), centroids.data());
    for (int c = 1; c < k; ++c) {
      const double dd = simd::sqdist(dim, data.images.images[i].ptr(), centroids.data() + c * dim);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    correct += best == data.labels[i];
  }
  return static_cast<double>(correct) / data.size();
}

Dataset select_classes(Dataset data, const std::vector<int>& classes) {
  if (!data.labeled()) throw std::invalid_argument("select_classes needs a labeled dataset");
  if (classes.empty()) throw std::invalid_argument("select_classes: empty class list");
  std::vector<int> remap(static_cast<std::size_t>(std::max(data.num_classes, 1)), -1);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int c = classes[i];
    if (c < 0 || c >= data.num_classes)
      throw std::invalid_argument("select_classes: class " + std::to_string(c) + " not in dataset");
    if (remap[c] >= 0) throw std::invalid_argument("select_classes: class " + std::to_string(c) + " listed twice");
    remap[c] = static_cast<int>(i);
  }
  Dataset out;
  out.images.name = data.images.name;
  out.images.split = data.images.split;
  out.images.shape = data.images.shape;
  out.num_classes = static_cast<int>(classes.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (i == data.test_begin && i > 0) out.test_begin = out.size();
    const int c = remap[data.labels[i]];
    if (c < 0) continue;
    out.images.images.push_back(std::move(data.images.images[i]));
    out.labels.push_back(c);
  }
  if (out.size() == 0) throw std::runtime_error("select_classes: no records left in " + data.images.name);
  if (out.test_begin == out.size()) out.test_begin = 0;
  return out;
}

void truncate(Dataset& data, std::size_t limit) {
  if (limit == 0 || limit >= data.size()) return;
  if (limit <= data.test_begin) data.test_begin = 0;
  data.images.images.resize(limit);
  if (data.labeled()) data.labels.resize(limit);
}

Raster to_raster(const Tensor& image) {
  if (image.shape.size() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw ShapeError("to_raster: expected [1|3, H, W], got " + shape_str(image.shape));
  Raster r;
  r.channels = image.dim(0);
  r.height = image.dim(1);
  r.width = image.dim(2);
  r.pixels.resize(image.size());
  const std::size_t hw = static_cast<std::size_t>(r.height) * r.width;
  for (int c = 0; c < r.channels; ++c)
    for (std::size_t p = 0; p < hw; ++p) {
      const double v = denormalize_pixel(std::clamp(image.data[c * hw + p], -1.0, 1.0));
      r.pixels[p * r.channels + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  return r;
}

Tensor from_raster(const Raster& r) {
  Tensor t({r.channels, r.height, r.width});
  const std::size_t hw = static_cast<std::size_t>(r.height) * r.width;
  for (int c = 0; c < r.channels; ++c)
    for (std::size_t p = 0; p < hw; ++p) t.data[c * hw + p] = normalize_pixel(r.pixels[p * r.channels + c]);
  return t;
}

Raster image_grid(const std::vector<Tensor>& images, int cols) {
  if (images.empty()) throw std::invalid_argument("image_grid: no images");
  cols = std::max(1, std::min<int>(cols, static_cast<int>(images.size())));
  const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
  const Raster first = to_raster(images.front());
  const int cw = first.width + 1, ch = first.height + 1;
  Raster grid;
  grid.channels = first.channels;
  grid.width = cols * cw + 1;
  grid.height = rows * ch + 1;
  grid.pixels.assign(static_cast<std::size_t>(grid.width) * grid.height * grid.channels, 0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Raster r = to_raster(images[i]);
    if (r.width != first.width || r.height != first.height || r.channels != first.channels)
      throw ShapeError("image_grid: images differ in shape");
    const int ox = 1 + static_cast<int>(i % cols) * cw, oy = 1 + static_cast<int>(i / cols) * ch;
    for (int y = 0; y < r.height; ++y)
      std::copy_n(r.pixels.data() + static_cast<std::size_t>(y) * r.width * r.channels, r.width * r.channels,
                  grid.pixels.data() + (static_cast<std::size_t>(oy + y) * grid.width + ox) * grid.channels);
  }
  return grid;
}

}  // namespace cddpm
