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

#include "cddpm/tsne.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "cddpm/image_io.hpp"
#include "cddpm/rng.hpp"
#include "cddpm/simd.hpp"

namespace cddpm {
namespace {

// Row-conditional affinities with a per-row precision found by bisection
// so that each row's entropy matches log(perplexity).
std::vector<double> conditional_affinities(const std::vector<double>& d2, int n, double perplexity) {
  const double target = std::log(perplexity);
  std::vector<double> p(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    const double* row = d2.data() + static_cast<std::size_t>(i) * n;
    double* pr = p.data() + static_cast<std::size_t>(i) * n;
    double dmin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, row[j]);
    for (int iter = 0; iter < 100; ++iter) {
      double sum = 0.0, wsum = 0.0;
      for (int j = 0; j < n; ++j) {
        pr[j] = j == i ? 0.0 : std::exp(-beta * (row[j] - dmin));
        sum += pr[j];
        wsum += pr[j] * (row[j] - dmin);
      }
      const double h = std::log(sum) + beta * wsum / sum;
      for (int j = 0; j < n; ++j) pr[j] /= sum;
      if (std::abs(h - target) < 1e-5) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  return p;
}

constexpr std::array<std::array<std::uint8_t, 3>, 10> kPalette{{{31, 119, 180},
                                                                {255, 127, 14},
                                                                {44, 160, 44},
                                                                {148, 103, 189},
                                                                {140, 86, 75},
                                                                {227, 119, 194},
                                                                {127, 127, 127},
                                                                {188, 189, 34},
                                                                {23, 190, 207},
                                                                {0, 0, 128}}};

void disc(Raster& r, double cx, double cy, int radius, const std::array<std::uint8_t, 3>& color) {
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      const int x = static_cast<int>(std::lround(cx)) + dx, y = static_cast<int>(std::lround(cy)) + dy;
      if (x < 0 || y < 0 || x >= r.width || y >= r.height) continue;
      std::uint8_t* px = r.pixels.data() + (static_cast<std::size_t>(y) * r.width + x) * 3;
      std::copy(color.begin(), color.end(), px);
    }
}

}  // namespace

std::size_t PlotRecord::highlighted() const {
  return static_cast<std::size_t>(std::count(highlight.begin(), highlight.end(), true));
}

Tensor tsne_embed(const Tensor& X, const TsneOptions& o) {
  if (X.shape.size() != 2) throw ShapeError("tsne_embed: expected [N, D], got " + shape_str(X.shape));
  const int n = X.dim(0), dim = X.dim(1);
  if (n < 2) throw std::invalid_argument("tsne_embed: need at least 2 points");
  const auto& kt = simd::active();
  std::vector<double> d2(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double d =
          kt.sqdist(dim, X.ptr() + static_cast<std::size_t>(i) * dim, X.ptr() + static_cast<std::size_t>(j) * dim);
      d2[static_cast<std::size_t>(i) * n + j] = d2[static_cast<std::size_t>(j) * n + i] = d;
    }
  const double perplexity = std::clamp(o.perplexity, 1.0, std::max(1.0, (n - 1) / 3.0));
  std::vector<double> pc = conditional_affinities(d2, n, perplexity);
  std::vector<double> P(pc.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      P[static_cast<std::size_t>(i) * n + j] = std::max(
          (pc[static_cast<std::size_t>(i) * n + j] + pc[static_cast<std::size_t>(j) * n + i]) / (2.0 * n), 1e-12);

  const double lr = o.learning_rate > 0 ? o.learning_rate : std::max(n / o.early_exaggeration / 4.0, 50.0);
  Rng rng(o.seed);
  std::vector<double> Y(static_cast<std::size_t>(n) * 2), update(Y.size(), 0.0), gains(Y.size(), 1.0), grad(Y.size());
  for (double& v : Y) v = 1e-4 * rng.normal();
  std::vector<double> num(static_cast<std::size_t>(n) * n);
  for (int it = 0; it < o.iterations; ++it) {
    const double exag = it < o.exaggeration_iters ? o.early_exaggeration : 1.0;
    const double momentum = it < o.exaggeration_iters ? 0.5 : 0.8;
    double zsum = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double v = 0.0;
        if (i != j) {
          const double dx = Y[2 * i] - Y[2 * j], dy = Y[2 * i + 1] - Y[2 * j + 1];
          v = 1.0 / (1.0 + dx * dx + dy * dy);
        }
        num[static_cast<std::size_t>(i) * n + j] = v;
        zsum += v;
      }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const std::size_t ij = static_cast<std::size_t>(i) * n + j;
        const double m = 4.0 * (exag * P[ij] - num[ij] / zsum) * num[ij];
        grad[2 * i] += m * (Y[2 * i] - Y[2 * j]);
        grad[2 * i + 1] += m * (Y[2 * i + 1] - Y[2 * j + 1]);
      }
    for (std::size_t k = 0; k < Y.size(); ++k) {
      gains[k] = (grad[k] > 0) != (update[k] > 0) ? gains[k] + 0.2 : std::max(gains[k] * 0.8, 0.01);
      update[k] = momentum * update[k] - lr * gains[k] * grad[k];
      Y[k] += update[k];
    }
    for (int d = 0; d < 2; ++d) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += Y[2 * i + d];
      mean /= n;
      for (int i = 0; i < n; ++i) Y[2 * i + d] -= mean;
    }
  }
  return Tensor({n, 2}, std::move(Y));
}

PlotRecord tsne_plot(const Tensor& latents, std::span<const int> labels, const std::vector<bool>& highlight,
                     const std::filesystem::path& png_path, const TsneOptions& options) {
  if (latents.shape.size() != 2 || latents.dim(0) < 2)
    throw std::invalid_argument("tsne_plot: need at least 2 latents");
  const int n = latents.dim(0);
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("tsne_plot: label count does not match latent count");
  if (!highlight.empty() && highlight.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("tsne_plot: highlight mask length does not match latent count");

  PlotRecord rec;
  rec.coords = tsne_embed(latents, options);
  rec.labels = labels.empty() ? std::vector<int>(n, 0) : std::vector<int>(labels.begin(), labels.end());
  rec.highlight = highlight.empty() ? std::vector<bool>(n, false) : highlight;

  constexpr int kSize = 640, kMargin = 20;
  Raster img;
  img.width = img.height = kSize;
  img.channels = 3;
  img.pixels.assign(static_cast<std::size_t>(kSize) * kSize * 3, 255);
  double xmin = rec.coords[0], xmax = xmin, ymin = rec.coords[1], ymax = ymin;
  for (int i = 0; i < n; ++i) {
    xmin = std::min(xmin, rec.coords[2 * i]);
    xmax = std::max(xmax, rec.coords[2 * i]);
    ymin = std::min(ymin, rec.coords[2 * i + 1]);
    ymax = std::max(ymax, rec.coords[2 * i + 1]);
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  auto px = [&](int i) {
    return std::pair{kMargin + (rec.coords[2 * i] - xmin) / span * (kSize - 2 * kMargin),
                     kMargin + (ymax - rec.coords[2 * i + 1]) / span * (kSize - 2 * kMargin)};
  };
  for (int i = 0; i < n; ++i) {
    const auto [x, y] = px(i);
    disc(img, x, y, 3, kPalette[static_cast<std::size_t>(std::max(rec.labels[i], 0)) % kPalette.size()]);
  }
  for (int i = 0; i < n; ++i) {
    if (!rec.highlight[i]) continue;
    const auto [x, y] = px(i);
    disc(img, x, y, 4, {214, 39, 40});
  }
  write_png(png_path, img);

  std::filesystem::path csv = png_path;
  csv.replace_extension(".csv");
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << "x,y,label,highlight\n" << std::setprecision(17);
  for (int i = 0; i < n; ++i)
    out << rec.coords[2 * i] << ',' << rec.coords[2 * i + 1] << ',' << rec.labels[i] << ','
        << (rec.highlight[i] ? 1 : 0) << '\n';
  return rec;
}

}  // namespace cddpm
