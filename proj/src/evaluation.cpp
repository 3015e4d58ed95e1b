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

#include "cddpm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cddpm/simd.hpp"

namespace cddpm {
namespace {

void check_labels(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty() || truth.empty()) throw std::invalid_argument("clustering metrics need non-empty inputs");
  if (pred.size() != truth.size()) throw std::invalid_argument("prediction and truth lengths differ");
  for (int v : pred)
    if (v < 0) throw std::invalid_argument("negative cluster label");
  for (int v : truth)
    if (v < 0) throw std::invalid_argument("negative class label");
}

double entropy(const std::vector<long>& counts, double n) {
  double h = 0.0;
  for (long c : counts)
    if (c > 0) h -= (c / n) * std::log(c / n);
  return h;
}

}  // namespace

// Shortest augmenting path formulation with row/column potentials.
std::vector<int> hungarian(const std::vector<double>& cost, int n) {
  if (cost.size() != static_cast<std::size_t>(n) * n) throw std::invalid_argument("hungarian: cost is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j]) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

Confusion confusion_matrix(std::span<const int> pred, std::span<const int> truth) {
  check_labels(pred, truth);
  Confusion c;
  c.clusters = *std::max_element(pred.begin(), pred.end()) + 1;
  c.classes = *std::max_element(truth.begin(), truth.end()) + 1;
  c.counts.assign(static_cast<std::size_t>(c.clusters) * c.classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) ++c.counts[static_cast<std::size_t>(pred[i]) * c.classes + truth[i]];
  return c;
}

MetricReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth) {
  MetricReport r;
  r.n = pred.size();
  r.confusion = confusion_matrix(pred, truth);
  const Confusion& cm = r.confusion;
  const int n = std::max(cm.clusters, cm.classes);
  std::vector<double> cost(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < cm.clusters; ++k)
    for (int l = 0; l < cm.classes; ++l) cost[static_cast<std::size_t>(k) * n + l] = -static_cast<double>(cm.at(k, l));
  const std::vector<int> match = hungarian(cost, n);
  long correct = 0;
  r.matching.assign(cm.clusters, -1);
  r.cluster_sizes.assign(cm.clusters, 0);
  for (int k = 0; k < cm.clusters; ++k) {
    for (int l = 0; l < cm.classes; ++l) r.cluster_sizes[k] += cm.at(k, l);
    if (match[k] < cm.classes) {
      r.matching[k] = match[k];
      correct += cm.at(k, match[k]);
    }
  }
  r.acc = static_cast<double>(correct) / static_cast<double>(r.n);
  r.nmi = nmi(pred, truth);
  return r;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
  return evaluate_clustering(pred, truth).acc;
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  const Confusion cm = confusion_matrix(pred, truth);
  const double n = static_cast<double>(pred.size());
  std::vector<long> rows(cm.clusters, 0), cols(cm.classes, 0);
  for (int k = 0; k < cm.clusters; ++k)
    for (int l = 0; l < cm.classes; ++l) {
      rows[k] += cm.at(k, l);
      cols[l] += cm.at(k, l);
    }
  double mi = 0.0;
  for (int k = 0; k < cm.clusters; ++k)
    for (int l = 0; l < cm.classes; ++l) {
      const long c = cm.at(k, l);
      if (c == 0) continue;
      mi += (c / n) * std::log(c * n / (static_cast<double>(rows[k]) * cols[l]));
    }
  const double denom = 0.5 * (entropy(rows, n) + entropy(cols, n));
  if (denom <= 0.0) return 1.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["acc"] = r.acc;
  j["nmi"] = r.nmi;
  j["cluster_sizes"] = r.cluster_sizes;
  j["matching"] = r.matching;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int k = 0; k < r.confusion.clusters; ++k) {
    std::vector<long> row(r.confusion.counts.begin() + static_cast<std::ptrdiff_t>(k) * r.confusion.classes,
                          r.confusion.counts.begin() + static_cast<std::ptrdiff_t>(k + 1) * r.confusion.classes);
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

std::vector<KnnResult> knn_probe(const Tensor& train, std::span<const int> train_labels, const Tensor& test,
                                 std::span<const int> test_labels, std::span<const int> ks) {
  if (train.shape.size() != 2 || test.shape.size() != 2 || train.dim(1) != test.dim(1))
    throw ShapeError("knn_probe: latent matrices must be [N, D] with matching D");
  const int n_train = train.dim(0), n_test = test.dim(0), dim = train.dim(1);
  if (train_labels.size() != static_cast<std::size_t>(n_train) ||
      test_labels.size() != static_cast<std::size_t>(n_test))
    throw std::invalid_argument("knn_probe: label count does not match latent count");
  if (n_test == 0) throw std::invalid_argument("knn_probe: empty test set");
  int kmax = 0;
  for (int k : ks) {
    if (k < 1) throw std::invalid_argument("knn_probe: k must be >= 1");
    if (k > n_train) {
      throw std::invalid_argument("knn_probe: k=" + std::to_string(k) + " exceeds training size " +
                                  std::to_string(n_train));
    }
    kmax = std::max(kmax, k);
  }
  const int n_labels = std::max(*std::max_element(train_labels.begin(), train_labels.end()),
                                *std::max_element(test_labels.begin(), test_labels.end())) +
                       1;
  std::vector<long> correct(ks.size(), 0);
  std::vector<std::pair<double, int>> dist(n_train);
  std::vector<int> votes(n_labels);
  std::vector<int> first_rank(n_labels);
  const auto& kt = simd::active();
  for (int i = 0; i < n_test; ++i) {
    const double* q = test.ptr() + static_cast<std::size_t>(i) * dim;
    for (int j = 0; j < n_train; ++j) dist[j] = {kt.sqdist(dim, q, train.ptr() + static_cast<std::size_t>(j) * dim), j};
    std::partial_sort(dist.begin(), dist.begin() + kmax, dist.end());
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      std::fill(votes.begin(), votes.end(), 0);
      std::fill(first_rank.begin(), first_rank.end(), std::numeric_limits<int>::max());
      for (int r = 0; r < ks[ki]; ++r) {
        const int lab = train_labels[dist[r].second];
        ++votes[lab];
        first_rank[lab] = std::min(first_rank[lab], r);
      }
      int best = 0;
      for (int l = 1; l < n_labels; ++l)
        if (votes[l] > votes[best] || (votes[l] == votes[best] && first_rank[l] < first_rank[best])) best = l;
      correct[ki] += best == test_labels[i];
    }
  }
  std::vector<KnnResult> out;
  for (std::size_t ki = 0; ki < ks.size(); ++ki) out.push_back({ks[ki], static_cast<double>(correct[ki]) / n_test});
  return out;
}

}  // namespace cddpm
