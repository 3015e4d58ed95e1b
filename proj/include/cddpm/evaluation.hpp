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

#include <filesystem>
#include <json.hpp>
#include <span>
#include <vector>

#include "cddpm/tensor.hpp"

namespace cddpm {

// Minimum-cost perfect matching on a square cost matrix (row-major, n x n).
// Returns the column assigned to each row.
std::vector<int> hungarian(const std::vector<double>& cost, int n);

// Counts with predicted clusters as rows and true classes as columns.
struct Confusion {
  int clusters = 0;
  int classes = 0;
  std::vector<long> counts;  // clusters x classes

  long at(int k, int l) const { return counts[static_cast<std::size_t>(k) * classes + l]; }
};
Confusion confusion_matrix(std::span<const int> pred, std::span<const int> truth);

// Best fraction correct over one-to-one cluster-to-class matchings.
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth);

// Mutual information over the arithmetic mean of the two entropies. When
// both partitions are trivial (single block) the result is 1.
double nmi(std::span<const int> pred, std::span<const int> truth);

struct MetricReport {
  std::size_t n = 0;
  double acc = 0.0;
  double nmi = 0.0;
  std::vector<long> cluster_sizes;
  Confusion confusion;
  // Class matched to each cluster, -1 when the cluster is unmatched.
  std::vector<int> matching;
};
MetricReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth);
nlohmann::ordered_json to_json(const MetricReport& r);

struct KnnResult {
  int k = 0;
  double accuracy = 0.0;
};

// Euclidean k-nearest-neighbour majority vote. Vote ties go to the tied
// label whose member is nearest. Latent matrices are [N, D].
std::vector<KnnResult> knn_probe(const Tensor& train, std::span<const int> train_labels, const Tensor& test,
                                 std::span<const int> test_labels, std::span<const int> ks);

}  // namespace cddpm
