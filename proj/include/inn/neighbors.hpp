// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#pragma once

#include "inn/common.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace inn {

/// Exact L2 nearest-neighbor search over a fixed feature matrix (one row per training sample).
///
/// Candidates are ranked by squared distance, ties broken by the smaller row index, and a sample is
/// never its own neighbor. Rows are addressed by position; callers map positions to sample ids.
class NeighborIndex {
 public:
  explicit NeighborIndex(MatrixXd features);

  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }
  const MatrixXd& features() const { return features_; }

  /// Squared distances from row i to every row (entry i included).
  VectorXd squared_distances(Eigen::Index i) const;

  double distance(Eigen::Index a, Eigen::Index b) const;

 private:
  MatrixXd features_;
};

NeighborIndex build_index(MatrixXd features);

struct NeighborSet {
  Eigen::Index owner = 0;
  std::vector<Eigen::Index> neighbors;  // row positions, nearest first
  std::vector<int> labels;              // observed labels of the neighbors, when supplied
  std::vector<double> distances;        // nondecreasing
};

/// The L nearest rows to row i. `labels`, when non-empty, are copied for each neighbor.
NeighborSet query(const NeighborIndex& index, Eigen::Index i, int L, std::span<const int> labels = {});

/// query() for every row. `threads` > 1 splits rows across workers; output is identical either way.
std::vector<NeighborSet> query_all(const NeighborIndex& index, int L, std::span<const int> labels = {},
                                   int threads = 1);

// Neighbor cache CSV: `id,n1..nL,d1..dL`, neighbors and owner given as sample ids.
void write_neighbor_cache(const std::vector<NeighborSet>& sets, std::span<const SampleId> ids,
                          const std::filesystem::path& path);
/// Reads a cache back into row positions; `labels` (indexed by row) refills NeighborSet::labels.
std::vector<NeighborSet> read_neighbor_cache(const std::filesystem::path& path, std::span<const SampleId> ids,
                                             std::span<const int> labels = {});

}  // namespace inn
