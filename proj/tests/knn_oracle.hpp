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

#include <algorithm>
#include <numeric>
#include <vector>

namespace inn::testing {

/// O(n^2) reference: sort every other row by (squared distance, row) and keep the first L.
inline std::vector<Eigen::Index> brute_force_neighbors(const MatrixXd& x, Eigen::Index i, int L) {
  std::vector<std::pair<double, Eigen::Index>> all;
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    if (j == i) continue;
    double d = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) d += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
    all.emplace_back(d, j);
  }
  std::sort(all.begin(), all.end());
  std::vector<Eigen::Index> out;
  for (int l = 0; l < L; ++l) out.push_back(all[static_cast<std::size_t>(l)].second);
  return out;
}

}  // namespace inn::testing
