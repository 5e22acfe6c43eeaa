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

#include <random>

namespace inn::testing {

/// n draws from w·Beta(a0, b0) + (1 - w)·Beta(a1, b1); `component` receives the generator index.
inline VectorXd beta_mixture_sample(Eigen::Index n, double w, double a0, double b0, double a1, double b1,
                                    std::uint64_t seed, std::vector<int>* component = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit;
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = unit(rng) < w ? 0 : 1;
    std::gamma_distribution<double> ga(k == 0 ? a0 : a1, 1.0), gb(k == 0 ? b0 : b1, 1.0);
    const double x = ga(rng), y = gb(rng);
    out(i) = x / (x + y);
    if (component) component->push_back(k);
  }
  return out;
}

inline VectorXd gaussian_mixture_sample(Eigen::Index n, double w, double m0, double s0, double m1, double s1,
                                        std::uint64_t seed, std::vector<int>* component = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit;
  std::normal_distribution<double> normal;
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = unit(rng) < w ? 0 : 1;
    out(i) = k == 0 ? m0 + s0 * normal(rng) : m1 + s1 * normal(rng);
    if (component) component->push_back(k);
  }
  return out;
}

inline bool nondecreasing(const std::vector<double>& trace, double slack = 1e-9) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] < trace[i - 1] - slack * (1.0 + std::abs(trace[i - 1]))) return false;
  return true;
}

}  // namespace inn::testing
