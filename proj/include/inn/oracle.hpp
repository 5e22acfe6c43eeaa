// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#pragma once

// Analytic model of a network that fits the MixUp objective exactly.
//
// Such a network is linear between any two training inputs, so along the segment from x (label y) to a
// neighbor x̃ (label ỹ) it predicts α e_y + (1-α) e_ỹ. Integrating f_y gives 1 when y = ỹ and 1/2
// otherwise, and the INN score of a sample with m matching neighbors out of L is 1/2 + m/(2L).

#include "inn/common.hpp"
#include "inn/data.hpp"
#include "inn/neighbors.hpp"
#include "inn/scorer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace inn {

/// Exact rational score numerator / denominator.
struct OracleScore {
  int numerator = 0;
  int denominator = 1;

  double value() const { return static_cast<double>(numerator) / denominator; }
  auto operator<=>(const OracleScore& other) const {
    return static_cast<long long>(numerator) * other.denominator <=>
           static_cast<long long>(other.numerator) * denominator;
  }
  bool operator==(const OracleScore& other) const { return (*this <=> other) == 0; }
};

struct OracleSample {
  int label = 0;       // observed y
  int true_label = 0;  // y*
  std::vector<int> neighbor_labels;

  bool clean() const { return label == true_label; }
};

/// The per-segment integral: 1 if the labels agree, 1/2 otherwise.
double oracle_segment_value(int label, int neighbor_label);

/// (1/L) Σ_l oracle_segment_value, as the exact fraction (L + m) / (2L).
OracleScore oracle_inn(const OracleSample& sample);

/// Neighbor-label conditions under which separation of clean and noisy oracle scores is checked.
enum class SeparationCondition {
  StrictUniqueArgmax,  // the true label strictly out-counts every other label among the neighbors
  AllNeighborsTrue,    // every neighbor carries the true label
  CountBound,          // the true label appears at least L/K times
};

SeparationCondition parse_condition(const std::string& name);
std::string to_string(SeparationCondition condition);

/// One enumerated configuration: neighbor label counts per class, with the true label fixed to class 0.
struct OracleWitness {
  std::vector<int> counts;
  int label = 0;
  OracleScore score;
};

struct SeparationReport {
  int K = 0;
  int L = 0;
  SeparationCondition condition = SeparationCondition::StrictUniqueArgmax;
  std::size_t configurations = 0;  // count vectors satisfying the condition
  bool has_clean = false;
  bool has_noisy = false;
  OracleScore min_clean;
  OracleScore max_noisy;
  double gap = 0.0;               // min_clean - max_noisy
  bool separated = false;         // min_clean > max_noisy
  double claimed_gap = 0.0;       // 1/(2K)
  bool claimed_gap_holds = false; // gap >= 1/(2K)
  OracleWitness min_clean_witness;
  OracleWitness max_noisy_witness;
  std::vector<OracleWitness> violations;  // noisy configurations scoring >= min_clean, capped
};

/// Count vectors over K classes summing to L that the enumeration would visit.
std::size_t count_configurations(int K, int L);

/// Exhaustive check over all neighbor-label count vectors. Symmetry lets the true label be fixed to 0;
/// a clean sample has y = 0, a noisy one y ∈ {1..K-1}. Throws a size error above `budget` vectors.
SeparationReport verify_separation(int K, int L, SeparationCondition condition, std::size_t budget = 5'000'000,
                                   std::size_t max_violations = 16);

void write_report(const SeparationReport& report, const std::filesystem::path& path);
std::string report_json(const SeparationReport& report);

/// Probability model that is affine along one segment: at x̃ + t(x - x̃) it returns
/// p_end + t (p_start - p_end), with t the projection of the query onto the segment.
struct SegmentInterpolant {
  Eigen::RowVectorXd origin;     // x̃
  Eigen::RowVectorXd direction;  // x - x̃
  Eigen::RowVectorXd p_start;    // prediction at x
  Eigen::RowVectorXd p_end;      // prediction at x̃

  SegmentInterpolant(Eigen::RowVectorXd x, Eigen::RowVectorXd x_tilde, Eigen::RowVectorXd p_at_x,
                     Eigen::RowVectorXd p_at_x_tilde);
};

MatrixXd predict(const SegmentInterpolant& model, const MatrixXd& inputs);

/// The perfect-MixUp interpolant on one segment: e_y at x, e_ỹ at x̃.
SegmentInterpolant mixup_interpolant(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& x_tilde, int label,
                                     int neighbor_label, int num_classes);

/// INN scores computed through the scorer with one mixup_interpolant per (sample, neighbor) segment.
VectorXd mixup_interpolant_scores(const Dataset& ds, const std::vector<NeighborSet>& sets,
                                  const ScorerConfig& config);

}  // namespace inn
