// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#pragma once

// Neighbor-path scores.
//
// For a sample (x, y) with feature-space neighbors x̃_1..x̃_L the INN score is
//
//   (1/L) Σ_l ∫_0^1 f_y(αx + (1-α)x̃_l) dα,
//
// each integral taken with the H-trapezoid rule on the nodes x_{l,h} = ((H-h)/H)x + (h/H)x̃_l, h = 0..H.
// Endpoints are included, so f_y(x) itself contributes weight 1/(2H). The midpoint variant replaces each
// integral by f_y((x + x̃_l)/2).

#include "inn/common.hpp"
#include "inn/data.hpp"
#include "inn/neighbors.hpp"
#include "inn/parallel.hpp"

#include <concepts>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace inn {

/// Anything that maps a batch of inputs (one per row) to row-stochastic class probabilities.
template <typename M>
concept ProbabilityModel = requires(const M& model, const MatrixXd& inputs) {
  { predict(model, inputs) } -> std::convertible_to<MatrixXd>;
};

enum class ScoreMode { Integral, Midpoint };

ScoreMode parse_score_mode(const std::string& name);
std::string to_string(ScoreMode mode);

struct ScorerConfig {
  int H = 10;
  int L = 10;
  ScoreMode mode = ScoreMode::Integral;
  int threads = 1;

  void validate() const;
};

namespace score_kind {
inline constexpr const char* kInn = "inn";
inline constexpr const char* kMidpoint = "midpoint";
inline constexpr const char* kLossCe = "loss_ce";
inline constexpr const char* kLossCene = "loss_cene";
}  // namespace score_kind

/// True for kinds where a larger value means "more likely clean"; loss kinds are the reverse.
bool higher_is_cleaner(const std::string& kind);

/// Scores of every sample at one checkpoint epoch, one column per score kind.
struct ScoreTable {
  int epoch = 0;
  std::vector<SampleId> ids;
  std::map<std::string, VectorXd> columns;

  const VectorXd& at(const std::string& kind) const;
  bool has(const std::string& kind) const { return columns.count(kind) > 0; }
};

/// Trapezoid nodes ((H-h)/H)x + (h/H)x̃ for h = 0..H, one per row.
MatrixXd segment_nodes(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                       const Eigen::Ref<const Eigen::RowVectorXd>& x_tilde, int H);

/// (1/(2H)) Σ_{h=1..H} (v_{h-1} + v_h) over H+1 equally spaced integrand values.
double trapezoid(const Eigen::Ref<const VectorXd>& values);

template <ProbabilityModel M>
double segment_integral(const M& model, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                        const Eigen::Ref<const Eigen::RowVectorXd>& x_tilde, int y, int H) {
  require(H >= 1, "segment_integral: H must be at least 1");
  require(x.size() == x_tilde.size(), "segment_integral: endpoint dimensions differ");
  const MatrixXd probs = predict(model, segment_nodes(x, x_tilde, H));
  require(y >= 0 && y < probs.cols(), "segment_integral: label out of range");
  return trapezoid(probs.col(y));
}

namespace detail {

void check_neighbor_sets(const Dataset& ds, const std::vector<NeighborSet>& sets, int L);

}  // namespace detail

/// Scores from an arbitrary per-segment model: provider(i, l) returns the model used on the segment from
/// sample i to its l-th neighbor. Used to check the scorer against analytic interpolants.
template <typename Provider>
VectorXd inn_scores_per_segment(Provider&& provider, const Dataset& ds, const std::vector<NeighborSet>& sets,
                                const ScorerConfig& config) {
  config.validate();
  detail::check_neighbor_sets(ds, sets, config.L);
  VectorXd scores(ds.size());
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const int y = ds.labels[i];
    double total = 0.0;
    for (int l = 0; l < config.L; ++l) {
      const auto& model = provider(i, l);
      const auto j = sets[i].neighbors[l];
      if (config.mode == ScoreMode::Integral) {
        total += segment_integral(model, ds.features.row(i), ds.features.row(j), y, config.H);
      } else {
        const MatrixXd mid = 0.5 * (ds.features.row(i) + ds.features.row(j));
        total += predict(model, mid)(0, y);
      }
    }
    scores(i) = total / config.L;
  }
  return scores;
}

/// Scores for every sample under one model. All L(H+1) probe points of a sample (L for midpoint mode)
/// go through the model as one batch, so scoring costs n·L·(H+1) forward evaluations.
template <ProbabilityModel M>
VectorXd inn_scores(const M& model, const Dataset& ds, const std::vector<NeighborSet>& sets,
                    const ScorerConfig& config) {
  config.validate();
  detail::check_neighbor_sets(ds, sets, config.L);
  const int L = config.L;
  const int H = config.H;
  const bool midpoint = config.mode == ScoreMode::Midpoint;
  const Eigen::Index per_segment = midpoint ? 1 : H + 1;
  VectorXd scores(ds.size());
  parallel_for(static_cast<std::size_t>(ds.size()), config.threads, [&](std::size_t s) {
    const auto i = static_cast<Eigen::Index>(s);
    MatrixXd probes(L * per_segment, ds.dim());
    for (int l = 0; l < L; ++l) {
      const auto j = sets[i].neighbors[l];
      if (midpoint)
        probes.row(l) = 0.5 * (ds.features.row(i) + ds.features.row(j));
      else
        probes.middleRows(l * per_segment, per_segment) = segment_nodes(ds.features.row(i), ds.features.row(j), H);
    }
    const MatrixXd probs = predict(model, probes);
    const int y = ds.labels[i];
    double total = 0.0;
    for (int l = 0; l < L; ++l) {
      if (midpoint)
        total += probs(l, y);
      else
        total += trapezoid(probs.col(y).segment(l * per_segment, per_segment));
    }
    scores(i) = total / L;
  });
  return scores;
}

/// Group means of f_y(x) and f_y(x^m), x^m = (x + x̃)/2 with x̃ the first neighbor, over the clean
/// and noisy sets. A group that is empty leaves its two statistics unset.
struct ConsistencyStats {
  int epoch = 0;
  std::optional<double> e_cor;
  std::optional<double> e_inc;
  std::optional<double> em_cor;
  std::optional<double> em_inc;
  Eigen::Index clean_count = 0;
  Eigen::Index noisy_count = 0;
};

template <ProbabilityModel M>
ConsistencyStats consistency_stats(const M& model, const Dataset& ds, const std::vector<NeighborSet>& sets) {
  require(ds.has_truth(), "consistency_stats: true labels required");
  detail::check_neighbor_sets(ds, sets, 1);
  MatrixXd mids(ds.size(), ds.dim());
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    mids.row(i) = 0.5 * (ds.features.row(i) + ds.features.row(sets[i].neighbors.front()));
  const MatrixXd at_x = predict(model, ds.features);
  const MatrixXd at_mid = predict(model, mids);
  const auto clean = ds.clean_mask();

  double sums[4] = {0, 0, 0, 0};
  ConsistencyStats stats;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const int y = ds.labels[i];
    const int g = clean[i] ? 0 : 1;
    sums[g] += at_x(i, y);
    sums[2 + g] += at_mid(i, y);
    (clean[i] ? stats.clean_count : stats.noisy_count) += 1;
  }
  if (stats.clean_count > 0) {
    stats.e_cor = sums[0] / stats.clean_count;
    stats.em_cor = sums[2] / stats.clean_count;
  }
  if (stats.noisy_count > 0) {
    stats.e_inc = sums[1] / stats.noisy_count;
    stats.em_inc = sums[3] / stats.noisy_count;
  }
  return stats;
}

// ScoreTable CSV, long format: `id,epoch,score_kind,value`, rows ordered by epoch, kind, then sample.
void write_score_tables(const std::vector<ScoreTable>& tables, const std::filesystem::path& path);
std::vector<ScoreTable> read_score_tables(const std::filesystem::path& path);

/// JSON summary: scorer config echo plus per-epoch, per-kind mean/min/max.
void write_score_summary(const std::vector<ScoreTable>& tables, const ScorerConfig& config,
                         const std::filesystem::path& path);

}  // namespace inn
