// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#pragma once

// Two-component mixtures for turning per-sample scores into a clean / noisy split.
//
// Beta mixtures model scores in (0, 1) where larger means cleaner; Gaussian mixtures model per-sample
// losses where smaller means cleaner. Both are fit by EM started from a median split.

#include "inn/common.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace inn {

inline constexpr double kNormalizeClamp = 1e-4;

struct NormalizedScores {
  VectorXd values;
  bool degenerate = false;  // all inputs equal; values are then all 0.5
};

/// Min-max to [0, 1], then clamped to [1e-4, 1 - 1e-4]. Strictly monotone on non-clamped values.
NormalizedScores normalize_scores(const Eigen::Ref<const VectorXd>& scores);

enum class MixtureKind { Beta, Gaussian };

std::string to_string(MixtureKind kind);

struct MixtureOptions {
  int max_iters = 200;
  double tol = 1e-8;       // stop when |ΔLL| <= tol (1 + |LL|)
  bool swap_init = false;  // start with the component roles of the median split exchanged
};

struct MixtureFit {
  MixtureKind kind = MixtureKind::Beta;
  // Beta: (a, b) per component. Gaussian: (mean, standard deviation) per component.
  std::array<double, 2> first{};
  std::array<double, 2> second{};
  std::array<double, 2> weights{0.5, 0.5};
  std::vector<double> log_likelihood;  // one entry per E-step
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  int clean_component = 0;

  double mean(int component) const;
};

/// Beta EM. The M-step proposes weighted method-of-moments parameters (a, b clamped to [1e-2, 1e4],
/// variance floored at (1e-3 · range)^2) and keeps the previous parameters of a component whenever the
/// proposal lowers that component's expected complete-data log-likelihood, so the observed log-likelihood
/// never decreases. All-equal input yields a degenerate fit that labels every sample clean.
MixtureFit fit_beta_mixture(const Eigen::Ref<const VectorXd>& scores, const MixtureOptions& options = {});

/// Gaussian EM with closed-form M-step and variance floor max((1e-3 · range)^2, 1e-6). The clean component
/// has the smaller mean. `degenerate` is set when the floor binds at convergence or all inputs are equal.
MixtureFit fit_gaussian_mixture(const Eigen::Ref<const VectorXd>& losses, const MixtureOptions& options = {});

/// Per-sample posterior responsibility of each component, n x 2.
MatrixXd responsibilities(const MixtureFit& fit, const Eigen::Ref<const VectorXd>& values);

/// Posterior probability of the clean component.
VectorXd clean_posterior(const MixtureFit& fit, const Eigen::Ref<const VectorXd>& values);

struct SplitResult {
  std::vector<SampleId> labeled;
  std::vector<SampleId> unlabeled;
  std::vector<SampleId> ids;  // all ids, in input order
  VectorXd posterior;         // clean posterior per input
  double threshold = 0.5;
};

/// labeled = {i : posterior_i >= threshold}. Empty `ids` means ids 0..n-1.
SplitResult split(const MixtureFit& fit, const Eigen::Ref<const VectorXd>& values, double threshold = 0.5,
                  std::span<const SampleId> ids = {});

/// If the labeled set is exactly {i : score_i >= c} (or <= c when `higher_is_cleaner` is false) for some
/// cut c, returns the cut. Densities that cross twice produce no such cut.
std::optional<double> split_cut(const SplitResult& result, const Eigen::Ref<const VectorXd>& scores,
                                bool higher_is_cleaner = true);

std::string fit_json(const MixtureFit& fit);
void write_fit(const MixtureFit& fit, const std::filesystem::path& path);

// SplitResult CSV: `id,posterior,assignment` with assignment `labeled` or `unlabeled`.
void write_split(const SplitResult& result, const std::filesystem::path& path);
SplitResult read_split(const std::filesystem::path& path);

}  // namespace inn
