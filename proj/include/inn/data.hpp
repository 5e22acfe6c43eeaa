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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace inn {

/// Labeled training data. `labels` are the observed (possibly noisy) labels; `true_labels`, when present,
/// define the clean set (labels == true_labels) and the noisy set (the complement).
struct Dataset {
  MatrixXd features;
  std::vector<int> labels;
  std::optional<std::vector<int>> true_labels;
  int num_classes = 0;
  std::vector<SampleId> ids;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  bool has_truth() const { return true_labels.has_value(); }

  /// Per-sample clean flag; requires true labels.
  std::vector<bool> clean_mask() const;
  double noisy_fraction() const;

  /// Throws invalid-argument when shapes or label ranges are inconsistent.
  void validate() const;
};

Dataset subset(const Dataset& ds, std::span<const Eigen::Index> rows);

enum class SynthKind { Blobs, TwoMoons };

SynthKind parse_synth_kind(const std::string& name);

/// Blobs: class k is an isotropic Gaussian (std `spread`, all d dims) centered at
/// (cos 2πk/K, sin 2πk/K, 0, ..., 0). Two moons: class 0 on (cos t, sin t), class 1 on (1 - cos t, 0.5 - sin t),
/// t ~ U[0, π], plus Gaussian jitter `spread` on every coordinate; K must be 2. Sample i has true label i mod K.
Dataset synth(SynthKind kind, Eigen::Index n, int num_classes, Eigen::Index dim, double spread, std::uint64_t seed);

enum class NoiseKind { Symmetric, AsymmetricMap, AsymmetricChain, ImbalancedFlip };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Symmetric;
  double rate = 0.0;
  std::map<int, int> mapping;  // AsymmetricMap only
  std::uint64_t seed = 0;
  // ImbalancedFlip only; `rate` is the flip probability.
  int class_a = 0;
  int class_b = 1;
  double keep_frac = 0.1;
};

/// truck→automobile, bird→airplane, deer→horse, cat↔dog in CIFAR-10 class order.
std::map<int, int> cifar10_asymmetric_map();

// All corruption routines rewrite only `labels`. Each sample draws from its own PRNG stream keyed by
// (seed, id), so the outcome for a sample does not depend on which other samples are present.

/// With probability r the observed label is replaced by a draw uniform over all K classes (the draw may
/// coincide with the original label, so the realized flip rate is r(K-1)/K).
Dataset corrupt_symmetric(const Dataset& ds, double rate, std::uint64_t seed);

Dataset corrupt_asymmetric(const Dataset& ds, const NoiseSpec& spec);

/// Two-class imbalanced construction: every `class_a` sample (true 0) plus a `keep_frac` share of `class_b`
/// (true 1), then each observed label flipped with probability `flip_p`. Membership is taken from true
/// labels when present.
Dataset build_imbalanced(const Dataset& ds, int class_a, int class_b, double keep_frac, double flip_p,
                         std::uint64_t seed);

Dataset apply_noise(const Dataset& ds, const NoiseSpec& spec);

// CSV: header `id,f0..f{d-1},label[,true_label]`.
void write_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset read_csv(const std::filesystem::path& path, int num_classes = 0);

// Raw tensor: `<stem>.f32` (little-endian float32, row-major n×d), `<stem>.labels.i32`, optional
// `<stem>.true_labels.i32` (little-endian int32) and a JSON sidecar `<stem>.json` with
// {n, d, K, features_file, labels_file, true_labels_file}. Features round-trip at float32 precision.
void write_raw(const Dataset& ds, const std::filesystem::path& sidecar);
Dataset read_raw(const std::filesystem::path& sidecar);

}  // namespace inn
