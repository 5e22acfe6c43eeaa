// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#pragma once

// End-to-end run: feature model h, neighbor index, scored model f, small-loss baselines, mixture split, report.

#include "inn/data.hpp"
#include "inn/eval.hpp"
#include "inn/mixture.hpp"
#include "inn/neighbors.hpp"
#include "inn/scorer.hpp"
#include "inn/tinynet.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace inn {

inline constexpr const char* kVersion = "0.1.0";

/// Flat run configuration. Every field has a key in the `key = value` config file and a matching CLI flag.
struct RunConfig {
  std::uint64_t seed = 0;

  // data: a CSV / raw sidecar path, or a synthetic generator when empty
  std::filesystem::path data;
  SynthKind synth_kind = SynthKind::Blobs;
  Eigen::Index n = 2000;
  int num_classes = 4;
  Eigen::Index dim = 2;
  double spread = 0.5;

  // noise: none | symmetric | asymmetric | chain | imbalanced
  std::string noise = "symmetric";
  double noise_rate = 0.3;
  int class_a = 0;
  int class_b = 1;
  double keep_frac = 0.1;

  std::vector<int> hidden{64, 64};
  LossKind h_loss = LossKind::CE;
  int h_epochs = 300;
  bool share_epochs = false;
  LossKind f_loss = LossKind::MixUp;
  int epochs = 300;
  int batch_size = 128;
  double lr = 0.02;
  double momentum = 0.9;
  double mixup_alpha = 1.0;
  std::vector<int> checkpoints{50, 100, 150, 200, 250, 300};
  double epoch_scale = 1.0;

  ScorerConfig scorer;
  bool baselines = true;
  bool normalize = true;
  std::vector<int> l_sweep;
  int bins = 20;

  int threads = 1;
  std::filesystem::path out;
  bool save_models = true;

  /// Sets one field from its textual key; throws invalid-argument on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  /// Canonical `key = value` lines (threads and out excluded, they never change results).
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string hash() const;  // 16 hex digits, FNV-1a over the canonical entries

  int scaled(int epoch) const;  // max(1, round(epoch · epoch_scale))
  int f_epochs() const { return scaled(epochs); }
  int h_epochs_effective() const { return share_epochs ? f_epochs() : scaled(h_epochs); }
  std::vector<int> checkpoint_epochs() const;  // scaled, deduplicated, ascending
};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Loads the dataset described by the config (file or synthetic) and applies its noise spec.
Dataset load_dataset(const RunConfig& config);

/// Lap timer; phases partition the run so their sum equals the total.
class PhaseTimer {
 public:
  PhaseTimer();
  void lap(const std::string& phase);  // closes the current phase under this name
  const std::vector<std::pair<std::string, double>>& phases() const { return phases_; }
  double total() const;

 private:
  std::vector<std::pair<std::string, double>> phases_;
  std::int64_t last_ns_;
  std::int64_t start_ns_;
};

std::string timing_json(const PhaseTimer& timer);

struct LSweepPoint {
  int L = 0;
  double auc = 0.0;
};

struct PipelineResult {
  Dataset dataset;
  std::vector<NeighborSet> neighbors;
  std::vector<ScoreTable> tables;
  std::vector<ConsistencyStats> consistency_f;
  std::vector<ConsistencyStats> consistency_ce;
  std::optional<EvalReport> report;  // needs true labels
  MixtureFit inn_fit;
  SplitResult inn_split;
  std::optional<MixtureFit> loss_fit;
  std::optional<SplitResult> loss_split;
  std::vector<LSweepPoint> l_sweep;
  std::vector<std::string> warnings;
  PhaseTimer timer;
};

/// Runs every stage. When `config.out` is non-empty all artifacts and a manifest are written there.
/// Stage failures are rethrown with the stage name prefixed to the message.
PipelineResult run_pipeline(const RunConfig& config);

}  // namespace inn
