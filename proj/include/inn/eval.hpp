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
#include "inn/data.hpp"
#include "inn/scorer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace inn {

/// Clean-vs-noisy AUC with larger score = predicted clean:
/// (#{(c, m) : s_c > s_m} + ½ #{(c, m) : s_c = s_m}) / (|C| |N|), computed exactly in integer arithmetic.
/// Throws undefined-AUC when either class is empty.
double auc(const Eigen::Ref<const VectorXd>& scores, const std::vector<bool>& clean_mask);

/// Score oriented so that larger means cleaner (losses negated).
VectorXd cleanliness(const ScoreTable& table, const std::string& kind);

struct HistogramRow {
  int true_label = 0;
  int label = 0;
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  Eigen::Index count = 0;
};

/// Equal-width histograms on [0, 1] of min-max normalized scores, one per (true label, observed label)
/// group present in the data. The last bin is closed on the right.
std::vector<HistogramRow> grouped_histogram(const Eigen::Ref<const VectorXd>& scores, const Dataset& ds, int bins);

// CSV: `group,bin_lo,bin_hi,count` with group written as "y*:y".
void write_histogram(const std::vector<HistogramRow>& rows, const std::filesystem::path& path);

struct AucRow {
  int epoch = 0;
  std::string kind;
  double auc = 0.0;
};

struct Stability {
  double max = 0.0;
  double min = 0.0;
  double range = 0.0;
  double final = 0.0;
  int best_epoch = 0;
  int final_epoch = 0;
};

struct EvalReport {
  std::vector<AucRow> rows;
  std::map<std::string, Stability> stability;
  std::map<std::string, bool> inn_beats_at_final;  // per baseline kind
  std::vector<std::string> warnings;

  double auc_at(int epoch, const std::string& kind) const;
};

/// AUC of every score kind at every checkpoint plus per-kind stability. Needs two or more checkpoints.
/// Kinds missing from some epochs are reported with a warning rather than an error.
EvalReport sweep_report(const std::vector<ScoreTable>& tables, const std::vector<bool>& clean_mask);

// CSV: `epoch,kind,auc`.
void write_auc_csv(const EvalReport& report, const std::filesystem::path& path);
std::string report_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace inn
