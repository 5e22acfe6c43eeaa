// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/oracle.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <functional>
#include <limits>

namespace inn {

double oracle_segment_value(int label, int neighbor_label) { return label == neighbor_label ? 1.0 : 0.5; }

OracleScore oracle_inn(const OracleSample& sample) {
  const int L = static_cast<int>(sample.neighbor_labels.size());
  require(L >= 1, "oracle_inn: need at least one neighbor");
  const int matches =
      static_cast<int>(std::count(sample.neighbor_labels.begin(), sample.neighbor_labels.end(), sample.label));
  return {L + matches, 2 * L};
}

SeparationCondition parse_condition(const std::string& name) {
  if (name == "majority" || name == "strict-unique-argmax" || name == "argmax")
    return SeparationCondition::StrictUniqueArgmax;
  if (name == "pure" || name == "all-neighbors-true-label" || name == "all-true")
    return SeparationCondition::AllNeighborsTrue;
  if (name == "count-bound" || name == "count") return SeparationCondition::CountBound;
  fail(ErrorKind::InvalidArgument, "unknown separation condition: " + name);
}

std::string to_string(SeparationCondition condition) {
  switch (condition) {
    case SeparationCondition::StrictUniqueArgmax: return "strict-unique-argmax";
    case SeparationCondition::AllNeighborsTrue: return "all-neighbors-true-label";
    case SeparationCondition::CountBound: return "count-bound";
  }
  return "?";
}

std::size_t count_configurations(int K, int L) {
  // C(L + K - 1, K - 1), saturating.
  long double total = 1.0L;
  for (int i = 1; i <= K - 1; ++i) total = total * (L + i) / i;
  if (total > static_cast<long double>(std::numeric_limits<std::size_t>::max() / 2))
    return std::numeric_limits<std::size_t>::max() / 2;
  return static_cast<std::size_t>(total + 0.5L);
}

namespace {

bool satisfies(const std::vector<int>& counts, int L, SeparationCondition condition) {
  const int K = static_cast<int>(counts.size());
  switch (condition) {
    case SeparationCondition::StrictUniqueArgmax:
      return std::all_of(counts.begin() + 1, counts.end(), [&](int c) { return counts[0] > c; });
    case SeparationCondition::AllNeighborsTrue:
      return counts[0] == L;
    case SeparationCondition::CountBound:
      return counts[0] * K >= L;
  }
  return false;
}

/// Visits every vector of K non-negative counts summing to L.
void for_each_composition(int K, int L, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> counts(static_cast<std::size_t>(K), 0);
  std::function<void(int, int)> rec = [&](int slot, int remaining) {
    if (slot == K - 1) {
      counts[slot] = remaining;
      visit(counts);
      return;
    }
    for (int c = remaining; c >= 0; --c) {
      counts[slot] = c;
      rec(slot + 1, remaining - c);
    }
  };
  rec(0, L);
}

}  // namespace

SeparationReport verify_separation(int K, int L, SeparationCondition condition, std::size_t budget,
                                   std::size_t max_violations) {
  require(K >= 2, "verify_separation: K must be at least 2");
  require(L >= 1, "verify_separation: L must be at least 1");
  const std::size_t total = count_configurations(K, L);
  if (total > budget)
    fail(ErrorKind::Size, "verify_separation: " + std::to_string(total) + " count vectors exceed budget " +
                              std::to_string(budget));

  SeparationReport report;
  report.K = K;
  report.L = L;
  report.condition = condition;
  report.claimed_gap = 1.0 / (2.0 * K);
  auto score_for = [L](int matches) { return OracleScore{L + matches, 2 * L}; };

  for_each_composition(K, L, [&](const std::vector<int>& counts) {
    if (!satisfies(counts, L, condition)) return;
    ++report.configurations;
    const auto clean = score_for(counts[0]);
    if (!report.has_clean || clean < report.min_clean) {
      report.min_clean = clean;
      report.min_clean_witness = {counts, 0, clean};
      report.has_clean = true;
    }
    for (int y = 1; y < K; ++y) {
      const auto noisy = score_for(counts[y]);
      if (!report.has_noisy || noisy > report.max_noisy) {
        report.max_noisy = noisy;
        report.max_noisy_witness = {counts, y, noisy};
        report.has_noisy = true;
      }
    }
  });

  if (report.has_clean && report.has_noisy) {
    report.gap = report.min_clean.value() - report.max_noisy.value();
    report.separated = report.min_clean > report.max_noisy;
    // Exact comparison gap >= 1/(2K): (min.num - max.num) / (2L) >= 1/(2K).
    report.claimed_gap_holds = (report.min_clean.numerator - report.max_noisy.numerator) * K >= L;
    if (!report.separated) {
      for_each_composition(K, L, [&](const std::vector<int>& counts) {
        if (report.violations.size() >= max_violations || !satisfies(counts, L, condition)) return;
        for (int y = 1; y < K && report.violations.size() < max_violations; ++y) {
          const auto noisy = score_for(counts[y]);
          if (noisy >= report.min_clean) report.violations.push_back({counts, y, noisy});
        }
      });
    }
  }
  return report;
}

namespace {

nlohmann::ordered_json witness_json(const OracleWitness& w) {
  return {{"true_label", 0}, {"label", w.label}, {"neighbor_label_counts", w.counts},
          {"score", w.score.value()}, {"score_fraction", std::to_string(w.score.numerator) + "/" +
                                                         std::to_string(w.score.denominator)}};
}

}  // namespace

std::string report_json(const SeparationReport& report) {
  nlohmann::ordered_json doc;
  doc["condition"] = to_string(report.condition);
  doc["K"] = report.K;
  doc["L"] = report.L;
  doc["configurations"] = report.configurations;
  doc["min_clean"] = report.has_clean ? nlohmann::ordered_json(report.min_clean.value()) : nullptr;
  doc["max_noisy"] = report.has_noisy ? nlohmann::ordered_json(report.max_noisy.value()) : nullptr;
  doc["gap"] = report.gap;
  doc["separated"] = report.separated;
  doc["claimed_gap"] = report.claimed_gap;
  doc["claimed_gap_holds"] = report.claimed_gap_holds;
  auto& witnesses = doc["witnesses"];
  witnesses = nlohmann::ordered_json::object();
  if (report.has_clean) witnesses["min_clean"] = witness_json(report.min_clean_witness);
  if (report.has_noisy) witnesses["max_noisy"] = witness_json(report.max_noisy_witness);
  auto& violations = witnesses["violations"];
  violations = nlohmann::ordered_json::array();
  for (const auto& v : report.violations) violations.push_back(witness_json(v));
  return doc.dump(2);
}

void write_report(const SeparationReport& report, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << report_json(report) << '\n';
}

SegmentInterpolant::SegmentInterpolant(Eigen::RowVectorXd x, Eigen::RowVectorXd x_tilde, Eigen::RowVectorXd p_at_x,
                                       Eigen::RowVectorXd p_at_x_tilde)
    : origin(std::move(x_tilde)),
      direction(std::move(x) - origin),
      p_start(std::move(p_at_x)),
      p_end(std::move(p_at_x_tilde)) {
  require(p_start.size() == p_end.size(), "SegmentInterpolant: endpoint probability sizes differ");
}

MatrixXd predict(const SegmentInterpolant& model, const MatrixXd& inputs) {
  require(inputs.cols() == model.origin.size(), "SegmentInterpolant: input dimension mismatch");
  const double length2 = model.direction.squaredNorm();
  MatrixXd out(inputs.rows(), model.p_end.size());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    // A zero-length segment has no direction; evaluate at its midpoint weight.
    const double t =
        length2 > 0.0 ? (inputs.row(r) - model.origin).dot(model.direction) / length2 : 0.5;
    out.row(r) = model.p_end + t * (model.p_start - model.p_end);
  }
  return out;
}

SegmentInterpolant mixup_interpolant(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& x_tilde, int label,
                                     int neighbor_label, int num_classes) {
  require(label >= 0 && label < num_classes && neighbor_label >= 0 && neighbor_label < num_classes,
          "mixup_interpolant: label out of range");
  Eigen::RowVectorXd at_x = Eigen::RowVectorXd::Zero(num_classes);
  Eigen::RowVectorXd at_tilde = Eigen::RowVectorXd::Zero(num_classes);
  at_x(label) = 1.0;
  at_tilde(neighbor_label) = 1.0;
  return {x, x_tilde, at_x, at_tilde};
}

VectorXd mixup_interpolant_scores(const Dataset& ds, const std::vector<NeighborSet>& sets,
                                  const ScorerConfig& config) {
  detail::check_neighbor_sets(ds, sets, config.L);
  std::vector<std::vector<SegmentInterpolant>> models(static_cast<std::size_t>(ds.size()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (int l = 0; l < config.L; ++l) {
      const auto j = sets[i].neighbors[l];
      models[i].push_back(
          mixup_interpolant(ds.features.row(i), ds.features.row(j), ds.labels[i], ds.labels[j], ds.num_classes));
    }
  }
  auto provider = [&](Eigen::Index i, int l) -> const SegmentInterpolant& { return models[i][l]; };
  return inn_scores_per_segment(provider, ds, sets, config);
}

}  // namespace inn
