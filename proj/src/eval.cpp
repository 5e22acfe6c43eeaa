// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/eval.hpp"

#include "inn/mixture.hpp"
#include "io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <set>

namespace inn {

double auc(const Eigen::Ref<const VectorXd>& scores, const std::vector<bool>& clean_mask) {
  require(static_cast<Eigen::Index>(clean_mask.size()) == scores.size(), "auc: mask size mismatch");
  require(scores.allFinite(), "auc: non-finite score");
  const auto clean = static_cast<std::int64_t>(std::count(clean_mask.begin(), clean_mask.end(), true));
  const auto noisy = static_cast<std::int64_t>(clean_mask.size()) - clean;
  if (clean == 0 || noisy == 0) fail(ErrorKind::UndefinedAuc, "auc: needs both clean and noisy samples");

  std::vector<Eigen::Index> order(clean_mask.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores(a) < scores(b); });

  // twice the Mann-Whitney U statistic, accumulated over groups of tied scores
  std::int64_t twice_u = 0;
  std::int64_t noisy_below = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t stop = start;
    std::int64_t group_clean = 0, group_noisy = 0;
    while (stop < order.size() && scores(order[stop]) == scores(order[start])) {
      (clean_mask[order[stop]] ? group_clean : group_noisy) += 1;
      ++stop;
    }
    twice_u += group_clean * (2 * noisy_below + group_noisy);
    noisy_below += group_noisy;
    start = stop;
  }
  return static_cast<double>(twice_u) / static_cast<double>(2 * clean * noisy);
}

VectorXd cleanliness(const ScoreTable& table, const std::string& kind) {
  const VectorXd& values = table.at(kind);
  return higher_is_cleaner(kind) ? values : VectorXd(-values);
}

std::vector<HistogramRow> grouped_histogram(const Eigen::Ref<const VectorXd>& scores, const Dataset& ds, int bins) {
  require(bins >= 1, "grouped_histogram: bins must be positive");
  require(ds.has_truth(), "grouped_histogram: true labels required");
  require(scores.size() == ds.size(), "grouped_histogram: score count does not match dataset");
  const VectorXd normalized = normalize_scores(scores).values;

  std::map<std::pair<int, int>, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    auto& counts = groups[{(*ds.true_labels)[i], ds.labels[i]}];
    counts.resize(static_cast<std::size_t>(bins), 0);
    const auto bin = std::min<Eigen::Index>(bins - 1, static_cast<Eigen::Index>(normalized(i) * bins));
    counts[static_cast<std::size_t>(bin)] += 1;
  }
  std::vector<HistogramRow> rows;
  for (const auto& [group, counts] : groups) {
    for (int b = 0; b < bins; ++b) {
      rows.push_back({group.first, group.second, static_cast<double>(b) / bins, static_cast<double>(b + 1) / bins,
                      counts[static_cast<std::size_t>(b)]});
    }
  }
  return rows;
}

void write_histogram(const std::vector<HistogramRow>& rows, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "group,bin_lo,bin_hi,count\n";
  for (const auto& row : rows) {
    out << row.true_label << ':' << row.label << ',' << detail::format_double(row.bin_lo) << ','
        << detail::format_double(row.bin_hi) << ',' << row.count << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

double EvalReport::auc_at(int epoch, const std::string& kind) const {
  for (const auto& row : rows)
    if (row.epoch == epoch && row.kind == kind) return row.auc;
  fail(ErrorKind::InvalidArgument, "no AUC for kind '" + kind + "' at epoch " + std::to_string(epoch));
}

EvalReport sweep_report(const std::vector<ScoreTable>& tables, const std::vector<bool>& clean_mask) {
  require(tables.size() >= 2, "sweep_report: need at least two checkpoints");
  std::vector<const ScoreTable*> ordered;
  for (const auto& t : tables) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(), [](auto a, auto b) { return a->epoch < b->epoch; });

  std::set<std::string> kinds;
  for (const auto* t : ordered)
    for (const auto& [kind, values] : t->columns) kinds.insert(kind);

  EvalReport report;
  for (const auto& kind : kinds) {
    Stability s;
    bool first = true;
    for (const auto* t : ordered) {
      if (!t->has(kind)) {
        report.warnings.push_back("kind '" + kind + "' missing at epoch " + std::to_string(t->epoch));
        continue;
      }
      const double a = auc(cleanliness(*t, kind), clean_mask);
      report.rows.push_back({t->epoch, kind, a});
      if (first || a > s.max) {
        s.max = a;
        s.best_epoch = t->epoch;
      }
      s.min = first ? a : std::min(s.min, a);
      s.final = a;
      s.final_epoch = t->epoch;
      first = false;
    }
    if (first) continue;
    s.range = s.max - s.min;
    report.stability[kind] = s;
  }
  if (auto inn = report.stability.find(score_kind::kInn); inn != report.stability.end()) {
    for (const auto& [kind, s] : report.stability) {
      if (higher_is_cleaner(kind)) continue;
      if (s.final_epoch != inn->second.final_epoch) {
        report.warnings.push_back("kind '" + kind + "' has a different final epoch than inn");
        continue;
      }
      report.inn_beats_at_final[kind] = inn->second.final > s.final;
    }
  }
  return report;
}

void write_auc_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "epoch,kind,auc\n";
  for (const auto& row : report.rows) out << row.epoch << ',' << row.kind << ',' << detail::format_double(row.auc) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json doc;
  auto& rows = doc["auc"];
  rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) rows.push_back({{"epoch", row.epoch}, {"kind", row.kind}, {"auc", row.auc}});
  auto& stability = doc["stability"];
  stability = nlohmann::ordered_json::object();
  for (const auto& [kind, s] : report.stability) {
    stability[kind] = {{"max", s.max},           {"min", s.min},         {"range", s.range},
                       {"final", s.final},       {"best_epoch", s.best_epoch}, {"final_epoch", s.final_epoch}};
  }
  doc["inn_beats_baseline_at_final"] = report.inn_beats_at_final;
  doc["warnings"] = report.warnings;
  return doc.dump(2);
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << report_json(report) << '\n';
}

}  // namespace inn
