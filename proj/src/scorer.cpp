// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/scorer.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <algorithm>

namespace inn {

ScoreMode parse_score_mode(const std::string& name) {
  if (name == "integral") return ScoreMode::Integral;
  if (name == "midpoint") return ScoreMode::Midpoint;
  fail(ErrorKind::InvalidArgument, "unknown score mode: " + name);
}

std::string to_string(ScoreMode mode) { return mode == ScoreMode::Integral ? "integral" : "midpoint"; }

void ScorerConfig::validate() const {
  require(H >= 1, "scorer: H must be at least 1");
  require(L >= 1, "scorer: L must be at least 1");
}

bool higher_is_cleaner(const std::string& kind) { return kind.rfind("loss", 0) != 0; }

const VectorXd& ScoreTable::at(const std::string& kind) const {
  auto it = columns.find(kind);
  require(it != columns.end(), "score table (epoch " + std::to_string(epoch) + ") has no kind '" + kind + "'");
  return it->second;
}

MatrixXd segment_nodes(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                       const Eigen::Ref<const Eigen::RowVectorXd>& x_tilde, int H) {
  require(H >= 1, "segment_nodes: H must be at least 1");
  MatrixXd nodes(H + 1, x.size());
  for (int h = 0; h <= H; ++h) {
    const double toward = static_cast<double>(h) / H;
    const double stay = static_cast<double>(H - h) / H;
    nodes.row(h) = stay * x + toward * x_tilde;
  }
  return nodes;
}

double trapezoid(const Eigen::Ref<const VectorXd>& values) {
  const auto H = values.size() - 1;
  require(H >= 1, "trapezoid: need at least two nodes");
  double total = 0.0;
  for (Eigen::Index h = 1; h <= H; ++h) total += (values(h - 1) + values(h)) / (2.0 * static_cast<double>(H));
  return total;
}

namespace detail {

void check_neighbor_sets(const Dataset& ds, const std::vector<NeighborSet>& sets, int L) {
  require(static_cast<Eigen::Index>(sets.size()) == ds.size(), "scorer: need one neighbor set per sample");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    require(static_cast<int>(sets[i].neighbors.size()) >= L,
            "scorer: neighbor set of sample " + std::to_string(i) + " has fewer than L entries");
    for (int l = 0; l < L; ++l) {
      const auto j = sets[i].neighbors[l];
      require(j >= 0 && j < ds.size(), "scorer: neighbor row out of range");
    }
  }
}

}  // namespace detail

void write_score_tables(const std::vector<ScoreTable>& tables, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "id,epoch,score_kind,value\n";
  for (const auto& table : tables) {
    for (const auto& [kind, values] : table.columns) {
      require(values.size() == static_cast<Eigen::Index>(table.ids.size()), "score table column size mismatch");
      for (Eigen::Index i = 0; i < values.size(); ++i)
        out << table.ids[i] << ',' << table.epoch << ',' << kind << ',' << detail::format_double(values(i)) << '\n';
    }
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::vector<ScoreTable> read_score_tables(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const std::string ctx = path.string();
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != "id,epoch,score_kind,value")
    fail(ErrorKind::Io, ctx + ": expected header id,epoch,score_kind,value");

  std::map<int, std::map<std::string, std::vector<std::pair<SampleId, double>>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim_cr(line);
    if (text.empty()) continue;
    const std::string where = ctx + ":" + std::to_string(line_no);
    const auto cells = detail::split(text);
    if (cells.size() != 4) fail(ErrorKind::Io, where + ": wrong column count");
    rows[detail::parse_int<int>(cells[1], where)][std::string(cells[2])].emplace_back(
        detail::parse_int<SampleId>(cells[0], where), detail::parse_double(cells[3], where));
  }

  std::vector<ScoreTable> tables;
  for (auto& [epoch, kinds] : rows) {
    ScoreTable table;
    table.epoch = epoch;
    for (auto& [kind, entries] : kinds) {
      std::vector<SampleId> ids;
      VectorXd values(static_cast<Eigen::Index>(entries.size()));
      for (std::size_t i = 0; i < entries.size(); ++i) {
        ids.push_back(entries[i].first);
        values(static_cast<Eigen::Index>(i)) = entries[i].second;
      }
      if (table.ids.empty())
        table.ids = ids;
      else if (table.ids != ids)
        fail(ErrorKind::Io, ctx + ": score kinds of epoch " + std::to_string(epoch) + " disagree on sample ids");
      table.columns[kind] = std::move(values);
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

void write_score_summary(const std::vector<ScoreTable>& tables, const ScorerConfig& config,
                         const std::filesystem::path& path) {
  nlohmann::ordered_json doc;
  doc["config"] = {{"H", config.H}, {"L", config.L}, {"mode", to_string(config.mode)}};
  auto& epochs = doc["epochs"];
  epochs = nlohmann::ordered_json::array();
  for (const auto& table : tables) {
    nlohmann::ordered_json entry;
    entry["epoch"] = table.epoch;
    entry["n"] = table.ids.size();
    for (const auto& [kind, values] : table.columns) {
      entry["kinds"][kind] = {{"mean", values.mean()}, {"min", values.minCoeff()}, {"max", values.maxCoeff()}};
    }
    epochs.push_back(std::move(entry));
  }
  auto out = detail::open_out(path);
  out << doc.dump(2) << '\n';
}

}  // namespace inn
