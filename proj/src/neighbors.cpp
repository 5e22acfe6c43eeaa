// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/neighbors.hpp"

#include "inn/parallel.hpp"
#include "io_util.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace inn {

NeighborIndex::NeighborIndex(MatrixXd features) : features_(std::move(features)) {
  require(features_.rows() >= 2, "build_index: need at least two samples");
  require(features_.cols() >= 1, "build_index: features must have at least one column");
  require(features_.allFinite(), "build_index: features contain non-finite values");
}

VectorXd NeighborIndex::squared_distances(Eigen::Index i) const {
  return (features_.rowwise() - features_.row(i)).rowwise().squaredNorm();
}

double NeighborIndex::distance(Eigen::Index a, Eigen::Index b) const {
  return (features_.row(a) - features_.row(b)).norm();
}

NeighborIndex build_index(MatrixXd features) { return NeighborIndex(std::move(features)); }

NeighborSet query(const NeighborIndex& index, Eigen::Index i, int L, std::span<const int> labels) {
  require(i >= 0 && i < index.size(), "query: row out of range");
  require(L >= 1 && L < index.size(), "query: L must satisfy 1 <= L <= n - 1");
  require(labels.empty() || static_cast<Eigen::Index>(labels.size()) == index.size(),
          "query: label count does not match index");

  const VectorXd sq = index.squared_distances(i);
  std::vector<Eigen::Index> candidates;
  candidates.reserve(static_cast<std::size_t>(index.size() - 1));
  for (Eigen::Index j = 0; j < index.size(); ++j)
    if (j != i) candidates.push_back(j);
  auto closer = [&sq](Eigen::Index a, Eigen::Index b) { return sq(a) < sq(b) || (sq(a) == sq(b) && a < b); };
  std::partial_sort(candidates.begin(), candidates.begin() + L, candidates.end(), closer);

  NeighborSet set;
  set.owner = i;
  set.neighbors.assign(candidates.begin(), candidates.begin() + L);
  for (auto j : set.neighbors) {
    set.distances.push_back(std::sqrt(sq(j)));
    if (!labels.empty()) set.labels.push_back(labels[j]);
  }
  return set;
}

std::vector<NeighborSet> query_all(const NeighborIndex& index, int L, std::span<const int> labels, int threads) {
  std::vector<NeighborSet> sets(static_cast<std::size_t>(index.size()));
  parallel_for(sets.size(), threads,
               [&](std::size_t i) { sets[i] = query(index, static_cast<Eigen::Index>(i), L, labels); });
  return sets;
}

void write_neighbor_cache(const std::vector<NeighborSet>& sets, std::span<const SampleId> ids,
                          const std::filesystem::path& path) {
  require(!sets.empty(), "neighbor cache: nothing to write");
  const std::size_t L = sets.front().neighbors.size();
  auto out = detail::open_out(path);
  out << "id";
  for (std::size_t l = 1; l <= L; ++l) out << ",n" << l;
  for (std::size_t l = 1; l <= L; ++l) out << ",d" << l;
  out << '\n';
  for (const auto& set : sets) {
    require(set.neighbors.size() == L, "neighbor cache: sets must share one L");
    out << ids[set.owner];
    for (auto j : set.neighbors) out << ',' << ids[j];
    for (double d : set.distances) out << ',' << detail::format_double(d);
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::vector<NeighborSet> read_neighbor_cache(const std::filesystem::path& path, std::span<const SampleId> ids,
                                             std::span<const int> labels) {
  std::unordered_map<SampleId, Eigen::Index> row_of;
  for (std::size_t r = 0; r < ids.size(); ++r) row_of[ids[r]] = static_cast<Eigen::Index>(r);
  auto lookup = [&](SampleId id, const std::string& where) {
    auto it = row_of.find(id);
    if (it == row_of.end()) fail(ErrorKind::Io, where + ": unknown sample id " + std::to_string(id));
    return it->second;
  };

  auto in = detail::open_in(path);
  const std::string ctx = path.string();
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Io, ctx + ": empty file");
  const auto header = detail::split(detail::trim_cr(line));
  if (header.size() < 3 || header.size() % 2 == 0 || header.front() != "id")
    fail(ErrorKind::Io, ctx + ": malformed header");
  const std::size_t L = (header.size() - 1) / 2;

  std::vector<NeighborSet> sets(ids.size());
  std::vector<bool> seen(ids.size(), false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim_cr(line);
    if (text.empty()) continue;
    const std::string where = ctx + ":" + std::to_string(line_no);
    const auto cells = detail::split(text);
    if (cells.size() != header.size()) fail(ErrorKind::Io, where + ": wrong column count");
    const auto owner = lookup(detail::parse_int<SampleId>(cells[0], where), where);
    NeighborSet set;
    set.owner = owner;
    for (std::size_t l = 0; l < L; ++l) {
      const auto j = lookup(detail::parse_int<SampleId>(cells[1 + l], where), where);
      set.neighbors.push_back(j);
      set.distances.push_back(detail::parse_double(cells[1 + L + l], where));
      if (!labels.empty()) set.labels.push_back(labels[j]);
    }
    sets[owner] = std::move(set);
    seen[owner] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    fail(ErrorKind::Io, ctx + ": cache does not cover every sample");
  return sets;
}

}  // namespace inn
