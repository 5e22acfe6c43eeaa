// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/data.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace inn {

namespace {

// Salts that keep the per-sample streams of different operations independent.
constexpr std::uint64_t kSynthSalt = 0x5157;
constexpr std::uint64_t kSymmetricSalt = 0x53594d;
constexpr std::uint64_t kAsymmetricSalt = 0x41534d;
constexpr std::uint64_t kKeepSalt = 0x4b454550;
constexpr std::uint64_t kFlipSalt = 0x464c4950;

std::mt19937_64 sample_rng(std::uint64_t seed, SampleId id, std::uint64_t salt) {
  return std::mt19937_64(stream_seed(seed, static_cast<std::uint64_t>(id), salt));
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

void require_rate(double rate, const char* what) {
  require(rate >= 0.0 && rate <= 1.0, std::string(what) + " must lie in [0, 1]");
}

}  // namespace

std::vector<bool> Dataset::clean_mask() const {
  require(true_labels.has_value(), "clean mask requires true labels");
  std::vector<bool> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] == (*true_labels)[i];
  return mask;
}

double Dataset::noisy_fraction() const {
  const auto mask = clean_mask();
  if (mask.empty()) return 0.0;
  const auto clean = std::count(mask.begin(), mask.end(), true);
  return 1.0 - static_cast<double>(clean) / static_cast<double>(mask.size());
}

void Dataset::validate() const {
  require(num_classes >= 2, "dataset needs at least two classes");
  const auto n = static_cast<std::size_t>(features.rows());
  require(labels.size() == n, "label count does not match feature rows");
  require(ids.size() == n, "id count does not match feature rows");
  auto in_range = [this](int y) { return y >= 0 && y < num_classes; };
  require(std::all_of(labels.begin(), labels.end(), in_range), "observed label out of range");
  if (true_labels) {
    require(true_labels->size() == n, "true label count does not match feature rows");
    require(std::all_of(true_labels->begin(), true_labels->end(), in_range), "true label out of range");
  }
}

Dataset subset(const Dataset& ds, std::span<const Eigen::Index> rows) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
  if (ds.true_labels) out.true_labels.emplace();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = rows[r];
    require(i >= 0 && i < ds.size(), "subset row out of range");
    out.features.row(static_cast<Eigen::Index>(r)) = ds.features.row(i);
    out.labels.push_back(ds.labels[i]);
    out.ids.push_back(ds.ids[i]);
    if (ds.true_labels) out.true_labels->push_back((*ds.true_labels)[i]);
  }
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "blobs") return SynthKind::Blobs;
  if (name == "two_moons" || name == "moons") return SynthKind::TwoMoons;
  fail(ErrorKind::InvalidArgument, "unknown synthetic kind: " + name);
}

Dataset synth(SynthKind kind, Eigen::Index n, int num_classes, Eigen::Index dim, double spread, std::uint64_t seed) {
  require(num_classes >= 2, "synth: K must be at least 2");
  require(n >= num_classes, "synth: n must be at least K");
  require(dim >= 2, "synth: d must be at least 2");
  require(spread >= 0.0 && std::isfinite(spread), "synth: spread must be finite and non-negative");
  if (kind == SynthKind::TwoMoons) require(num_classes == 2, "synth: two_moons requires K = 2");

  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = MatrixXd::Zero(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.ids.resize(static_cast<std::size_t>(n));

  constexpr double pi = std::numbers::pi;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % num_classes);
    auto rng = sample_rng(seed, i, kSynthSalt);
    std::normal_distribution<double> jitter(0.0, 1.0);
    if (kind == SynthKind::Blobs) {
      const double angle = 2.0 * pi * y / num_classes;
      ds.features(i, 0) = std::cos(angle);
      ds.features(i, 1) = std::sin(angle);
    } else {
      const double t = pi * uniform01(rng);
      ds.features(i, 0) = y == 0 ? std::cos(t) : 1.0 - std::cos(t);
      ds.features(i, 1) = y == 0 ? std::sin(t) : 0.5 - std::sin(t);
    }
    for (Eigen::Index j = 0; j < dim; ++j) ds.features(i, j) += spread * jitter(rng);
    ds.labels[i] = y;
    ds.ids[i] = i;
  }
  ds.true_labels = ds.labels;
  return ds;
}

std::map<int, int> cifar10_asymmetric_map() {
  // airplane 0, automobile 1, bird 2, cat 3, deer 4, dog 5, frog 6, horse 7, ship 8, truck 9
  return {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
}

Dataset corrupt_symmetric(const Dataset& ds, double rate, std::uint64_t seed) {
  ds.validate();
  require_rate(rate, "symmetric noise rate");
  Dataset out = ds;
  std::uniform_int_distribution<int> any_class(0, ds.num_classes - 1);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    auto rng = sample_rng(seed, ds.ids[i], kSymmetricSalt);
    if (uniform01(rng) < rate) out.labels[i] = any_class(rng);
  }
  return out;
}

Dataset corrupt_asymmetric(const Dataset& ds, const NoiseSpec& spec) {
  ds.validate();
  require_rate(spec.rate, "asymmetric noise rate");
  require(spec.kind == NoiseKind::AsymmetricMap || spec.kind == NoiseKind::AsymmetricChain,
          "corrupt_asymmetric needs an asymmetric noise kind");
  if (spec.kind == NoiseKind::AsymmetricMap) {
    for (auto [from, to] : spec.mapping) {
      require(from >= 0 && from < ds.num_classes && to >= 0 && to < ds.num_classes,
              "asymmetric mapping references a label outside [0, K)");
    }
  }
  Dataset out = ds;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    const int y = ds.labels[i];
    int target = y;
    if (spec.kind == NoiseKind::AsymmetricChain) {
      target = (y + 1) % ds.num_classes;
    } else if (auto it = spec.mapping.find(y); it != spec.mapping.end()) {
      target = it->second;
    } else {
      continue;
    }
    auto rng = sample_rng(spec.seed, ds.ids[i], kAsymmetricSalt);
    if (uniform01(rng) < spec.rate) out.labels[i] = target;
  }
  return out;
}

Dataset build_imbalanced(const Dataset& ds, int class_a, int class_b, double keep_frac, double flip_p,
                         std::uint64_t seed) {
  ds.validate();
  require(class_a != class_b, "imbalanced: classes must differ");
  require(keep_frac > 0.0 && keep_frac <= 1.0, "imbalanced: keep_frac must lie in (0, 1]");
  require_rate(flip_p, "imbalanced flip probability");
  const auto& membership = ds.true_labels ? *ds.true_labels : ds.labels;
  const bool has_a = std::find(membership.begin(), membership.end(), class_a) != membership.end();
  const bool has_b = std::find(membership.begin(), membership.end(), class_b) != membership.end();
  require(has_a && has_b, "imbalanced: both classes must be present");

  std::vector<Eigen::Index> rows;
  std::vector<int> truth;
  for (std::size_t i = 0; i < membership.size(); ++i) {
    if (membership[i] == class_a) {
      rows.push_back(static_cast<Eigen::Index>(i));
      truth.push_back(0);
    } else if (membership[i] == class_b) {
      auto rng = sample_rng(seed, ds.ids[i], kKeepSalt);
      if (uniform01(rng) < keep_frac) {
        rows.push_back(static_cast<Eigen::Index>(i));
        truth.push_back(1);
      }
    }
  }
  Dataset out = subset(ds, rows);
  out.num_classes = 2;
  out.true_labels = truth;
  out.labels = truth;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    auto rng = sample_rng(seed, out.ids[i], kFlipSalt);
    if (uniform01(rng) < flip_p) out.labels[i] = 1 - out.labels[i];
  }
  return out;
}

Dataset apply_noise(const Dataset& ds, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::Symmetric:
      return corrupt_symmetric(ds, spec.rate, spec.seed);
    case NoiseKind::AsymmetricMap:
    case NoiseKind::AsymmetricChain:
      return corrupt_asymmetric(ds, spec);
    case NoiseKind::ImbalancedFlip:
      return build_imbalanced(ds, spec.class_a, spec.class_b, spec.keep_frac, spec.rate, spec.seed);
  }
  fail(ErrorKind::InvalidArgument, "unknown noise kind");
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  auto out = detail::open_out(path);
  out << "id";
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << ",label";
  if (ds.true_labels) out << ",true_label";
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    out << ds.ids[i];
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ',' << detail::format_double(ds.features(i, j));
    out << ',' << ds.labels[i];
    if (ds.true_labels) out << ',' << (*ds.true_labels)[i];
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, int num_classes) {
  auto in = detail::open_in(path);
  const std::string ctx = path.string();
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Io, ctx + ": empty file");
  const auto header = detail::split(detail::trim_cr(line));
  if (header.size() < 3 || header.front() != "id") fail(ErrorKind::Io, ctx + ": header must start with 'id'");
  const bool has_truth = header.back() == "true_label";
  const std::size_t label_col = header.size() - (has_truth ? 2 : 1);
  if (header[label_col] != "label") fail(ErrorKind::Io, ctx + ": missing 'label' column");
  const std::size_t dim = label_col - 1;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j + 1] != "f" + std::to_string(j)) fail(ErrorKind::Io, ctx + ": unexpected feature column order");
  }

  Dataset ds;
  std::vector<double> values;
  if (has_truth) ds.true_labels.emplace();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row_text = detail::trim_cr(line);
    if (row_text.empty()) continue;
    const auto cells = detail::split(row_text);
    const std::string where = ctx + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) fail(ErrorKind::Io, where + ": wrong column count");
    ds.ids.push_back(detail::parse_int<SampleId>(cells[0], where));
    for (std::size_t j = 0; j < dim; ++j) values.push_back(detail::parse_double(cells[j + 1], where));
    ds.labels.push_back(detail::parse_int<int>(cells[label_col], where));
    if (has_truth) ds.true_labels->push_back(detail::parse_int<int>(cells[label_col + 1], where));
  }
  const auto n = static_cast<Eigen::Index>(ds.ids.size());
  ds.features = Eigen::Map<const MatrixXd>(values.data(), n, static_cast<Eigen::Index>(dim));

  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  if (ds.true_labels)
    for (int y : *ds.true_labels) max_label = std::max(max_label, y);
  ds.num_classes = num_classes > 0 ? num_classes : std::max(2, max_label + 1);
  ds.validate();
  return ds;
}

void write_raw(const Dataset& ds, const std::filesystem::path& sidecar) {
  ds.validate();
  const auto dir = sidecar.parent_path();
  const auto stem = sidecar.stem().string();
  const std::string features_file = stem + ".f32";
  const std::string labels_file = stem + ".labels.i32";
  const std::string truth_file = ds.true_labels ? stem + ".true_labels.i32" : "";

  {
    auto out = detail::open_out(dir / features_file, true);
    for (Eigen::Index i = 0; i < ds.size(); ++i)
      for (Eigen::Index j = 0; j < ds.dim(); ++j) detail::write_le(out, static_cast<float>(ds.features(i, j)));
  }
  auto write_labels = [&](const std::vector<int>& labels, const std::string& file) {
    auto out = detail::open_out(dir / file, true);
    for (int y : labels) detail::write_le(out, static_cast<std::int32_t>(y));
  };
  write_labels(ds.labels, labels_file);
  if (ds.true_labels) write_labels(*ds.true_labels, truth_file);

  nlohmann::ordered_json meta;
  meta["n"] = ds.size();
  meta["d"] = ds.dim();
  meta["K"] = ds.num_classes;
  meta["features_file"] = features_file;
  meta["labels_file"] = labels_file;
  meta["true_labels_file"] = ds.true_labels ? nlohmann::ordered_json(truth_file) : nlohmann::ordered_json(nullptr);
  meta["ids"] = ds.ids;
  auto out = detail::open_out(sidecar);
  out << meta.dump(2) << '\n';
}

Dataset read_raw(const std::filesystem::path& sidecar) {
  const std::string ctx = sidecar.string();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_text(sidecar));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, ctx + ": " + e.what());
  }
  const auto dir = sidecar.parent_path();
  Dataset ds;
  Eigen::Index n = 0, d = 0;
  std::string features_file, labels_file;
  try {
    n = meta.at("n").get<Eigen::Index>();
    d = meta.at("d").get<Eigen::Index>();
    ds.num_classes = meta.at("K").get<int>();
    features_file = meta.value("features_file", sidecar.stem().string() + ".f32");
    labels_file = meta.at("labels_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, ctx + ": " + e.what());
  }

  ds.features.resize(n, d);
  {
    auto in = detail::open_in(dir / features_file, true);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) ds.features(i, j) = detail::read_le<float>(in, features_file);
  }
  auto read_labels = [&](const std::string& file) {
    auto in = detail::open_in(dir / file, true);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& y : labels) y = detail::read_le<std::int32_t>(in, file);
    return labels;
  };
  ds.labels = read_labels(labels_file);
  if (meta.contains("true_labels_file") && meta["true_labels_file"].is_string())
    ds.true_labels = read_labels(meta["true_labels_file"].get<std::string>());
  if (meta.contains("ids")) {
    ds.ids = meta["ids"].get<std::vector<SampleId>>();
  } else {
    ds.ids.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ds.ids[i] = i;
  }
  ds.validate();
  return ds;
}

}  // namespace inn
