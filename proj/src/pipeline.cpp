// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/pipeline.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

namespace inn {

namespace {

// Model keys for stream_seed; the CE baseline deliberately shares h's key.
constexpr std::uint64_t kKeyH = 1;
constexpr std::uint64_t kKeyF = 2;
constexpr std::uint64_t kKeyCene = 4;
constexpr std::uint64_t kInitSalt = 0x494e4954;
constexpr std::uint64_t kTrainSalt = 0x5452414e;
constexpr std::uint64_t kNoiseSalt = 0x4e4f4953;

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  fail(ErrorKind::InvalidArgument, "config '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& value, const std::string& key) {
  std::vector<int> out;
  for (auto cell : detail::split(value, ',')) {
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    if (cell.empty()) continue;
    out.push_back(detail::parse_int<int>(cell, "config '" + key + "'"));
  }
  return out;
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string synth_name(SynthKind kind) { return kind == SynthKind::Blobs ? "blobs" : "moons"; }

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Runs one stage, prefixing any library error with the stage name.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Io, "stage " + name + ": " + e.what());
  }
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

TrainConfig train_config(const RunConfig& c, LossKind loss, int epochs, std::uint64_t key, bool checkpoints) {
  TrainConfig t;
  t.loss_kind = loss;
  t.epochs = epochs;
  t.batch_size = c.batch_size;
  t.lr0 = c.lr;
  t.momentum = c.momentum;
  t.mixup_alpha = c.mixup_alpha;
  t.seed = stream_seed(c.seed, key, kTrainSalt);
  if (checkpoints) t.checkpoint_epochs = c.checkpoint_epochs();
  return t;
}

Model fresh_model(const RunConfig& c, const Dataset& ds, std::uint64_t key) {
  std::vector<int> dims{static_cast<int>(ds.dim())};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(ds.num_classes);
  return init_model(dims, stream_seed(c.seed, key, kInitSalt));
}

const Model& at_epoch(const TrainResult& run, int epoch) {
  for (const auto& ck : run.checkpoints)
    if (ck.epoch == epoch) return ck.model;
  fail(ErrorKind::InvalidArgument, "no checkpoint at epoch " + std::to_string(epoch));
}

void write_consistency(const std::vector<ConsistencyStats>& f, const std::vector<ConsistencyStats>& ce,
                       const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "epoch,model,e_cor,e_inc,em_cor,em_inc\n";
  auto cell = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
  auto rows = [&](const std::vector<ConsistencyStats>& stats, const char* model) {
    for (const auto& s : stats) {
      out << s.epoch << ',' << model << ',' << cell(s.e_cor) << ',' << cell(s.e_inc) << ',' << cell(s.em_cor) << ','
          << cell(s.em_inc) << '\n';
    }
  };
  rows(f, "f");
  rows(ce, "ce");
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string where = "config '" + key + "'";
  auto as_int = [&] { return detail::parse_int<int>(value, where); };
  auto as_index = [&] { return detail::parse_int<Eigen::Index>(value, where); };
  auto as_double = [&] { return detail::parse_double(value, where); };

  if (key == "seed") seed = detail::parse_int<std::uint64_t>(value, where);
  else if (key == "data") data = value;
  else if (key == "synth") synth_kind = parse_synth_kind(value);
  else if (key == "n") n = as_index();
  else if (key == "k") num_classes = as_int();
  else if (key == "dim") dim = as_index();
  else if (key == "spread") spread = as_double();
  else if (key == "noise") noise = value;
  else if (key == "noise_rate") noise_rate = as_double();
  else if (key == "class_a") class_a = as_int();
  else if (key == "class_b") class_b = as_int();
  else if (key == "keep_frac") keep_frac = as_double();
  else if (key == "hidden") hidden = parse_int_list(value, key);
  else if (key == "h_loss") h_loss = parse_loss_kind(value);
  else if (key == "h_epochs") h_epochs = as_int();
  else if (key == "share_epochs") share_epochs = parse_bool(value, key);
  else if (key == "f_loss") f_loss = parse_loss_kind(value);
  else if (key == "epochs") epochs = as_int();
  else if (key == "batch_size") batch_size = as_int();
  else if (key == "lr") lr = as_double();
  else if (key == "momentum") momentum = as_double();
  else if (key == "mixup_alpha") mixup_alpha = as_double();
  else if (key == "checkpoints") checkpoints = parse_int_list(value, key);
  else if (key == "epoch_scale") epoch_scale = as_double();
  else if (key == "H") scorer.H = as_int();
  else if (key == "L") scorer.L = as_int();
  else if (key == "mode") scorer.mode = parse_score_mode(value);
  else if (key == "baselines") baselines = parse_bool(value, key);
  else if (key == "normalize") normalize = parse_bool(value, key);
  else if (key == "l_sweep") l_sweep = parse_int_list(value, key);
  else if (key == "bins") bins = as_int();
  else if (key == "threads") threads = as_int();
  else if (key == "out") out = value;
  else if (key == "save_models") save_models = parse_bool(value, key);
  else fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (data.empty()) {
    require(n >= 2, "config: n must be at least 2");
    require(num_classes >= 2, "config: k must be at least 2");
    require(dim >= 1, "config: dim must be positive");
    require(spread >= 0.0, "config: spread must be non-negative");
  } else if (!std::filesystem::exists(data)) {
    fail(ErrorKind::Io, "config: data file does not exist: " + data.string());
  }
  static const std::set<std::string> noises{"none", "symmetric", "asymmetric", "chain", "imbalanced"};
  require(noises.count(noise) > 0, "config: unknown noise '" + noise + "'");
  require(noise_rate >= 0.0 && noise_rate <= 1.0, "config: noise_rate must be in [0, 1]");
  require(!hidden.empty(), "config: at least one hidden layer is required");
  require(std::all_of(hidden.begin(), hidden.end(), [](int h) { return h >= 1; }), "config: hidden widths must be positive");
  require(epochs >= 1 && h_epochs >= 1, "config: epochs must be positive");
  require(epoch_scale > 0.0, "config: epoch_scale must be positive");
  require(!checkpoints.empty(), "config: at least one checkpoint epoch is required");
  require(std::is_sorted(checkpoints.begin(), checkpoints.end()) &&
              std::adjacent_find(checkpoints.begin(), checkpoints.end()) == checkpoints.end(),
          "config: checkpoint epochs must be strictly ascending");
  require(checkpoints.front() >= 1 && checkpoints.back() <= epochs, "config: checkpoint epochs must lie in [1, epochs]");
  require(std::all_of(l_sweep.begin(), l_sweep.end(), [](int l) { return l >= 1; }), "config: l_sweep entries must be positive");
  require(bins >= 1, "config: bins must be positive");
  require(threads >= 1, "config: threads must be positive");
  scorer.validate();
  train_config(*this, f_loss, f_epochs(), kKeyF, true).validate();
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  auto d = [](double v) { return detail::format_double(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"seed", std::to_string(seed)},
      {"data", data.string()},
      {"synth", synth_name(synth_kind)},
      {"n", std::to_string(n)},
      {"k", std::to_string(num_classes)},
      {"dim", std::to_string(dim)},
      {"spread", d(spread)},
      {"noise", noise},
      {"noise_rate", d(noise_rate)},
      {"class_a", std::to_string(class_a)},
      {"class_b", std::to_string(class_b)},
      {"keep_frac", d(keep_frac)},
      {"hidden", join(hidden)},
      {"h_loss", to_string(h_loss)},
      {"h_epochs", std::to_string(h_epochs)},
      {"share_epochs", b(share_epochs)},
      {"f_loss", to_string(f_loss)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"lr", d(lr)},
      {"momentum", d(momentum)},
      {"mixup_alpha", d(mixup_alpha)},
      {"checkpoints", join(checkpoints)},
      {"epoch_scale", d(epoch_scale)},
      {"H", std::to_string(scorer.H)},
      {"L", std::to_string(scorer.L)},
      {"mode", to_string(scorer.mode)},
      {"baselines", b(baselines)},
      {"normalize", b(normalize)},
      {"l_sweep", join(l_sweep)},
      {"bins", std::to_string(bins)},
      {"save_models", b(save_models)},
  };
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : entries()) {
    for (char ch : key + " = " + value + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int RunConfig::scaled(int epoch) const {
  return std::max(1, static_cast<int>(std::lround(epoch * epoch_scale)));
}

std::vector<int> RunConfig::checkpoint_epochs() const {
  std::vector<int> out;
  for (int e : checkpoints) {
    const int s = std::min(scaled(e), f_epochs());
    if (out.empty() || out.back() != s) out.push_back(s);
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  const std::string text = detail::read_text(path);
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start <= text.size();) {
    auto stop = text.find('\n', start);
    if (stop == std::string::npos) stop = text.size();
    std::string line = text.substr(start, stop - start);
    start = stop + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::InvalidArgument, path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

Dataset load_dataset(const RunConfig& config) {
  Dataset ds;
  if (config.data.empty()) {
    ds = synth(config.synth_kind, config.n, config.num_classes, config.dim, config.spread, config.seed);
  } else if (config.data.extension() == ".json") {
    ds = read_raw(config.data);
  } else {
    ds = read_csv(config.data);
  }
  if (config.noise == "none") return ds;
  if (!ds.true_labels) ds.true_labels = ds.labels;

  NoiseSpec spec;
  spec.rate = config.noise_rate;
  spec.seed = stream_seed(config.seed, 0, kNoiseSalt);
  spec.class_a = config.class_a;
  spec.class_b = config.class_b;
  spec.keep_frac = config.keep_frac;
  if (config.noise == "symmetric") {
    spec.kind = NoiseKind::Symmetric;
  } else if (config.noise == "asymmetric") {
    spec.kind = NoiseKind::AsymmetricMap;
    spec.mapping = cifar10_asymmetric_map();
  } else if (config.noise == "chain") {
    spec.kind = NoiseKind::AsymmetricChain;
  } else {
    spec.kind = NoiseKind::ImbalancedFlip;
  }
  return apply_noise(ds, spec);
}

PhaseTimer::PhaseTimer() : last_ns_(now_ns()), start_ns_(last_ns_) {}

void PhaseTimer::lap(const std::string& phase) {
  const auto t = now_ns();
  phases_.emplace_back(phase, static_cast<double>(t - last_ns_) * 1e-9);
  last_ns_ = t;
}

double PhaseTimer::total() const { return static_cast<double>(last_ns_ - start_ns_) * 1e-9; }

std::string timing_json(const PhaseTimer& timer) {
  nlohmann::ordered_json doc;
  auto& phases = doc["phases"];
  phases = nlohmann::ordered_json::array();
  for (const auto& [name, seconds] : timer.phases()) phases.push_back({{"phase", name}, {"seconds", seconds}});
  doc["total_seconds"] = timer.total();
  return doc.dump(2);
}

PipelineResult run_pipeline(const RunConfig& config) {
  stage("config", [&] { config.validate(); });
  PipelineResult result;
  auto& timer = result.timer;
  ScorerConfig scorer = config.scorer;
  scorer.threads = config.threads;
  const int f_epochs = config.f_epochs();
  const int h_epochs = config.h_epochs_effective();
  const auto epochs = config.checkpoint_epochs();

  result.dataset = stage("data", [&] { return load_dataset(config); });
  const Dataset& ds = result.dataset;
  const bool truth = ds.has_truth();
  timer.lap("load_data");

  // With matching budgets the CE baseline run is exactly h (same seeds), so it is trained once.
  const bool shared_h = config.baselines && config.h_loss == LossKind::CE && h_epochs == f_epochs;
  std::optional<TrainResult> ce_run;
  const Model h = stage("train_h", [&] {
    if (shared_h) {
      ce_run = train(fresh_model(config, ds, kKeyH), ds, train_config(config, LossKind::CE, f_epochs, kKeyH, true));
      return ce_run->model;
    }
    return train(fresh_model(config, ds, kKeyH), ds, train_config(config, config.h_loss, h_epochs, kKeyH, false))
        .model;
  });
  timer.lap("train_h");

  int query_l = scorer.L;
  for (int l : config.l_sweep) query_l = std::max(query_l, l);
  result.neighbors = stage("neighbor_search", [&] {
    require(query_l < ds.size(), "L must be smaller than the number of samples");
    const auto index = build_index(features(h, ds.features));
    return query_all(index, query_l, ds.labels, config.threads);
  });
  const auto& sets = result.neighbors;
  timer.lap("neighbor_search");

  const TrainResult f_run = stage("train_f", [&] {
    return train(fresh_model(config, ds, kKeyF), ds, train_config(config, config.f_loss, f_epochs, kKeyF, true));
  });
  timer.lap("train_f");

  std::optional<TrainResult> cene_run;
  if (config.baselines) {
    stage("train_baselines", [&] {
      if (!ce_run)
        ce_run = train(fresh_model(config, ds, kKeyH), ds, train_config(config, LossKind::CE, f_epochs, kKeyH, true));
      cene_run =
          train(fresh_model(config, ds, kKeyCene), ds, train_config(config, LossKind::CENE, f_epochs, kKeyCene, true));
    });
  }
  timer.lap("train_baselines");

  stage("scoring", [&] {
    for (int e : epochs) {
      ScoreTable table;
      table.epoch = e;
      table.ids = ds.ids;
      const Model& f = at_epoch(f_run, e);
      ScorerConfig integral = scorer, midpoint = scorer;
      integral.mode = ScoreMode::Integral;
      midpoint.mode = ScoreMode::Midpoint;
      table.columns[score_kind::kInn] = inn_scores(f, ds, sets, integral);
      table.columns[score_kind::kMidpoint] = inn_scores(f, ds, sets, midpoint);
      if (config.baselines) {
        table.columns[score_kind::kLossCe] = per_sample_loss(at_epoch(*ce_run, e), ds, LossKind::CE);
        table.columns[score_kind::kLossCene] = per_sample_loss(at_epoch(*cene_run, e), ds, LossKind::CENE);
      }
      if (truth) {
        auto stats = consistency_stats(f, ds, sets);
        stats.epoch = e;
        result.consistency_f.push_back(stats);
        if (config.baselines) {
          stats = consistency_stats(at_epoch(*ce_run, e), ds, sets);
          stats.epoch = e;
          result.consistency_ce.push_back(stats);
        }
      }
      result.tables.push_back(std::move(table));
    }
    if (truth && !config.l_sweep.empty()) {
      const Model& f = at_epoch(f_run, epochs.back());
      for (int l : config.l_sweep) {
        ScorerConfig sweep = scorer;
        sweep.L = l;
        result.l_sweep.push_back({l, auc(inn_scores(f, ds, sets, sweep), ds.clean_mask())});
      }
    }
  });
  timer.lap("scoring");

  const ScoreTable& final_table = result.tables.back();
  const std::string selected = scorer.mode == ScoreMode::Integral ? score_kind::kInn : score_kind::kMidpoint;
  stage("mixture", [&] {
    const VectorXd& raw = final_table.at(selected);
    const VectorXd values = config.normalize ? normalize_scores(raw).values
                                             : VectorXd(raw.cwiseMax(kNormalizeClamp).cwiseMin(1.0 - kNormalizeClamp));
    result.inn_fit = fit_beta_mixture(values);
    result.inn_split = split(result.inn_fit, values, 0.5, ds.ids);
    if (config.baselines) {
      const VectorXd& loss = final_table.at(score_kind::kLossCe);
      result.loss_fit = fit_gaussian_mixture(loss);
      result.loss_split = split(*result.loss_fit, loss, 0.5, ds.ids);
    }
  });
  timer.lap("mixture");

  stage("eval", [&] {
    if (!truth) {
      result.warnings.push_back("dataset has no true labels; AUC report skipped");
    } else if (result.tables.size() < 2) {
      result.warnings.push_back("fewer than two checkpoints; AUC sweep report skipped");
    } else {
      result.report = sweep_report(result.tables, ds.clean_mask());
    }
  });
  timer.lap("eval");

  if (!config.out.empty()) {
    stage("write", [&] {
      const auto& out = config.out;
      std::filesystem::create_directories(out);
      {
        auto cfg = detail::open_out(out / "config.txt");
        for (const auto& [key, value] : config.entries()) cfg << key << " = " << value << '\n';
      }
      write_csv(ds, out / "dataset.csv");
      write_neighbor_cache(sets, ds.ids, out / "neighbors.csv");
      write_score_tables(result.tables, out / "scores.csv");
      write_score_summary(result.tables, scorer, out / "score_summary.json");
      if (truth) write_consistency(result.consistency_f, result.consistency_ce, out / "consistency.csv");
      write_fit(result.inn_fit, out / "fit_inn.json");
      write_split(result.inn_split, out / "split_inn.csv");
      if (result.loss_fit) {
        write_fit(*result.loss_fit, out / "fit_loss_ce.json");
        write_split(*result.loss_split, out / "split_loss_ce.csv");
      }
      if (result.report) {
        write_report(*result.report, out / "report.json");
        write_auc_csv(*result.report, out / "auc.csv");
      }
      if (truth) {
        for (const auto& [kind, values] : final_table.columns)
          write_histogram(grouped_histogram(cleanliness(final_table, kind), ds, config.bins),
                          out / ("histogram_" + kind + ".csv"));
      }
      if (!result.l_sweep.empty()) {
        nlohmann::ordered_json doc;
        bool nondecreasing = true;
        auto& points = doc["points"];
        points = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < result.l_sweep.size(); ++i) {
          points.push_back({{"L", result.l_sweep[i].L}, {"auc", result.l_sweep[i].auc}});
          if (i > 0 && result.l_sweep[i].auc < result.l_sweep[i - 1].auc) nondecreasing = false;
        }
        doc["epoch"] = epochs.back();
        doc["nondecreasing"] = nondecreasing;
        doc["auc_change"] = result.l_sweep.back().auc - result.l_sweep.front().auc;
        auto file = detail::open_out(out / "l_sweep.json");
        file << doc.dump(2) << '\n';
      }
      if (config.save_models) {
        const auto models = out / "models";
        save_checkpoint(h, train_config(config, config.h_loss, h_epochs, kKeyH, false), h_epochs, models / "h.bin");
        auto save_run = [&](const TrainResult& run, LossKind loss, std::uint64_t key, const std::string& name) {
          const auto cfg = train_config(config, loss, f_epochs, key, true);
          for (const auto& ck : run.checkpoints)
            save_checkpoint(ck.model, cfg, ck.epoch, models / (name + "_epoch" + std::to_string(ck.epoch) + ".bin"));
        };
        save_run(f_run, config.f_loss, kKeyF, "f");
        if (ce_run) save_run(*ce_run, LossKind::CE, kKeyH, "ce");
        if (cene_run) save_run(*cene_run, LossKind::CENE, kKeyCene, "cene");
      }
    });
  }
  timer.lap("write");

  if (!config.out.empty()) {
    stage("manifest", [&] {
      {
        auto file = detail::open_out(config.out / "timing.json");
        file << timing_json(timer) << '\n';
      }
      nlohmann::ordered_json doc;
      doc["version"] = kVersion;
      doc["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                     std::to_string(EIGEN_MINOR_VERSION);
      doc["seed"] = config.seed;
      doc["config_hash"] = config.hash();
      auto& cfg = doc["config"];
      cfg = nlohmann::ordered_json::object();
      for (const auto& [key, value] : config.entries()) cfg[key] = value;
      doc["checkpoint_epochs"] = epochs;
      doc["h_epochs"] = h_epochs;
      doc["warnings"] = result.warnings;
      auto file = detail::open_out(config.out / "manifest.json");
      file << doc.dump(2) << '\n';
    });
  }
  return result;
}

}  // namespace inn
