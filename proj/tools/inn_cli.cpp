// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

// Command-line front end. Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.

#include "inn/data.hpp"
#include "inn/eval.hpp"
#include "inn/mixture.hpp"
#include "inn/neighbors.hpp"
#include "inn/oracle.hpp"
#include "inn/pipeline.hpp"
#include "inn/scorer.hpp"
#include "inn/tinynet.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

int exit_code(inn::ErrorKind kind) {
  switch (kind) {
    case inn::ErrorKind::InvalidArgument:
    case inn::ErrorKind::Size: return kExitConfig;
    case inn::ErrorKind::NumericFailure:
    case inn::ErrorKind::FitFailure:
    case inn::ErrorKind::UndefinedAuc: return kExitNumeric;
    case inn::ErrorKind::Io: return kExitIo;
  }
  return 1;
}

bool is_raw(const fs::path& path) { return path.extension() == ".json"; }

inn::Dataset read_dataset(const fs::path& path) { return is_raw(path) ? inn::read_raw(path) : inn::read_csv(path); }

void write_dataset(const inn::Dataset& ds, const fs::path& path) {
  if (is_raw(path))
    inn::write_raw(ds, path);
  else
    inn::write_csv(ds, path);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

void print_noise_summary(const inn::Dataset& ds) {
  std::cout << "samples " << ds.size() << ", classes " << ds.num_classes;
  if (ds.has_truth()) std::cout << ", realized noisy fraction " << fixed(ds.noisy_fraction());
  std::cout << '\n';
}

// ---- synth / corrupt ------------------------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "blobs";
  Eigen::Index n = 2000;
  int k = 4;
  Eigen::Index dim = 2;
  double spread = 0.5;
  std::uint64_t seed = 0;
  fs::path out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic classification dataset");
  cmd->add_option("--kind", a.kind, "blobs or moons")->capture_default_str();
  cmd->add_option("--n", a.n, "Number of samples")->capture_default_str();
  cmd->add_option("--k", a.k, "Number of classes")->capture_default_str();
  cmd->add_option("--dim", a.dim, "Feature dimension")->capture_default_str();
  cmd->add_option("--spread", a.spread, "Gaussian jitter standard deviation")->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--out", a.out, "Output .csv, or .json for the raw tensor format")->required();
  cmd->callback([&a] {
    const auto ds = inn::synth(inn::parse_synth_kind(a.kind), a.n, a.k, a.dim, a.spread, a.seed);
    write_dataset(ds, a.out);
    print_noise_summary(ds);
  });
}

struct CorruptArgs {
  fs::path in, out;
  std::optional<double> sym, asym, chain, imbalanced;
  double keep_frac = 0.1;
  int class_a = 0, class_b = 1;
  std::uint64_t seed = 0;
};

void add_corrupt(CLI::App& app, CorruptArgs& a) {
  auto* cmd = app.add_subcommand("corrupt", "Inject label noise into a dataset");
  cmd->add_option("--in", a.in, "Input dataset")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Output dataset")->required();
  auto* sym = cmd->add_option("--sym", a.sym, "Symmetric noise rate");
  auto* asym = cmd->add_option("--asym", a.asym, "Class-map noise rate (CIFAR-10 style map)");
  auto* chain = cmd->add_option("--chain", a.chain, "Chain noise rate, y -> (y + 1) mod K");
  auto* imb = cmd->add_option("--imbalanced", a.imbalanced, "Two-class imbalanced construction with this flip rate");
  cmd->add_option("--keep-frac", a.keep_frac, "Fraction of class b kept (imbalanced)")->capture_default_str();
  cmd->add_option("--class-a", a.class_a)->capture_default_str();
  cmd->add_option("--class-b", a.class_b)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  sym->excludes(asym)->excludes(chain)->excludes(imb);
  asym->excludes(chain)->excludes(imb);
  chain->excludes(imb);
  cmd->callback([&a] {
    auto ds = read_dataset(a.in);
    if (!ds.true_labels) ds.true_labels = ds.labels;
    inn::NoiseSpec spec;
    spec.seed = a.seed;
    spec.class_a = a.class_a;
    spec.class_b = a.class_b;
    spec.keep_frac = a.keep_frac;
    if (a.sym) {
      spec.kind = inn::NoiseKind::Symmetric;
      spec.rate = *a.sym;
    } else if (a.asym) {
      spec.kind = inn::NoiseKind::AsymmetricMap;
      spec.rate = *a.asym;
      spec.mapping = inn::cifar10_asymmetric_map();
    } else if (a.chain) {
      spec.kind = inn::NoiseKind::AsymmetricChain;
      spec.rate = *a.chain;
    } else if (a.imbalanced) {
      spec.kind = inn::NoiseKind::ImbalancedFlip;
      spec.rate = *a.imbalanced;
    } else {
      inn::fail(inn::ErrorKind::InvalidArgument, "corrupt: one of --sym, --asym, --chain, --imbalanced is required");
    }
    const auto noisy = inn::apply_noise(ds, spec);
    write_dataset(noisy, a.out);
    print_noise_summary(noisy);
  });
}

// ---- train ----------------------------------------------------------------------------------------------------

struct TrainArgs {
  fs::path data, out;
  std::string loss = "ce";
  std::vector<int> hidden{64, 64};
  inn::TrainConfig config;
  std::uint64_t init_seed = 0;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a classifier; checkpoints go next to --out");
  cmd->add_option("--data", a.data)->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Final model path; checkpoints are written as <stem>_epochE.bin")->required();
  cmd->add_option("--loss", a.loss, "ce, cene or mixup")->capture_default_str();
  cmd->add_option("--hidden", a.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
  cmd->add_option("--epochs", a.config.epochs)->capture_default_str();
  cmd->add_option("--batch-size", a.config.batch_size)->capture_default_str();
  cmd->add_option("--lr", a.config.lr0)->capture_default_str();
  cmd->add_option("--momentum", a.config.momentum)->capture_default_str();
  cmd->add_option("--mixup-alpha", a.config.mixup_alpha)->capture_default_str();
  cmd->add_option("--checkpoints", a.config.checkpoint_epochs, "Checkpoint epochs")->delimiter(',');
  cmd->add_option("--checkpoint-every", a.config.checkpoint_every);
  cmd->add_option("--seed", a.config.seed, "Shuffling / MixUp seed")->capture_default_str();
  cmd->add_option("--init-seed", a.init_seed, "Weight initialization seed")->capture_default_str();
  cmd->callback([&a] {
    const auto ds = read_dataset(a.data);
    a.config.loss_kind = inn::parse_loss_kind(a.loss);
    std::vector<int> dims{static_cast<int>(ds.dim())};
    dims.insert(dims.end(), a.hidden.begin(), a.hidden.end());
    dims.push_back(ds.num_classes);
    const auto run = inn::train(inn::init_model(dims, a.init_seed), ds, a.config);
    const auto stem = a.out.parent_path() / a.out.stem();
    for (const auto& ck : run.checkpoints)
      inn::save_checkpoint(ck.model, a.config, ck.epoch, stem.string() + "_epoch" + std::to_string(ck.epoch) + ".bin");
    inn::save_checkpoint(run.model, a.config, a.config.epochs, a.out);
    std::cout << "epochs " << a.config.epochs << ", final objective " << fixed(run.epoch_loss.back(), 6) << ", "
              << run.checkpoints.size() << " checkpoints\n";
  });
}

// ---- score ----------------------------------------------------------------------------------------------------

struct ScoreArgs {
  fs::path data, model, feature_model, neighbors, out, neighbors_out;
  std::vector<std::string> kinds{inn::score_kind::kInn};
  int epoch = 0;
  inn::ScorerConfig scorer;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  auto* cmd = app.add_subcommand("score", "Score every sample with one model checkpoint");
  cmd->add_option("--data", a.data)->required()->check(CLI::ExistingFile);
  cmd->add_option("--model", a.model, "Model used for the scores")->required()->check(CLI::ExistingFile);
  auto* fm = cmd->add_option("--feature-model", a.feature_model, "Model whose penultimate features define neighbors")
                 ->check(CLI::ExistingFile);
  auto* nb = cmd->add_option("--neighbors", a.neighbors, "Neighbor cache CSV")->check(CLI::ExistingFile);
  fm->excludes(nb);
  cmd->add_option("--neighbors-out", a.neighbors_out, "Write the neighbor cache built from --feature-model");
  cmd->add_option("--kinds", a.kinds, "inn, midpoint, loss_ce, loss_cene")->delimiter(',')->capture_default_str();
  cmd->add_option("--epoch", a.epoch, "Epoch recorded in the table")->capture_default_str();
  cmd->add_option("--H", a.scorer.H, "Trapezoid intervals per segment")->capture_default_str();
  cmd->add_option("--L", a.scorer.L, "Neighbors per sample")->capture_default_str();
  cmd->add_option("--threads", a.scorer.threads)->capture_default_str();
  cmd->add_option("--out", a.out, "Score table CSV")->required();
  cmd->callback([&a] {
    const auto ds = read_dataset(a.data);
    const auto model = inn::load_model(a.model);
    const bool needs_neighbors = std::any_of(a.kinds.begin(), a.kinds.end(), inn::higher_is_cleaner);
    std::vector<inn::NeighborSet> sets;
    if (needs_neighbors) {
      if (!a.neighbors.empty()) {
        sets = inn::read_neighbor_cache(a.neighbors, ds.ids, ds.labels);
      } else {
        inn::require(!a.feature_model.empty(), "score: --feature-model or --neighbors is required for INN scores");
        const auto h = inn::load_model(a.feature_model);
        sets = inn::query_all(inn::build_index(inn::features(h, ds.features)), a.scorer.L, ds.labels, a.scorer.threads);
        if (!a.neighbors_out.empty()) inn::write_neighbor_cache(sets, ds.ids, a.neighbors_out);
      }
    }
    inn::ScoreTable table;
    table.epoch = a.epoch;
    table.ids = ds.ids;
    for (const auto& kind : a.kinds) {
      if (kind == inn::score_kind::kInn || kind == inn::score_kind::kMidpoint) {
        auto cfg = a.scorer;
        cfg.mode = kind == inn::score_kind::kInn ? inn::ScoreMode::Integral : inn::ScoreMode::Midpoint;
        table.columns[kind] = inn::inn_scores(model, ds, sets, cfg);
      } else if (kind == inn::score_kind::kLossCe) {
        table.columns[kind] = inn::per_sample_loss(model, ds, inn::LossKind::CE);
      } else if (kind == inn::score_kind::kLossCene) {
        table.columns[kind] = inn::per_sample_loss(model, ds, inn::LossKind::CENE);
      } else {
        inn::fail(inn::ErrorKind::InvalidArgument, "score: unknown kind '" + kind + "'");
      }
    }
    inn::write_score_tables({table}, a.out);
    std::cout << "scored " << ds.size() << " samples, kinds " << a.kinds.size() << '\n';
  });
}

// ---- oracle ---------------------------------------------------------------------------------------------------

struct OracleArgs {
  int k = 2, l = 10;
  std::string cond = "majority";
  std::size_t budget = 5'000'000;
  fs::path out;
};

void add_oracle(CLI::App& app, OracleArgs& a) {
  auto* cmd = app.add_subcommand("oracle", "Enumerate neighbor-label configurations of the idealized scorer");
  cmd->add_option("--k", a.k, "Number of classes")->capture_default_str();
  cmd->add_option("--l", a.l, "Number of neighbors")->capture_default_str();
  cmd->add_option("--cond", a.cond, "majority, pure or count-bound")->capture_default_str();
  cmd->add_option("--budget", a.budget, "Maximum number of count vectors")->capture_default_str();
  cmd->add_option("--out", a.out, "Report JSON");
  cmd->callback([&a] {
    const auto report = inn::verify_separation(a.k, a.l, inn::parse_condition(a.cond), a.budget);
    if (!a.out.empty()) inn::write_report(report, a.out);
    std::cout << inn::report_json(report) << '\n';
  });
}

// ---- split ----------------------------------------------------------------------------------------------------

struct SplitArgs {
  fs::path scores, out, fit_out;
  std::string kind = inn::score_kind::kInn;
  std::optional<int> epoch;
  std::string mixture;
  bool no_normalize = false;
  double threshold = 0.5;
};

void add_split(CLI::App& app, SplitArgs& a) {
  auto* cmd = app.add_subcommand("split", "Fit a two-component mixture and split samples into labeled / unlabeled");
  cmd->add_option("--scores", a.scores)->required()->check(CLI::ExistingFile);
  cmd->add_option("--kind", a.kind)->capture_default_str();
  cmd->add_option("--epoch", a.epoch, "Defaults to the last epoch in the table");
  cmd->add_option("--mixture", a.mixture, "beta or gaussian; defaults to beta for scores, gaussian for losses");
  cmd->add_flag("--no-normalize", a.no_normalize, "Fit beta mixtures on raw scores (clamped into (0, 1))");
  cmd->add_option("--threshold", a.threshold)->capture_default_str();
  cmd->add_option("--out", a.out, "Split CSV")->required();
  cmd->add_option("--fit-out", a.fit_out, "Mixture fit JSON");
  cmd->callback([&a] {
    const auto tables = inn::read_score_tables(a.scores);
    inn::require(!tables.empty(), "split: score table is empty");
    const inn::ScoreTable* table = &tables.back();
    if (a.epoch) {
      table = nullptr;
      for (const auto& t : tables)
        if (t.epoch == *a.epoch) table = &t;
      inn::require(table != nullptr, "split: no table for epoch " + std::to_string(*a.epoch));
    }
    const auto& raw = table->at(a.kind);
    const bool beta = a.mixture.empty() ? inn::higher_is_cleaner(a.kind) : a.mixture == "beta";
    inn::require(a.mixture.empty() || a.mixture == "beta" || a.mixture == "gaussian",
                 "split: --mixture must be beta or gaussian");
    inn::VectorXd values;
    inn::MixtureFit fit;
    if (beta) {
      values = a.no_normalize ? inn::VectorXd(raw.cwiseMax(inn::kNormalizeClamp).cwiseMin(1.0 - inn::kNormalizeClamp))
                              : inn::normalize_scores(raw).values;
      fit = inn::fit_beta_mixture(values);
    } else {
      values = raw;
      fit = inn::fit_gaussian_mixture(values);
    }
    const auto result = inn::split(fit, values, a.threshold, table->ids);
    inn::write_split(result, a.out);
    if (!a.fit_out.empty()) inn::write_fit(fit, a.fit_out);
    std::cout << "labeled " << result.labeled.size() << ", unlabeled " << result.unlabeled.size() << '\n';
  });
}

// ---- eval -----------------------------------------------------------------------------------------------------

struct EvalArgs {
  std::vector<fs::path> scores;
  fs::path data, out;
  int bins = 20;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Clean/noisy AUC per checkpoint and score histograms");
  cmd->add_option("--scores", a.scores, "One or more score table CSVs")->required()->check(CLI::ExistingFile);
  cmd->add_option("--data", a.data, "Dataset with true labels")->required()->check(CLI::ExistingFile);
  cmd->add_option("--bins", a.bins)->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->callback([&a] {
    const auto ds = read_dataset(a.data);
    std::map<int, inn::ScoreTable> merged;
    for (const auto& path : a.scores) {
      for (auto& t : inn::read_score_tables(path)) {
        auto& slot = merged[t.epoch];
        slot.epoch = t.epoch;
        slot.ids = t.ids;
        for (auto& [kind, values] : t.columns) slot.columns[kind] = std::move(values);
      }
    }
    std::vector<inn::ScoreTable> tables;
    for (auto& [epoch, t] : merged) {
      inn::require(t.ids == ds.ids, "eval: score table ids do not match the dataset");
      tables.push_back(std::move(t));
    }
    const auto mask = ds.clean_mask();
    const auto report = inn::sweep_report(tables, mask);
    fs::create_directories(a.out);
    inn::write_report(report, a.out / "report.json");
    inn::write_auc_csv(report, a.out / "auc.csv");
    const auto& last = tables.back();
    for (const auto& [kind, values] : last.columns)
      inn::write_histogram(inn::grouped_histogram(inn::cleanliness(last, kind), ds, a.bins),
                           a.out / ("histogram_" + kind + ".csv"));
    for (const auto& [kind, s] : report.stability)
      std::cout << kind << ": final " << fixed(s.final) << ", best " << fixed(s.max) << " @" << s.best_epoch
                << ", range " << fixed(s.range) << '\n';
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  });
}

// ---- pipeline / timing ----------------------------------------------------------------------------------------

const std::vector<std::string> kValueKeys{
    "seed",   "data",        "synth",   "n",         "k",          "dim",       "spread",      "noise",
    "noise_rate", "class_a", "class_b", "keep_frac", "hidden",     "h_loss",    "h_epochs",    "f_loss",
    "epochs", "batch_size",  "lr",      "momentum",  "mixup_alpha", "checkpoints", "epoch_scale", "H",
    "L",      "mode",        "l_sweep", "bins",      "threads",    "out"};
const std::vector<std::string> kBoolKeys{"share_epochs", "baselines", "normalize", "save_models"};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

struct PipelineArgs {
  fs::path config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, std::string> overrides;
};

CLI::App* add_run_options(CLI::App& app, const std::string& name, const std::string& help, PipelineArgs& a) {
  auto* cmd = app.add_subcommand(name, help);
  cmd->add_option("--config", a.config_file, "Flat key = value config file; flags win")->check(CLI::ExistingFile);
  for (const auto& key : kValueKeys) cmd->add_option(flag_name(key), a.values[key], "Config key '" + key + "'");
  for (const auto& key : kBoolKeys) {
    cmd->add_flag_callback(flag_name(key), [&a, key] { a.overrides[key] = "true"; }, "Enable '" + key + "'");
    cmd->add_flag_callback("--no-" + flag_name(key).substr(2), [&a, key] { a.overrides[key] = "false"; },
                           "Disable '" + key + "'");
  }
  return cmd;
}

inn::RunConfig build_config(CLI::App& cmd, const PipelineArgs& a) {
  inn::RunConfig config;
  if (!a.config_file.empty())
    for (const auto& [key, value] : inn::read_config_file(a.config_file)) config.set(key, value);
  for (const auto& key : kValueKeys)
    if (cmd.count(flag_name(key)) > 0) config.set(key, a.values.at(key));
  for (const auto& [key, value] : a.overrides) config.set(key, value);
  return config;
}

void print_pipeline_summary(const inn::PipelineResult& r) {
  print_noise_summary(r.dataset);
  if (r.report) {
    for (const auto& [kind, s] : r.report->stability)
      std::cout << kind << ": final AUC " << fixed(s.final) << ", best " << fixed(s.max) << " @" << s.best_epoch
                << ", range " << fixed(s.range) << '\n';
  }
  std::cout << "labeled " << r.inn_split.labeled.size() << ", unlabeled " << r.inn_split.unlabeled.size() << '\n';
  if (!r.l_sweep.empty()) {
    bool nondecreasing = true;
    std::cout << "L sweep:";
    for (std::size_t i = 0; i < r.l_sweep.size(); ++i) {
      std::cout << " L=" << r.l_sweep[i].L << " " << fixed(r.l_sweep[i].auc);
      if (i > 0 && r.l_sweep[i].auc < r.l_sweep[i - 1].auc) nondecreasing = false;
    }
    std::cout << (nondecreasing ? " (nondecreasing)" : " (not monotone)") << '\n';
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clean-sample identification from predictions between neighbors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", inn::kVersion);

  SynthArgs synth_args;
  CorruptArgs corrupt_args;
  TrainArgs train_args;
  ScoreArgs score_args;
  OracleArgs oracle_args;
  SplitArgs split_args;
  EvalArgs eval_args;
  PipelineArgs pipeline_args, timing_args;
  add_synth(app, synth_args);
  add_corrupt(app, corrupt_args);
  add_train(app, train_args);
  add_score(app, score_args);
  add_oracle(app, oracle_args);
  add_split(app, split_args);
  add_eval(app, eval_args);

  auto* pipeline = add_run_options(app, "pipeline", "Run every stage end to end", pipeline_args);
  pipeline->callback([&] {
    const auto result = inn::run_pipeline(build_config(*pipeline, pipeline_args));
    print_pipeline_summary(result);
  });
  auto* timing = add_run_options(app, "timing", "Run the pipeline and report wall-clock time per phase", timing_args);
  timing->callback([&] {
    const auto result = inn::run_pipeline(build_config(*timing, timing_args));
    std::cout << inn::timing_json(result.timer) << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const inn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
