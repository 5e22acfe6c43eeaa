// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/tinynet.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <random>

namespace inn {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "ce" || name == "CE") return LossKind::CE;
  if (name == "cene" || name == "ce+ne" || name == "CE+NE" || name == "CE_plus_NE") return LossKind::CENE;
  if (name == "mixup" || name == "MixUp") return LossKind::MixUp;
  fail(ErrorKind::InvalidArgument, "unknown loss kind: " + name);
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CE: return "ce";
    case LossKind::CENE: return "cene";
    case LossKind::MixUp: return "mixup";
  }
  return "?";
}

Model init_model(std::span<const int> layer_dims, std::uint64_t seed) {
  require(layer_dims.size() >= 2, "init_model: need at least input and output dims");
  require(std::all_of(layer_dims.begin(), layer_dims.end(), [](int d) { return d > 0; }),
          "init_model: layer dims must be positive");
  Model model;
  model.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixXd w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    VectorXd b(fan_out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  return model;
}

Batch make_batch(const Dataset& ds, std::span<const Eigen::Index> rows) {
  Batch batch;
  const auto n = static_cast<Eigen::Index>(rows.size());
  batch.inputs.resize(n, ds.dim());
  batch.targets = MatrixXd::Zero(n, ds.num_classes);
  for (Eigen::Index r = 0; r < n; ++r) {
    batch.inputs.row(r) = ds.features.row(rows[r]);
    batch.targets(r, ds.labels[rows[r]]) = 1.0;
  }
  return batch;
}

Batch mixup_batch(const Batch& a, const Batch& b, double lambda) {
  require(a.inputs.rows() == b.inputs.rows() && a.inputs.cols() == b.inputs.cols() &&
              a.targets.cols() == b.targets.cols(),
          "mixup_batch: batch shapes differ");
  require(lambda >= 0.0 && lambda <= 1.0, "mixup_batch: lambda must lie in [0, 1]");
  if (lambda == 1.0) return a;
  if (lambda == 0.0) return b;
  return {lambda * a.inputs + (1.0 - lambda) * b.inputs, lambda * a.targets + (1.0 - lambda) * b.targets};
}

void TrainConfig::validate() const {
  require(epochs >= 0, "train: epochs must be non-negative");
  require(batch_size > 0, "train: batch size must be positive");
  require(lr0 > 0.0, "train: lr0 must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "train: momentum must lie in [0, 1)");
  require(lr_drop_factor > 0.0, "train: lr drop factor must be positive");
  require(mixup_alpha > 0.0, "train: mixup alpha must be positive");
  if (checkpoint_every) require(*checkpoint_every > 0, "train: checkpoint_every must be positive");
}

bool TrainConfig::is_checkpoint(int completed_epochs) const {
  if (checkpoint_every && completed_epochs % *checkpoint_every == 0) return true;
  return std::find(checkpoint_epochs.begin(), checkpoint_epochs.end(), completed_epochs) != checkpoint_epochs.end();
}

double learning_rate(const TrainConfig& config, int epoch) {
  const int half = config.epochs / 2;
  const int three_quarters = 3 * config.epochs / 4;
  if (epoch < half) return config.lr0;
  if (epoch < three_quarters) return config.lr0 / config.lr_drop_factor;
  return config.lr0 / (config.lr_drop_factor * config.lr_drop_factor);
}

void sgd_step(Model& model, OptState& state, const Model& grads, double lr, double momentum) {
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    state.velocity.weights[l] = momentum * state.velocity.weights[l] + grads.weights[l];
    state.velocity.biases[l] = momentum * state.velocity.biases[l] + grads.biases[l];
    model.weights[l] -= lr * state.velocity.weights[l];
    model.biases[l] -= lr * state.velocity.biases[l];
  }
}

namespace {

double sample_beta(std::mt19937_64& rng, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

}  // namespace

TrainResult train(Model model, const Dataset& ds, const TrainConfig& config) {
  config.validate();
  ds.validate();
  require(ds.dim() == model.input_dim(), "train: dataset dimension does not match model input");
  require(ds.num_classes == model.num_classes(), "train: class count does not match model output");

  TrainResult result;
  OptState state = OptState::for_model(model);
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      Batch batch = make_batch(ds, std::span(order).subspan(start, stop - start));
      LossKind objective = config.loss_kind;
      if (config.loss_kind == LossKind::MixUp) {
        const double lambda = sample_beta(rng, config.mixup_alpha);
        std::vector<Eigen::Index> partner(static_cast<std::size_t>(batch.size()));
        std::iota(partner.begin(), partner.end(), Eigen::Index{0});
        std::shuffle(partner.begin(), partner.end(), rng);
        Batch shuffled{batch.inputs(partner, Eigen::all), batch.targets(partner, Eigen::all)};
        batch = mixup_batch(batch, shuffled, lambda);
        objective = LossKind::CE;
      }
      LossAndGrad<double> step;
      try {
        step = loss_and_grad(model, batch, objective);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NumericFailure) throw;
        fail(ErrorKind::NumericFailure, "train diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                            std::to_string(batches) + ": " + e.what());
      }
      sgd_step(model, state, step.grads, lr, config.momentum);
      loss_sum += step.loss;
      ++batches;
    }
    result.epoch_loss.push_back(batches > 0 ? loss_sum / batches : 0.0);
    if (config.is_checkpoint(epoch + 1)) result.checkpoints.push_back({epoch + 1, model});
  }
  result.model = std::move(model);
  return result;
}

VectorXd per_sample_loss(const Model& model, const Dataset& ds, LossKind kind) {
  require(kind == LossKind::CE || kind == LossKind::CENE, "per_sample_loss: loss kind must be ce or cene");
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(ds.size()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  const Batch batch = make_batch(ds, rows);
  return objective_rows<double>(predict(model, batch.inputs), batch.targets, kind);
}

namespace {

constexpr char kMagic[4] = {'I', 'N', 'N', 'M'};

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  auto out = detail::open_out(path, true);
  out.write(kMagic, 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.layer_dims.size()));
  for (int d : model.layer_dims) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& w = model.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) detail::write_le<double>(out, w(i, j));
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) detail::write_le<double>(out, model.biases[l](i));
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  const std::string ctx = path.string();
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) fail(ErrorKind::Io, ctx + ": bad magic");
  const auto version = detail::read_le<std::uint32_t>(in, ctx);
  if (version != kCheckpointVersion) fail(ErrorKind::Io, ctx + ": unsupported version " + std::to_string(version));
  const auto count = detail::read_le<std::uint32_t>(in, ctx);
  if (count < 2 || count > 64) fail(ErrorKind::Io, ctx + ": implausible layer count");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < count; ++i) dims.push_back(static_cast<int>(detail::read_le<std::uint32_t>(in, ctx)));
  Model model = init_model(dims, 0);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto& w = model.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = detail::read_le<double>(in, ctx);
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) model.biases[l](i) = detail::read_le<double>(in, ctx);
  }
  return model;
}

void save_checkpoint(const Model& model, const TrainConfig& config, int epoch, const std::filesystem::path& path) {
  save_model(model, path);
  nlohmann::ordered_json meta;
  meta["format"] = "INNM";
  meta["version"] = kCheckpointVersion;
  meta["epoch"] = epoch;
  meta["layer_dims"] = model.layer_dims;
  auto& cfg = meta["config"];
  cfg["loss_kind"] = to_string(config.loss_kind);
  cfg["epochs"] = config.epochs;
  cfg["batch_size"] = config.batch_size;
  cfg["lr0"] = config.lr0;
  cfg["momentum"] = config.momentum;
  cfg["lr_drop_factor"] = config.lr_drop_factor;
  cfg["mixup_alpha"] = config.mixup_alpha;
  cfg["seed"] = config.seed;
  auto out = detail::open_out(std::filesystem::path(path.string() + ".json"));
  out << meta.dump(2) << '\n';
}

}  // namespace inn
