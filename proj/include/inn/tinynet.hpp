// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#pragma once

// Feed-forward softmax classifier with hand-written backpropagation.
//
// Hidden layers use ReLU, the output layer softmax. The last hidden activation doubles as the feature
// embedding used for neighbor search. Losses take soft targets, so plain one-hot batches and MixUp
// batches share one code path.

#include "inn/common.hpp"
#include "inn/data.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace inn {

enum class LossKind { CE, CENE, MixUp };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

/// Probabilities are clamped to [kProbFloor, 1] inside every log.
inline constexpr double kProbFloor = 1e-12;

template <typename Scalar>
struct Mlp {
  std::vector<int> layer_dims;
  std::vector<MatrixX<Scalar>> weights;  // weights[l] is dims[l+1] x dims[l]
  std::vector<VectorX<Scalar>> biases;

  int input_dim() const { return layer_dims.front(); }
  int num_classes() const { return layer_dims.back(); }
  int feature_dim() const { return layer_dims[layer_dims.size() - 2]; }
  std::size_t num_layers() const { return weights.size(); }

  Eigen::Index parameter_count() const {
    Eigen::Index total = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) total += weights[l].size() + biases[l].size();
    return total;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  static Mlp zeros_like(const Mlp& other) {
    Mlp out;
    out.layer_dims = other.layer_dims;
    for (std::size_t l = 0; l < other.weights.size(); ++l) {
      out.weights.push_back(MatrixX<Scalar>::Zero(other.weights[l].rows(), other.weights[l].cols()));
      out.biases.push_back(VectorX<Scalar>::Zero(other.biases[l].size()));
    }
    return out;
  }

  bool operator==(const Mlp& other) const {
    if (layer_dims != other.layer_dims) return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
    return true;
  }
};

using Model = Mlp<double>;

/// Weights and biases uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn layer by layer from one
/// mt19937_64 stream seeded with `seed`.
Model init_model(std::span<const int> layer_dims, std::uint64_t seed);

template <typename Scalar>
struct Activations {
  MatrixX<Scalar> probs;     // n x K, row-stochastic
  MatrixX<Scalar> features;  // n x feature_dim (penultimate layer)
};

template <typename Scalar>
void softmax_rows_inplace(MatrixX<Scalar>& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

namespace detail {

template <typename Scalar>
void check_input(const Mlp<Scalar>& model, const MatrixX<Scalar>& inputs) {
  require(!model.weights.empty(), "model has no layers");
  require(inputs.cols() == model.input_dim(),
          "input dimension " + std::to_string(inputs.cols()) + " does not match model input " +
              std::to_string(model.input_dim()));
}

template <typename Scalar>
MatrixX<Scalar> affine(const MatrixX<Scalar>& a, const MatrixX<Scalar>& w, const VectorX<Scalar>& b) {
  MatrixX<Scalar> z = a * w.transpose();
  z.rowwise() += b.transpose();
  return z;
}

}  // namespace detail

template <typename Scalar>
Activations<Scalar> forward(const Mlp<Scalar>& model, const std::type_identity_t<MatrixX<Scalar>>& inputs) {
  detail::check_input(model, inputs);
  Activations<Scalar> out;
  MatrixX<Scalar> a = inputs;
  const std::size_t last = model.num_layers() - 1;
  for (std::size_t l = 0; l < last; ++l) a = detail::affine(a, model.weights[l], model.biases[l]).cwiseMax(Scalar(0));
  out.probs = detail::affine(a, model.weights[last], model.biases[last]);
  softmax_rows_inplace(out.probs);
  out.features = std::move(a);
  return out;
}

/// Class probabilities only.
template <typename Scalar>
MatrixX<Scalar> predict(const Mlp<Scalar>& model, const std::type_identity_t<MatrixX<Scalar>>& inputs) {
  return forward(model, inputs).probs;
}

template <typename Scalar>
MatrixX<Scalar> features(const Mlp<Scalar>& model, const std::type_identity_t<MatrixX<Scalar>>& inputs) {
  return forward(model, inputs).features;
}

/// Per-row objective for soft targets: CE(t, p) = -Σ t_k log p_k, plus Σ p_k log p_k for CE+NE.
/// MixUp batches use the CE objective on their mixed targets.
template <typename Scalar>
VectorX<Scalar> objective_rows(const MatrixX<Scalar>& probs, const MatrixX<Scalar>& targets, LossKind kind) {
  const auto logp = probs.array().max(Scalar(kProbFloor)).log();
  VectorX<Scalar> loss = -(targets.array() * logp).rowwise().sum().matrix();
  if (kind == LossKind::CENE) loss += (probs.array() * logp).rowwise().sum().matrix();
  return loss;
}

struct Batch {
  MatrixXd inputs;
  MatrixXd targets;  // n x K soft targets

  Eigen::Index size() const { return inputs.rows(); }
};

/// One-hot batch from dataset rows (observed labels).
Batch make_batch(const Dataset& ds, std::span<const Eigen::Index> rows);

/// λ·a + (1-λ)·b on inputs and targets, pairing row i of a with row i of b.
Batch mixup_batch(const Batch& a, const Batch& b, double lambda);

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  Mlp<Scalar> grads;
};

/// Mean objective over the batch and its exact gradient (including the zero slope of the clamped log).
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const Mlp<Scalar>& model, const MatrixX<Scalar>& inputs,
                                  const MatrixX<Scalar>& targets, LossKind kind) {
  detail::check_input(model, inputs);
  require(inputs.rows() > 0, "loss_and_grad: empty batch");
  require(targets.rows() == inputs.rows() && targets.cols() == model.num_classes(),
          "loss_and_grad: target shape does not match batch");
  if (!model.all_finite()) fail(ErrorKind::NumericFailure, "loss_and_grad: non-finite model parameters");

  const std::size_t layers = model.num_layers();
  std::vector<MatrixX<Scalar>> acts;  // acts[l] is the input of layer l
  acts.reserve(layers);
  acts.push_back(inputs);
  for (std::size_t l = 0; l + 1 < layers; ++l)
    acts.push_back(detail::affine(acts.back(), model.weights[l], model.biases[l]).cwiseMax(Scalar(0)));
  MatrixX<Scalar> probs = detail::affine(acts.back(), model.weights[layers - 1], model.biases[layers - 1]);
  softmax_rows_inplace(probs);

  const Scalar n = static_cast<Scalar>(inputs.rows());
  LossAndGrad<Scalar> out;
  out.loss = objective_rows(probs, targets, kind).sum() / n;
  if (!std::isfinite(static_cast<double>(out.loss))) fail(ErrorKind::NumericFailure, "loss_and_grad: non-finite loss");

  // d loss / d p, then through the softmax Jacobian.
  const auto unclamped = (probs.array() > Scalar(kProbFloor)).template cast<Scalar>();
  MatrixX<Scalar> dprob = -(targets.array() * unclamped / probs.array().max(Scalar(kProbFloor))).matrix();
  if (kind == LossKind::CENE)
    dprob.array() += probs.array().max(Scalar(kProbFloor)).log() + unclamped;
  const VectorX<Scalar> inner = (probs.array() * dprob.array()).rowwise().sum().matrix();
  MatrixX<Scalar> delta = (probs.array() * (dprob.colwise() - inner).array()).matrix() / n;

  out.grads = Mlp<Scalar>::zeros_like(model);
  for (std::size_t l = layers; l-- > 0;) {
    out.grads.weights[l] = delta.transpose() * acts[l];
    out.grads.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    MatrixX<Scalar> upstream = delta * model.weights[l];
    delta = (upstream.array() * (acts[l].array() > Scalar(0)).template cast<Scalar>()).matrix();
  }
  return out;
}

template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const Mlp<Scalar>& model, const Batch& batch, LossKind kind) {
  return loss_and_grad<Scalar>(model, batch.inputs, batch.targets, kind);
}

struct TrainConfig {
  LossKind loss_kind = LossKind::CE;
  int epochs = 300;
  int batch_size = 128;
  double lr0 = 0.02;
  double momentum = 0.9;
  double lr_drop_factor = 5.0;
  double mixup_alpha = 1.0;
  std::uint64_t seed = 0;
  std::optional<int> checkpoint_every;
  std::vector<int> checkpoint_epochs;  // explicit epochs, merged with checkpoint_every

  void validate() const;
  bool is_checkpoint(int completed_epochs) const;
};

/// Step schedule for 0-based epoch t of T: lr0 before floor(T/2), lr0/f until floor(3T/4), lr0/f² after.
double learning_rate(const TrainConfig& config, int epoch);

struct OptState {
  Model velocity;

  static OptState for_model(const Model& model) { return {Model::zeros_like(model)}; }
};

/// Heavy-ball update v <- μ v + g, θ <- θ - lr v.
void sgd_step(Model& model, OptState& state, const Model& grads, double lr, double momentum);

struct Checkpoint {
  int epoch = 0;
  Model model;
};

struct TrainResult {
  Model model;
  std::vector<Checkpoint> checkpoints;
  std::vector<double> epoch_loss;  // mean mini-batch objective per epoch
};

/// Mini-batch SGD with per-epoch shuffling. MixUp draws one λ ~ Beta(α, α) per mini-batch and pairs the
/// batch with a random permutation of itself. Throws numeric-failure (epoch and batch in the message) as
/// soon as a loss turns non-finite.
TrainResult train(Model model, const Dataset& ds, const TrainConfig& config);

/// Per-sample CE or CE+NE of the observed labels; smaller means cleaner for the small-loss baseline.
VectorXd per_sample_loss(const Model& model, const Dataset& ds, LossKind kind);

// Checkpoint binary layout, all little-endian:
//   "INNM" | u32 version (1) | u32 layer-dim count m | m x u32 dims |
//   for each layer l: weights[l] row-major (dims[l+1] x dims[l]) f64, then biases[l] f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// Writes `path` plus a `<path>.json` sidecar with the training config and epoch.
void save_checkpoint(const Model& model, const TrainConfig& config, int epoch, const std::filesystem::path& path);

}  // namespace inn
