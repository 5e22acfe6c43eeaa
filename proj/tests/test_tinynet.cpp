// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "gradcheck.hpp"
#include "test_util.hpp"

#include "inn/tinynet.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

using namespace inn;
using inn::testing::TempDir;

namespace {

const std::vector<int> kSmall{2, 8, 3};

// Straightforward scalar re-implementation of the forward pass.
std::vector<double> naive_forward(const Model& m, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    std::vector<double> z(static_cast<std::size_t>(m.weights[l].rows()));
    for (Eigen::Index o = 0; o < m.weights[l].rows(); ++o) {
      double s = m.biases[l](o);
      for (Eigen::Index i = 0; i < m.weights[l].cols(); ++i) s += m.weights[l](o, i) * a[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = (l + 1 < m.num_layers()) ? std::max(0.0, s) : s;
    }
    a = z;
  }
  double mx = *std::max_element(a.begin(), a.end());
  double total = 0.0;
  for (double& v : a) total += (v = std::exp(v - mx));
  for (double& v : a) v /= total;
  return a;
}

Dataset two_blobs(Eigen::Index n, std::uint64_t seed) { return synth(SynthKind::Blobs, n, 2, 2, 0.1, seed); }

}  // namespace

TEST_CASE("init_model is deterministic and validates dims") {
  CHECK(init_model(kSmall, 7) == init_model(kSmall, 7));
  CHECK_FALSE(init_model(kSmall, 7) == init_model(kSmall, 8));
  CHECK_THROWS_AS(init_model(std::vector<int>{4}, 1), Error);
  CHECK_THROWS_AS(init_model(std::vector<int>{4, 0, 2}, 1), Error);
  CHECK_THROWS_AS(init_model(std::vector<int>{}, 1), Error);

  const auto m = init_model(std::vector<int>{4, 16, 16, 10}, 3);
  CHECK(m.feature_dim() == 16);
  CHECK(m.num_classes() == 10);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.weights[l].cols()));
    CHECK(m.weights[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(m.biases[l].cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("forward returns row-stochastic probabilities and penultimate features") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = init_model(std::vector<int>{4, 16, 16, 10}, static_cast<std::uint64_t>(trial));
    const MatrixXd x = inn::testing::random_matrix(9, 4, rng, 3.0);
    const auto act = forward(m, x);
    CHECK(act.probs.rows() == 9);
    CHECK(act.features.cols() == 16);
    CHECK((act.probs.array() >= 0.0).all());
    CHECK((act.probs.array() <= 1.0).all());
    CHECK((act.probs.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
  }
  const auto m = init_model(kSmall, 1);
  CHECK_THROWS_AS(forward(m, MatrixXd::Zero(3, 5)), Error);
}

TEST_CASE("forward matches a scalar re-implementation") {
  std::mt19937_64 rng(5);
  const auto m = init_model(std::vector<int>{3, 6, 5, 4}, 21);
  const MatrixXd x = inn::testing::random_matrix(7, 3, rng);
  const MatrixXd p = predict(m, x);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto ref = naive_forward(m, {x(r, 0), x(r, 1), x(r, 2)});
    for (Eigen::Index k = 0; k < 4; ++k) CHECK(std::abs(p(r, k) - ref[static_cast<std::size_t>(k)]) <= 1e-12);
  }
}

TEST_CASE("zero output layer yields the uniform distribution") {
  auto m = init_model(kSmall, 2);
  m.weights.back().setZero();
  m.biases.back().setZero();
  std::mt19937_64 rng(3);
  const MatrixXd p = predict(m, inn::testing::random_matrix(5, 2, rng));
  CHECK((p.array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("analytic objective values") {
  // uniform predictor, K = 10
  MatrixXd probs = MatrixXd::Constant(3, 10, 0.1);
  MatrixXd targets = MatrixXd::Zero(3, 10);
  targets(0, 1) = targets(1, 4) = targets(2, 9) = 1.0;
  const VectorXd ce = objective_rows<double>(probs, targets, LossKind::CE);
  const VectorXd cene = objective_rows<double>(probs, targets, LossKind::CENE);
  CHECK((ce.array() - std::log(10.0)).abs().maxCoeff() <= 1e-9);
  CHECK(cene.cwiseAbs().maxCoeff() <= 1e-9);

  // exact one-hot predictor: clamped logs keep everything finite and CE at 0
  MatrixXd onehot = targets;
  const VectorXd zero = objective_rows<double>(onehot, targets, LossKind::CE);
  CHECK(zero.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(objective_rows<double>(onehot, targets, LossKind::CENE).allFinite());
}

TEST_CASE("gradients match central finite differences") {
  const std::vector<int> dims{3, 5, 4};
  for (auto kind : {LossKind::CE, LossKind::CENE, LossKind::MixUp}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto model = init_model(dims, 100 + seed);
      const auto [x, t] = inn::testing::gradcheck_batch(6, 3, 4, kind, 200 + seed);
      CAPTURE(to_string(kind));
      CHECK(inn::testing::max_gradient_error(model, x, t, kind) <= 1e-4);
    }
  }
}

TEST_CASE("loss_and_grad rejects non-finite parameters and empty batches") {
  auto m = init_model(kSmall, 4);
  const auto [x, t] = inn::testing::gradcheck_batch(4, 2, 3, LossKind::CE, 1);
  CHECK_THROWS_AS(loss_and_grad(m, MatrixXd(0, 2), MatrixXd(0, 3), LossKind::CE), Error);
  m.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    loss_and_grad(m, x, t, LossKind::CE);
    FAIL("expected numeric failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericFailure);
  }
}

TEST_CASE("mixup_batch endpoints and symmetry") {
  Batch a{MatrixXd::Constant(2, 3, 1.0), MatrixXd::Zero(2, 4)};
  Batch b{MatrixXd::Constant(2, 3, -2.0), MatrixXd::Zero(2, 4)};
  a.targets(0, 0) = a.targets(1, 0) = 1.0;
  b.targets(0, 1) = b.targets(1, 1) = 1.0;
  CHECK(mixup_batch(a, b, 1.0).inputs == a.inputs);
  CHECK(mixup_batch(a, b, 1.0).targets == a.targets);
  CHECK(mixup_batch(a, b, 0.0).inputs == b.inputs);
  CHECK(mixup_batch(a, b, 0.0).targets == b.targets);
  const auto half = mixup_batch(a, b, 0.5);
  CHECK(half.targets(0, 0) == 0.5);
  CHECK(half.targets(0, 1) == 0.5);
  CHECK(half.targets(0, 2) == 0.0);
  CHECK(half.inputs(1, 2) == -0.5);
  Batch c{MatrixXd::Zero(3, 3), MatrixXd::Zero(3, 4)};
  CHECK_THROWS_AS(mixup_batch(a, c, 0.5), Error);
  CHECK_THROWS_AS(mixup_batch(a, b, 1.5), Error);
}

TEST_CASE("learning-rate schedule has two drops at floor(T/2) and floor(3T/4)") {
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.lr0 = 0.02;
  CHECK(learning_rate(cfg, 149) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(learning_rate(cfg, 150) == doctest::Approx(0.004).epsilon(1e-15));
  CHECK(learning_rate(cfg, 224) == doctest::Approx(0.004).epsilon(1e-15));
  CHECK(learning_rate(cfg, 225) == doctest::Approx(0.0008).epsilon(1e-15));
  for (int T : {1, 2, 3, 7, 50, 301}) {
    cfg.epochs = T;
    int drops = 0;
    for (int e = 1; e < T; ++e) drops += learning_rate(cfg, e) < learning_rate(cfg, e - 1);
    CHECK(drops <= 2);
    for (int e = 0; e < T; ++e) {
      const double want = e < T / 2 ? 0.02 : e < 3 * T / 4 ? 0.004 : 0.0008;
      CHECK(learning_rate(cfg, e) == doctest::Approx(want).epsilon(1e-15));
    }
  }
}

TEST_CASE("train with zero epochs returns the initial model") {
  const auto ds = two_blobs(64, 1);
  const auto m = init_model(std::vector<int>{2, 8, 2}, 3);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK(train(m, ds, cfg).model == m);
}

TEST_CASE("train fits separable blobs and is deterministic") {
  const auto ds = two_blobs(400, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 9;
  cfg.checkpoint_epochs = {10, 50};
  const auto m0 = init_model(std::vector<int>{2, 16, 2}, 4);
  const auto run = train(m0, ds, cfg);
  const MatrixXd p = predict(run.model, ds.features);
  int correct = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    Eigen::Index arg;
    p.row(i).maxCoeff(&arg);
    correct += static_cast<int>(arg) == ds.labels[static_cast<std::size_t>(i)];
  }
  CHECK(correct >= 0.99 * ds.size());
  REQUIRE(run.checkpoints.size() == 2);
  CHECK(run.checkpoints[0].epoch == 10);
  CHECK(run.checkpoints[1].model == run.model);
  CHECK(run.epoch_loss.size() == 50);

  const auto again = train(m0, ds, cfg);
  CHECK(again.model == run.model);

  cfg.loss_kind = LossKind::MixUp;
  CHECK(train(m0, ds, cfg).model == train(m0, ds, cfg).model);
}

TEST_CASE("divergence aborts with a numeric failure") {
  const auto ds = synth(SynthKind::Blobs, 256, 3, 2, 0.5, 1);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr0 = 1e200;
  try {
    train(init_model(std::vector<int>{2, 8, 3}, 1), ds, cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericFailure);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("per_sample_loss matches scalar recomputation") {
  const auto ds = synth(SynthKind::Blobs, 30, 3, 2, 0.5, 5);
  const auto m = init_model(std::vector<int>{2, 6, 3}, 8);
  const VectorXd ce = per_sample_loss(m, ds, LossKind::CE);
  const VectorXd cene = per_sample_loss(m, ds, LossKind::CENE);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const auto p = naive_forward(m, {ds.features(i, 0), ds.features(i, 1)});
    const double want_ce = -std::log(p[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])]);
    double ne = 0.0;
    for (double v : p) ne += v * std::log(v);
    CHECK(std::abs(ce(i) - want_ce) <= 1e-12);
    CHECK(std::abs(cene(i) - (want_ce + ne)) <= 1e-12);
  }
  CHECK_THROWS_AS(per_sample_loss(m, ds, LossKind::MixUp), Error);
}

TEST_CASE("model files round-trip bit for bit") {
  TempDir dir("model");
  const auto m = init_model(std::vector<int>{5, 7, 3, 4}, 12);
  save_model(m, dir / "m.bin");
  CHECK(load_model(dir / "m.bin") == m);

  TrainConfig cfg;
  save_checkpoint(m, cfg, 17, dir / "ck.bin");
  CHECK(load_model(dir / "ck.bin") == m);
  CHECK(std::filesystem::exists(dir / "ck.bin.json"));

  std::ofstream(dir / "bad.bin") << "NOPE";
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), Error);
  CHECK_THROWS_AS(load_model(dir / "missing.bin"), Error);
}
