// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#include "inn/mixture.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace inn {

namespace {

constexpr double kBetaMin = 1e-2;
constexpr double kBetaMax = 1e4;
constexpr double kVarianceFloor = 1e-6;
constexpr double kMinResponsibility = 1e-12;

double log_beta_pdf(double x, double a, double b) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double component_log_pdf(const MixtureFit& fit, int k, double x) {
  const double p = k == 0 ? fit.first[0] : fit.first[1];
  const double q = k == 0 ? fit.second[0] : fit.second[1];
  return fit.kind == MixtureKind::Beta ? log_beta_pdf(x, p, q) : log_normal_pdf(x, p, q);
}

/// E-step: fills responsibilities and returns the observed log-likelihood.
double expectation(const MixtureFit& fit, const VectorXd& x, MatrixXd& resp) {
  resp.resize(x.size(), 2);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double l0 = std::log(fit.weights[0]) + component_log_pdf(fit, 0, x(i));
    const double l1 = std::log(fit.weights[1]) + component_log_pdf(fit, 1, x(i));
    const double top = std::max(l0, l1);
    const double lse = top + std::log(std::exp(l0 - top) + std::exp(l1 - top));
    resp(i, 0) = std::exp(l0 - lse);
    resp(i, 1) = std::exp(l1 - lse);
    ll += lse;
  }
  return ll;
}

/// Hard median split: the upper half by rank (ties by position) goes to component 1.
MatrixXd median_split(const VectorXd& x, bool swap) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a) < x(b); });
  MatrixXd resp = MatrixXd::Zero(x.size(), 2);
  const std::size_t half = order.size() / 2;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const int k = (r >= half) != swap ? 1 : 0;
    resp(order[r], k) = 1.0;
  }
  return resp;
}

struct WeightedMoments {
  double total = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

WeightedMoments moments(const VectorXd& x, const Eigen::Ref<const VectorXd>& w) {
  WeightedMoments m;
  m.total = w.sum();
  if (m.total < kMinResponsibility) return m;
  m.mean = w.dot(x) / m.total;
  m.variance = w.dot((x.array() - m.mean).square().matrix()) / m.total;
  return m;
}

std::array<double, 2> beta_from_moments(double mean, double variance) {
  mean = std::clamp(mean, 1e-6, 1.0 - 1e-6);
  const double limit = mean * (1.0 - mean);
  double common = variance < limit ? limit / variance - 1.0 : 2.0 * kBetaMin;
  double a = mean * common;
  double b = (1.0 - mean) * common;
  if (const double top = std::max(a, b); top > kBetaMax) {
    a *= kBetaMax / top;
    b *= kBetaMax / top;
  }
  return {std::clamp(a, kBetaMin, kBetaMax), std::clamp(b, kBetaMin, kBetaMax)};
}

double weighted_beta_ll(const VectorXd& x, const Eigen::Ref<const VectorXd>& w, double a, double b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) total += w(i) * log_beta_pdf(x(i), a, b);
  return total;
}

[[noreturn]] void zero_responsibility(const MixtureFit& fit, int component) {
  std::string trace;
  for (double ll : fit.log_likelihood) trace += (trace.empty() ? "" : ", ") + detail::format_double(ll);
  fail(ErrorKind::FitFailure, to_string(fit.kind) + " mixture: component " + std::to_string(component) +
                                  " lost all responsibility after " + std::to_string(fit.iterations) +
                                  " iterations; log-likelihood trace [" + trace + "]");
}

/// M-step. Returns whether the Gaussian variance floor bound.
bool maximization(MixtureFit& fit, const VectorXd& x, const MatrixXd& resp, double variance_floor, bool guard) {
  bool floored = false;
  for (int k = 0; k < 2; ++k) {
    const auto m = moments(x, resp.col(k));
    if (m.total < kMinResponsibility) zero_responsibility(fit, k);
    fit.weights[k] = m.total / static_cast<double>(x.size());
    const double variance = std::max(m.variance, variance_floor);
    if (fit.kind == MixtureKind::Gaussian) {
      floored = floored || m.variance < variance_floor;
      fit.first[k] = m.mean;
      fit.second[k] = std::sqrt(variance);
    } else {
      const auto proposal = beta_from_moments(m.mean, variance);
      if (guard && weighted_beta_ll(x, resp.col(k), proposal[0], proposal[1]) <
                       weighted_beta_ll(x, resp.col(k), fit.first[k], fit.second[k]))
        continue;
      fit.first[k] = proposal[0];
      fit.second[k] = proposal[1];
    }
  }
  return floored;
}

MixtureFit degenerate_fit(MixtureKind kind, double value) {
  MixtureFit fit;
  fit.kind = kind;
  fit.degenerate = true;
  fit.converged = true;
  if (kind == MixtureKind::Beta) {
    fit.first = {1.0, 1.0};
    fit.second = {1.0, 1.0};
  } else {
    fit.first = {value, value};
    fit.second = {std::sqrt(kVarianceFloor), std::sqrt(kVarianceFloor)};
  }
  return fit;
}

MixtureFit run_em(MixtureKind kind, const VectorXd& x, const MixtureOptions& options, double variance_floor) {
  MixtureFit fit;
  fit.kind = kind;
  fit.first = {0.0, 0.0};
  fit.second = {1.0, 1.0};
  maximization(fit, x, median_split(x, options.swap_init), variance_floor, false);

  MatrixXd resp;
  bool floored = false;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    const double ll = expectation(fit, x, resp);
    if (!std::isfinite(ll)) fail(ErrorKind::FitFailure, to_string(kind) + " mixture: non-finite log-likelihood");
    fit.log_likelihood.push_back(ll);
    const auto n = fit.log_likelihood.size();
    if (n >= 2 && std::abs(ll - fit.log_likelihood[n - 2]) <= options.tol * (1.0 + std::abs(ll))) {
      fit.converged = true;
      break;
    }
    floored = maximization(fit, x, resp, variance_floor, true);
    fit.iterations = iter + 1;
  }
  if (kind == MixtureKind::Gaussian) fit.degenerate = floored;
  const bool second_larger = fit.mean(1) > fit.mean(0);
  fit.clean_component = (kind == MixtureKind::Beta) == second_larger ? 1 : 0;
  return fit;
}

}  // namespace

NormalizedScores normalize_scores(const Eigen::Ref<const VectorXd>& scores) {
  require(scores.size() > 0, "normalize_scores: empty input");
  require(scores.allFinite(), "normalize_scores: non-finite score");
  NormalizedScores out;
  const double lo = scores.minCoeff();
  const double hi = scores.maxCoeff();
  if (hi == lo) {
    out.values = VectorXd::Constant(scores.size(), 0.5);
    out.degenerate = true;
    return out;
  }
  out.values = ((scores.array() - lo) / (hi - lo)).max(kNormalizeClamp).min(1.0 - kNormalizeClamp).matrix();
  return out;
}

std::string to_string(MixtureKind kind) { return kind == MixtureKind::Beta ? "beta" : "gaussian"; }

double MixtureFit::mean(int component) const {
  if (kind == MixtureKind::Beta) return first[component] / (first[component] + second[component]);
  return first[component];
}

MixtureFit fit_beta_mixture(const Eigen::Ref<const VectorXd>& scores, const MixtureOptions& options) {
  require(scores.size() >= 10, "fit_beta_mixture: need at least 10 scores");
  require((scores.array() > 0.0).all() && (scores.array() < 1.0).all(), "fit_beta_mixture: scores must lie in (0, 1)");
  const VectorXd x = scores;
  const double range = x.maxCoeff() - x.minCoeff();
  if (range == 0.0) return degenerate_fit(MixtureKind::Beta, x(0));
  return run_em(MixtureKind::Beta, x, options, std::pow(1e-3 * range, 2));
}

MixtureFit fit_gaussian_mixture(const Eigen::Ref<const VectorXd>& losses, const MixtureOptions& options) {
  require(losses.size() >= 10, "fit_gaussian_mixture: need at least 10 values");
  require(losses.allFinite(), "fit_gaussian_mixture: non-finite value");
  const VectorXd x = losses;
  const double range = x.maxCoeff() - x.minCoeff();
  if (range == 0.0) return degenerate_fit(MixtureKind::Gaussian, x(0));
  return run_em(MixtureKind::Gaussian, x, options, std::max(std::pow(1e-3 * range, 2), kVarianceFloor));
}

MatrixXd responsibilities(const MixtureFit& fit, const Eigen::Ref<const VectorXd>& values) {
  MatrixXd resp;
  expectation(fit, values, resp);
  return resp;
}

VectorXd clean_posterior(const MixtureFit& fit, const Eigen::Ref<const VectorXd>& values) {
  if (fit.degenerate && fit.first[0] == fit.first[1] && fit.second[0] == fit.second[1])
    return VectorXd::Ones(values.size());
  return responsibilities(fit, values).col(fit.clean_component);
}

SplitResult split(const MixtureFit& fit, const Eigen::Ref<const VectorXd>& values, double threshold,
                  std::span<const SampleId> ids) {
  require(ids.empty() || static_cast<Eigen::Index>(ids.size()) == values.size(), "split: id count mismatch");
  SplitResult out;
  out.threshold = threshold;
  out.posterior = clean_posterior(fit, values);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const SampleId id = ids.empty() ? i : ids[i];
    out.ids.push_back(id);
    (out.posterior(i) >= threshold ? out.labeled : out.unlabeled).push_back(id);
  }
  return out;
}

std::optional<double> split_cut(const SplitResult& result, const Eigen::Ref<const VectorXd>& scores,
                                bool higher_is_cleaner) {
  const Eigen::Index n = scores.size();
  require(n == result.posterior.size(), "split_cut: size mismatch");
  // Orient so that larger means cleaner.
  const VectorXd s = higher_is_cleaner ? VectorXd(scores) : VectorXd(-scores);
  double min_labeled = std::numeric_limits<double>::infinity();
  double max_unlabeled = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (result.posterior(i) >= result.threshold)
      min_labeled = std::min(min_labeled, s(i));
    else
      max_unlabeled = std::max(max_unlabeled, s(i));
  }
  if (max_unlabeled >= min_labeled) return std::nullopt;
  // Nothing labeled: any cut above every score works.
  const double cut =
      std::isinf(min_labeled) ? std::nextafter(max_unlabeled, std::numeric_limits<double>::infinity()) : min_labeled;
  return higher_is_cleaner ? cut : -cut;
}

std::string fit_json(const MixtureFit& fit) {
  nlohmann::ordered_json doc;
  doc["kind"] = to_string(fit.kind);
  const bool beta = fit.kind == MixtureKind::Beta;
  auto& comps = doc["components"];
  comps = nlohmann::ordered_json::array();
  for (int k = 0; k < 2; ++k) {
    nlohmann::ordered_json c;
    c[beta ? "a" : "mean"] = fit.first[k];
    c[beta ? "b" : "sd"] = fit.second[k];
    c["weight"] = fit.weights[k];
    c["component_mean"] = fit.mean(k);
    comps.push_back(std::move(c));
  }
  doc["clean_component"] = fit.clean_component;
  doc["iterations"] = fit.iterations;
  doc["converged"] = fit.converged;
  doc["degenerate"] = fit.degenerate;
  doc["final_log_likelihood"] =
      fit.log_likelihood.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(fit.log_likelihood.back());
  doc["log_likelihood_trace"] = fit.log_likelihood;
  return doc.dump(2);
}

void write_fit(const MixtureFit& fit, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << fit_json(fit) << '\n';
}

void write_split(const SplitResult& result, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "id,posterior,assignment\n";
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    const double w = result.posterior(static_cast<Eigen::Index>(i));
    out << result.ids[i] << ',' << detail::format_double(w) << ','
        << (w >= result.threshold ? "labeled" : "unlabeled") << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

SplitResult read_split(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const std::string ctx = path.string();
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != "id,posterior,assignment")
    fail(ErrorKind::Io, ctx + ": expected header id,posterior,assignment");
  SplitResult out;
  std::vector<double> posterior;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim_cr(line);
    if (text.empty()) continue;
    const std::string where = ctx + ":" + std::to_string(line_no);
    const auto cells = detail::split(text);
    if (cells.size() != 3) fail(ErrorKind::Io, where + ": wrong column count");
    const auto id = detail::parse_int<SampleId>(cells[0], where);
    out.ids.push_back(id);
    posterior.push_back(detail::parse_double(cells[1], where));
    if (cells[2] == "labeled")
      out.labeled.push_back(id);
    else if (cells[2] == "unlabeled")
      out.unlabeled.push_back(id);
    else
      fail(ErrorKind::Io, where + ": unknown assignment");
  }
  out.posterior = Eigen::Map<const VectorXd>(posterior.data(), static_cast<Eigen::Index>(posterior.size()));
  return out;
}

}  // namespace inn
