// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance with
// the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License is distributed on
// an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

// Acceptance suite: one PASS/FAIL line per criterion, tolerances and runtime limits pinned below.
// Exit status is non-zero when any criterion fails.

// The shared test helpers pull in doctest; provide its runtime without its main.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "gradcheck.hpp"
#include "knn_oracle.hpp"
#include "samplers.hpp"
#include "test_util.hpp"

#include "inn/eval.hpp"
#include "inn/mixture.hpp"
#include "inn/neighbors.hpp"
#include "inn/oracle.hpp"
#include "inn/pipeline.hpp"
#include "inn/scorer.hpp"
#include "inn/tinynet.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace inn;

namespace {

// Tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kQuadTol = 1e-12;
constexpr double kOracleTol = 1e-9;
constexpr double kBetaMeanTol = 0.05;
constexpr double kGaussMeanTol = 0.1;
constexpr double kLlSlack = 1e-9;
constexpr double kFinalMargin = 0.02;     // criterion 8(b)
constexpr double kConsistencyMargin = 0.05;  // criterion 9
constexpr double kImbalancedFloor = 0.6;  // criterion 11
constexpr int kSeeds = 3;

std::filesystem::path g_work = "acceptance_runs";
int g_failures = 0;

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Runs one criterion, timing it; a runtime over the limit fails the criterion.
void criterion(const std::string& id, const std::string& title, double limit_seconds,
               const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = limit_seconds <= 0.0 || secs < limit_seconds;
  const bool pass = out.pass && in_time;
  if (!pass) ++g_failures;
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << title << " | " << out.detail << " | " << fmt(secs, 1)
            << "s";
  if (limit_seconds > 0.0) std::cout << " (limit " << fmt(limit_seconds, 0) << "s" << (in_time ? "" : ", EXCEEDED") << ")";
  std::cout << std::endl;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

void info(const std::string& id, const std::string& text) { std::cout << "INFO  [" << id << "] " << text << std::endl; }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---- shared end-to-end runs ---------------------------------------------------------------------------------

RunConfig blobs_config(std::uint64_t seed, Eigen::Index dim, double spread) {
  RunConfig c;
  c.seed = seed;
  c.n = 2000;
  c.num_classes = 4;
  c.dim = dim;
  c.spread = spread;
  c.noise = "symmetric";
  c.noise_rate = 0.3;
  c.save_models = false;
  return c;
}

struct SweepSummary {
  std::vector<double> inn_range, ce_range, inn_final, ce_final, mid_final;
  std::vector<double> gap_ce, gap_m_ce, gap_f, gap_m_f;
  std::vector<double> worst_integral_minus_midpoint;
  std::vector<std::vector<LSweepPoint>> l_sweeps;
};

void accumulate(SweepSummary& s, const PipelineResult& r) {
  const auto& rep = *r.report;
  s.inn_range.push_back(rep.stability.at(score_kind::kInn).range);
  s.ce_range.push_back(rep.stability.at(score_kind::kLossCe).range);
  s.inn_final.push_back(rep.stability.at(score_kind::kInn).final);
  s.ce_final.push_back(rep.stability.at(score_kind::kLossCe).final);
  s.mid_final.push_back(rep.stability.at(score_kind::kMidpoint).final);
  const auto& ce = r.consistency_ce.back();
  const auto& f = r.consistency_f.back();
  s.gap_ce.push_back(*ce.e_cor - *ce.e_inc);
  s.gap_m_ce.push_back(*ce.em_cor - *ce.em_inc);
  s.gap_f.push_back(*f.e_cor - *f.e_inc);
  s.gap_m_f.push_back(*f.em_cor - *f.em_inc);
  double worst = 1.0;
  for (const auto& t : r.tables)
    worst = std::min(worst, rep.auc_at(t.epoch, score_kind::kInn) - rep.auc_at(t.epoch, score_kind::kMidpoint));
  s.worst_integral_minus_midpoint.push_back(worst);
  s.l_sweeps.push_back(r.l_sweep);
}

std::string l_sweep_text(const std::vector<std::vector<LSweepPoint>>& runs) {
  std::ostringstream out;
  bool nondecreasing = true;
  for (std::size_t k = 0; k < runs.front().size(); ++k) {
    std::vector<double> v;
    for (const auto& run : runs) v.push_back(run[k].auc);
    out << "L=" << runs.front()[k].L << " " << fmt(mean(v)) << " ";
    if (k > 0) {
      std::vector<double> prev;
      for (const auto& run : runs) prev.push_back(run[k - 1].auc);
      nondecreasing = nondecreasing && mean(v) >= mean(prev);
    }
  }
  out << (nondecreasing ? "(nondecreasing)" : "(not monotone)");
  return out.str();
}

SweepSummary g_blobs2d;
bool g_blobs2d_done = false;

const SweepSummary& blobs2d() {
  if (!g_blobs2d_done) {
    for (int s = 0; s < kSeeds; ++s) {
      auto cfg = blobs_config(static_cast<std::uint64_t>(s), 2, 0.5);
      cfg.l_sweep = {1, 2, 5, 10};
      if (s == 0) cfg.out = g_work / "blobs2d_seed0_a";
      accumulate(g_blobs2d, run_pipeline(cfg));
    }
    g_blobs2d_done = true;
  }
  return g_blobs2d;
}

// ---- criteria -----------------------------------------------------------------------------------------------

Outcome gradient_check() {
  double worst = 0.0;
  const std::vector<int> dims{3, 5, 4};
  for (auto kind : {LossKind::CE, LossKind::CENE, LossKind::MixUp}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto model = init_model(dims, 1000 + seed);
      const auto [x, t] = inn::testing::gradcheck_batch(6, 3, 4, kind, 2000 + seed);
      worst = std::max(worst, inn::testing::max_gradient_error(model, x, t, kind, kGradStep));
    }
  }
  return {worst <= kGradTol, "max relative error " + sci(worst) + " (tol 1e-4, 3 losses x 5 seeds)"};
}

/// p(x) = base + (w·x)·delta; affine in the input, so affine in α along any segment.
struct AffineModel {
  Eigen::RowVectorXd w, base, delta;
};
MatrixXd predict(const AffineModel& m, const MatrixXd& inputs) {
  MatrixXd out(inputs.rows(), m.base.size());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) out.row(r) = m.base + inputs.row(r).dot(m.w) * m.delta;
  return out;
}

Outcome quadrature() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 5;
    AffineModel m{Eigen::RowVectorXd(d), Eigen::RowVectorXd(3), Eigen::RowVectorXd(3)};
    for (int j = 0; j < d; ++j) m.w(j) = unit(rng) - 0.5;
    for (int k = 0; k < 3; ++k) {
      m.base(k) = unit(rng);
      m.delta(k) = unit(rng) - 0.5;
    }
    Eigen::RowVectorXd x(d), xt(d);
    for (int j = 0; j < d; ++j) {
      x(j) = 4.0 * unit(rng) - 2.0;
      xt(j) = 4.0 * unit(rng) - 2.0;
    }
    const int y = trial % 3;
    // f_y at α = 1 is at x, at α = 0 at x̃; the integral of an affine function is the endpoint mean
    const double analytic = m.base(y) + 0.5 * (x.dot(m.w) + xt.dot(m.w)) * m.delta(y);
    for (int H : {1, 10}) worst = std::max(worst, std::abs(segment_integral(m, x, xt, y, H) - analytic));
  }
  return {worst <= kQuadTol, "max |trapezoid - analytic| " + sci(worst) + " over 200 segments x H in {1,10}"};
}

Outcome oracle_identity() {
  // 11 anchors (one per m = 0..10), each with 10 satellites; anchor m has m satellites sharing its label
  constexpr int L = 10;
  Dataset ds;
  ds.num_classes = 3;
  const int anchors = L + 1, n = anchors * (L + 1);
  ds.features = MatrixXd(n, 2);
  ds.labels.resize(n);
  ds.ids.resize(n);
  std::vector<NeighborSet> sets(static_cast<std::size_t>(n));
  for (int a = 0; a < anchors; ++a) {
    const int base = a * (L + 1);
    ds.features.row(base) << 10.0 * a, 0.0;
    ds.labels[base] = 0;
    for (int s = 1; s <= L; ++s) {
      const double angle = 2.0 * 3.14159265358979 * s / L;
      ds.features.row(base + s) << 10.0 * a + std::cos(angle), std::sin(angle);
      ds.labels[base + s] = s <= a ? 0 : 1 + s % 2;
    }
    for (int r = 0; r <= L; ++r) {
      auto& set = sets[static_cast<std::size_t>(base + r)];
      set.owner = base + r;
      for (int o = 0; o <= L; ++o) {
        if (o == r) continue;
        set.neighbors.push_back(base + o);
        set.labels.push_back(ds.labels[base + o]);
      }
    }
  }
  for (int i = 0; i < n; ++i) ds.ids[i] = i;
  ds.true_labels = ds.labels;

  double worst = 0.0;
  std::vector<bool> seen(L + 1, false);
  for (int H : {1, 10}) {
    const VectorXd s = mixup_interpolant_scores(ds, sets, {H, L});
    for (int i = 0; i < n; ++i) {
      const auto want = oracle_inn({ds.labels[i], ds.labels[i], sets[i].labels});
      worst = std::max(worst, std::abs(s(i) - want.value()));
      seen[static_cast<std::size_t>(want.numerator - L)] = true;
    }
  }
  const bool all_m = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  return {worst <= kOracleTol && all_m,
          "max |scorer - (1/2 + m/2L)| " + sci(worst) + ", m in 0..10 " + (all_m ? "all covered" : "NOT covered")};
}

Outcome lemma_separation() {
  const auto k2 = verify_separation(2, 10, SeparationCondition::StrictUniqueArgmax);
  const bool k2_ok = k2.min_clean == OracleScore{16, 20} && k2.max_noisy == OracleScore{14, 20};
  bool pure_ok = true;
  for (int K = 2; K <= 6; ++K)
    for (int L = 1; L <= 12; ++L) pure_ok = pure_ok && verify_separation(K, L, SeparationCondition::AllNeighborsTrue).gap == 0.5;

  // The general 1/(2K) claim under the majority condition is enumerated and reported, not asserted.
  int holds = 0, separated = 0, total = 0;
  std::string first_break;
  for (int K = 2; K <= 6; ++K) {
    for (int L = 1; L <= 12; ++L) {
      const auto r = verify_separation(K, L, SeparationCondition::StrictUniqueArgmax);
      if (!r.has_clean || !r.has_noisy) continue;
      ++total;
      holds += r.claimed_gap_holds;
      separated += r.separated;
      if (!r.separated && first_break.empty()) {
        std::ostringstream w;
        w << "K=" << K << " L=" << L << " clean counts [";
        for (std::size_t j = 0; j < r.min_clean_witness.counts.size(); ++j) w << (j ? "," : "") << r.min_clean_witness.counts[j];
        w << "] score " << fmt(r.min_clean.value(), 3) << " vs noisy label " << r.max_noisy_witness.label << " score "
          << fmt(r.max_noisy.value(), 3);
        first_break = w.str();
      }
    }
  }
  const auto k3 = verify_separation(3, 10, SeparationCondition::StrictUniqueArgmax);
  info("4", "majority condition, K<=6, L<=12: separated in " + std::to_string(separated) + "/" + std::to_string(total) +
                " (K,L) cells; gap >= 1/(2K) in " + std::to_string(holds) + "/" + std::to_string(total));
  info("4", "K=3 L=10 majority: min clean " + fmt(k3.min_clean.value(), 3) + ", max noisy " + fmt(k3.max_noisy.value(), 3) +
                ", " + std::to_string(k3.violations.size()) + " witnesses; first break: " + first_break);
  info("4", "K=2 L=10 majority: gap " + fmt(k2.gap, 3) + " vs claimed 1/(2K) = " + fmt(k2.claimed_gap, 3) +
                (k2.claimed_gap_holds ? " (holds)" : " (does not hold)"));
  return {k2_ok && pure_ok, std::string("K=2 L=10 majority min clean ") + fmt(k2.min_clean.value(), 3) + " max noisy " +
                                fmt(k2.max_noisy.value(), 3) + "; all-true gap 1/2 for K<=6, L<=12: " + (pure_ok ? "yes" : "NO")};
}

Outcome knn_exactness() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<Eigen::Index> size(11, 512), dim(1, 8);
  int mismatches = 0;
  long queries = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = size(rng);
    MatrixXd x = inn::testing::random_matrix(n, dim(rng), rng);
    if (trial % 5 == 0) x = x.array().round().matrix();  // coarse grid to force distance ties
    const auto index = build_index(x);
    for (int L : {1, 5, 10}) {
      const auto all = query_all(index, L);
      for (Eigen::Index i = 0; i < n; ++i, ++queries)
        mismatches += all[static_cast<std::size_t>(i)].neighbors != inn::testing::brute_force_neighbors(x, i, L);
    }
  }
  return {mismatches == 0, std::to_string(queries) + " queries over 50 datasets, " + std::to_string(mismatches) + " mismatches"};
}

Outcome auc_exactness() {
  std::mt19937_64 rng(6);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = std::uniform_int_distribution<Eigen::Index>(2, 200)(rng);
    std::uniform_int_distribution<int> level(0, trial % 2 ? 1000000 : 7);
    VectorXd s(n);
    std::vector<bool> mask(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      s(i) = level(rng) * 0.125;
      mask[static_cast<std::size_t>(i)] = (rng() & 1) != 0;
    }
    mask[0] = true;
    mask[1] = false;
    std::int64_t twice = 0, pairs = 0;
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index m = 0; m < n; ++m)
        if (mask[static_cast<std::size_t>(c)] && !mask[static_cast<std::size_t>(m)]) {
          twice += s(c) > s(m) ? 2 : s(c) == s(m) ? 1 : 0;
          pairs += 2;
        }
    mismatches += auc(s, mask) != static_cast<double>(twice) / static_cast<double>(pairs);
  }
  return {mismatches == 0, "100 instances, n <= 200, " + std::to_string(mismatches) + " inexact"};
}

Outcome mixture_recovery() {
  const VectorXd b = inn::testing::beta_mixture_sample(1000, 0.5, 2, 8, 8, 2, 2024);
  const auto bf = fit_beta_mixture(b);
  const double b_noisy = bf.mean(1 - bf.clean_component), b_clean = bf.mean(bf.clean_component);
  const VectorXd g = inn::testing::gaussian_mixture_sample(1000, 0.5, 0.1, 0.05, 2.0, 0.3, 2024);
  const auto gf = fit_gaussian_mixture(g);
  const double g_clean = gf.mean(gf.clean_component), g_noisy = gf.mean(1 - gf.clean_component);
  const bool means = std::abs(b_noisy - 0.2) <= kBetaMeanTol && std::abs(b_clean - 0.8) <= kBetaMeanTol &&
                     std::abs(g_clean - 0.1) <= kGaussMeanTol && std::abs(g_noisy - 2.0) <= kGaussMeanTol;
  const bool monotone = inn::testing::nondecreasing(bf.log_likelihood, kLlSlack) &&
                        inn::testing::nondecreasing(gf.log_likelihood, kLlSlack);
  return {means && monotone, "beta means " + fmt(b_noisy, 3) + "/" + fmt(b_clean, 3) + ", gaussian means " + fmt(g_clean, 3) +
                                 "/" + fmt(g_noisy, 3) + ", LL nondecreasing: " + (monotone ? "yes" : "NO")};
}

Outcome stability() {
  const auto& s = blobs2d();
  const double inn_r = mean(s.inn_range), ce_r = mean(s.ce_range);
  const double inn_f = mean(s.inn_final), ce_f = mean(s.ce_final);
  const bool a = inn_r <= ce_r;
  const bool b = inn_f >= ce_f + kFinalMargin;
  info("8", "integral minus midpoint AUC, worst checkpoint per seed: " + fmt(s.worst_integral_minus_midpoint[0]) + " " +
                fmt(s.worst_integral_minus_midpoint[1]) + " " + fmt(s.worst_integral_minus_midpoint[2]) +
                " (expected >= -0.02)");
  info("8", "L sweep at final checkpoint, 3-seed mean AUC: " + l_sweep_text(s.l_sweeps));
  return {a && b, std::string("(a) AUC range inn ") + fmt(inn_r) + " vs loss_ce " + fmt(ce_r) + (a ? " ok" : " FAILED") +
                      "; (b) final AUC inn " + fmt(inn_f) + " vs loss_ce " + fmt(ce_f) + " + 0.02" + (b ? " ok" : " FAILED")};
}

Outcome consistency() {
  const auto& s = blobs2d();
  const double gap = mean(s.gap_ce), gap_m = mean(s.gap_m_ce);
  info("9", "MixUp-trained f at final checkpoint: E_cor-E_inc " + fmt(mean(s.gap_f)) + ", Em_cor-Em_inc " + fmt(mean(s.gap_m_f)));
  return {gap_m >= gap + kConsistencyMargin, "CE model at final checkpoint: Em_cor-Em_inc " + fmt(gap_m) +
                                                 " vs E_cor-E_inc " + fmt(gap) + " + 0.05"};
}

void high_dim_diagnostic() {
  SweepSummary s;
  for (int seed = 0; seed < kSeeds; ++seed) accumulate(s, run_pipeline(blobs_config(static_cast<std::uint64_t>(seed), 20, 0.3)));
  info("8/9", "same protocol at d=20 (spread 0.3), 3-seed means: AUC range inn " + fmt(mean(s.inn_range)) + " vs loss_ce " +
                  fmt(mean(s.ce_range)) + "; final AUC inn " + fmt(mean(s.inn_final)) + " vs loss_ce " + fmt(mean(s.ce_final)) +
                  "; CE model Em gap " + fmt(mean(s.gap_m_ce)) + " vs E gap " + fmt(mean(s.gap_ce)));
}

Outcome heavy_noise() {
  std::vector<double> inn_best, ce_best;
  for (int seed = 0; seed < kSeeds; ++seed) {
    RunConfig c;
    c.seed = static_cast<std::uint64_t>(seed);
    c.n = 5000;
    c.num_classes = 10;
    c.dim = 20;
    c.spread = 0.3;
    c.noise = "symmetric";
    c.noise_rate = 0.8;
    c.save_models = false;
    const auto r = run_pipeline(c);
    inn_best.push_back(r.report->stability.at(score_kind::kInn).max);
    ce_best.push_back(r.report->stability.at(score_kind::kLossCe).max);
  }
  return {mean(inn_best) > mean(ce_best), "best-checkpoint AUC inn " + fmt(mean(inn_best)) + " vs loss_ce " + fmt(mean(ce_best)) +
                                              " (blobs K=10, n=5000, d=20, 80% symmetric, 3 seeds)"};
}

Outcome imbalanced() {
  std::vector<double> inn_final, ce_final;
  bool groups_ok = true;
  for (int seed = 0; seed < kSeeds; ++seed) {
    RunConfig c;
    c.seed = static_cast<std::uint64_t>(seed);
    c.n = 10000;
    c.num_classes = 2;
    c.dim = 20;
    c.spread = 0.3;
    c.noise = "imbalanced";
    c.noise_rate = 0.3;
    c.keep_frac = 0.1;
    c.save_models = false;
    c.out = g_work / ("imbalanced_seed" + std::to_string(seed));
    const auto r = run_pipeline(c);
    inn_final.push_back(r.report->stability.at(score_kind::kInn).final);
    ce_final.push_back(r.report->stability.at(score_kind::kLossCe).final);
    const auto rows = grouped_histogram(r.tables.back().at(score_kind::kInn), r.dataset, c.bins);
    std::set<std::pair<int, int>> groups;
    for (const auto& row : rows) groups.insert({row.true_label, row.label});
    groups_ok = groups_ok && groups.size() == 4 && std::filesystem::exists(c.out / "histogram_inn.csv");
  }
  const double inn = mean(inn_final), ce = mean(ce_final);
  return {inn >= kImbalancedFloor && inn >= ce && groups_ok,
          "final AUC inn " + fmt(inn) + " vs loss_ce " + fmt(ce) + " (floor 0.6); four (y*,y) histogram groups " +
              (groups_ok ? "emitted" : "MISSING")};
}

Outcome determinism() {
  blobs2d();
  auto cfg = blobs_config(0, 2, 0.5);
  cfg.l_sweep = {1, 2, 5, 10};
  cfg.out = g_work / "blobs2d_seed0_b";
  run_pipeline(cfg);
  const auto a = inn::testing::slurp(g_work / "blobs2d_seed0_a" / "scores.csv");
  const auto b = inn::testing::slurp(cfg.out / "scores.csv");
  return {!a.empty() && a == b, "score tables " + std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_work = argv[1];
  std::filesystem::create_directories(g_work);
  std::cout << "acceptance suite, work dir " << g_work.string() << std::endl;

  criterion("1", "gradient correctness", 5, gradient_check);
  criterion("2", "quadrature exactness", 1, quadrature);
  criterion("3", "oracle identity through the scorer", 10, oracle_identity);
  criterion("4", "restricted separation by enumeration", 30, lemma_separation);
  criterion("5", "kNN exactness", 30, knn_exactness);
  criterion("6", "AUC exactness", 10, auc_exactness);
  criterion("7", "BMM/GMM recovery", 10, mixture_recovery);
  // Criteria 8, 9 and 12 share the 3-seed d=2 runs, so the shared runs are timed under 8.
  criterion("8", "stability, blobs K=4 n=2000 d=2 30% symmetric, 3 seeds", 600, stability);
  criterion("9", "consistency effect, same runs", 0, consistency);
  {
    const auto start = std::chrono::steady_clock::now();
    high_dim_diagnostic();
    info("8/9", "diagnostic runtime " + fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1) + "s");
  }
  criterion("10", "heavy-noise ordering", 900, heavy_noise);
  criterion("11", "imbalanced separation", 0, imbalanced);
  criterion("12", "pipeline determinism", 0, determinism);

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(g_failures) + " CRITERIA FAILED") << std::endl;
  return g_failures == 0 ? 0 : 1;
}
