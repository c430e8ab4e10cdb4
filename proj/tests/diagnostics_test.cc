/*
 * Copyright 2026 The FedCBO Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedcbo/diagnostics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fedcbo/fedcbo.h"

namespace fedcbo {
namespace {

ParticleCloud cloud_of(std::vector<Vec> xs, std::vector<int> labels) {
  ParticleCloud c;
  c.positions = std::move(xs);
  c.hidden_labels = std::move(labels);
  for (std::size_t i = 0; i < c.positions.size(); ++i) c.stream_ids.push_back(i);
  return c;
}

TEST(VarianceReport, Examples) {
  const std::vector<Vec> star{Vec::Ones(2)};
  EXPECT_EQ(variance_report(cloud_of({Vec::Ones(2), Vec::Ones(2)}, {0, 0}), star).total, 0.0);
  Vec far = Vec::Ones(2);
  far[0] += 2;
  EXPECT_DOUBLE_EQ(variance_report(cloud_of({far}, {0}), star).total, 2.0);
}

// 1/2 |z|^2 for z ~ N(0, I_2) has mean 1 and variance 1.
TEST(VarianceReport, GaussianMoment) {
  CounterRng rng(1, {});
  Vec star(2);
  star << 3, -1;
  std::vector<Vec> xs;
  for (int i = 0; i < 1000; ++i) xs.push_back(star + rng.normal_vector(2));
  const VarianceReport r = variance_report(cloud_of(xs, std::vector<int>(1000, 0)),
                                           std::vector<Vec>{star});
  EXPECT_NEAR(r.total, 1.0, 3 * std::sqrt(1.0 / 1000));
}

TEST(VarianceReport, PerClusterAndRelabelInvariant) {
  CounterRng rng(2, {});
  std::vector<Vec> xs;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    xs.push_back(rng.normal_vector(3));
    labels.push_back(i % 2);
  }
  const std::vector<Vec> star{Vec::Zero(3), Vec::Ones(3)};
  const VarianceReport a = variance_report(cloud_of(xs, labels), star);
  ASSERT_EQ(a.per_cluster.size(), 2u);
  EXPECT_DOUBLE_EQ(a.total, a.per_cluster[0] + a.per_cluster[1]);
  // Reverse the particle order (a relabeling within each cluster).
  std::reverse(xs.begin(), xs.end());
  std::reverse(labels.begin(), labels.end());
  const VarianceReport b = variance_report(cloud_of(xs, labels), star);
  EXPECT_NEAR(a.per_cluster[0], b.per_cluster[0], 1e-14);
  EXPECT_NEAR(a.per_cluster[1], b.per_cluster[1], 1e-14);
}

TEST(VarianceReport, MissingMinimizerUnsupported) {
  const std::vector<Objective> objs{
      Objective(1, [](const Vec& x) { return x[0]; }, [](const Vec&) { return Vec::Ones(1).eval(); }, {})};
  EXPECT_THROW(variance_report(cloud_of({Vec::Zero(1)}, {0}), objs), UnsupportedDiagnostic);
}

TEST(TheoreticalRate, Examples) {
  HyperParams hp;
  hp.lambda1 = 1;
  hp.lambda2 = 0;
  hp.sigma1 = 0;
  hp.sigma2 = 0;
  EXPECT_DOUBLE_EQ(theoretical_rate(hp, 2.0, 2, 0.0).rate, 2.0);
  hp.lambda2 = 0.1;
  hp.sigma1 = 0.1;
  const RateEstimate r = theoretical_rate(hp, 2.0, 2, 0.0);
  EXPECT_NEAR(r.rate, 1.58, 1e-12);
  EXPECT_TRUE(r.theory_regime);
  EXPECT_NEAR(theoretical_rate(hp, 2.0, 2, 0.5).rate, 0.79, 1e-12);
  hp.lambda1 = 0.1;
  const RateEstimate bad = theoretical_rate(hp, 2.0, 2, 0.0);
  EXPECT_LT(bad.rate, 0.0);
  EXPECT_FALSE(bad.theory_regime);
  EXPECT_THROW(theoretical_rate(hp, 2.0, 2, 1.0), InvalidParameter);
}

TEST(Wasserstein1d, Examples) {
  EXPECT_DOUBLE_EQ(wasserstein1_1d({0}, {1}), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein1_1d({0, 1}, {0, 2}), 0.5);
  EXPECT_DOUBLE_EQ(wasserstein1_1d({3, 1, 2}, {2, 3, 1}), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein1_1d({0}, {0, 1}), 0.5);
}

// Oracle: integral of |F_a - F_b| over the merged support.
double cdf_oracle(std::vector<double> a, std::vector<double> b) {
  std::vector<double> grid = a;
  grid.insert(grid.end(), b.begin(), b.end());
  std::sort(grid.begin(), grid.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  auto cdf = [](const std::vector<double>& v, double x) {
    return static_cast<double>(std::upper_bound(v.begin(), v.end(), x) - v.begin()) / v.size();
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    total += std::abs(cdf(a, grid[i]) - cdf(b, grid[i])) * (grid[i + 1] - grid[i]);
  }
  return total;
}

TEST(Wasserstein1d, MatchesCdfOracleForUnequalSizes) {
  CounterRng rng(3, {});
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(1 + rng.below(12)), b(1 + rng.below(12));
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = 2 * rng.normal() + 0.5;
    EXPECT_NEAR(wasserstein1_1d(a, b), cdf_oracle(a, b), 1e-12);
  }
}

std::vector<Vec> random_cloud(CounterRng& rng, int n, int d, double shift) {
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) out.push_back(rng.normal_vector(d) + Vec::Constant(d, shift));
  return out;
}

TEST(SlicedW1, ExamplesAndSymmetry) {
  CounterRng rng(4, {});
  const auto dirs = random_directions(1, 4, rng);
  const std::vector<Vec> a{Vec::Zero(1)}, b{Vec::Ones(1)};
  EXPECT_NEAR(sliced_w1(a, b, dirs), 1.0, 1e-15);
  const std::vector<Vec> c{Vec::Zero(1), Vec::Ones(1)}, d{Vec::Zero(1), Vec::Constant(1, 2)};
  EXPECT_NEAR(sliced_w1(c, d, dirs), 0.5, 1e-15);
  const auto x = random_cloud(rng, 30, 3, 0.0);
  const auto y = random_cloud(rng, 20, 3, 1.0);
  EXPECT_EQ(sliced_w1(x, x, 16, rng), 0.0);
  const auto dirs3 = random_directions(3, 16, rng);
  EXPECT_EQ(sliced_w1(x, y, dirs3), sliced_w1(y, x, dirs3));
  EXPECT_GT(sliced_w1(x, y, dirs3), 0.0);
  const std::vector<Vec> wrong{Vec::Zero(2)};
  EXPECT_THROW(sliced_w1(x, wrong, dirs3), InvalidParameter);
}

TEST(SlicedW1, DirectionsAreUnitVectors) {
  CounterRng rng(5, {});
  for (const Vec& u : random_directions(4, 50, rng)) EXPECT_NEAR(u.norm(), 1.0, 1e-14);
}

TEST(SlicedW1, TriangleInequality) {
  CounterRng rng(6, {});
  for (int t = 0; t < 50; ++t) {
    const auto dirs = random_directions(2, 8, rng);
    const auto a = random_cloud(rng, 5 + rng.below(20), 2, 0.0);
    const auto b = random_cloud(rng, 5 + rng.below(20), 2, rng.normal());
    const auto c = random_cloud(rng, 5 + rng.below(20), 2, rng.normal());
    EXPECT_LE(sliced_w1(a, c, dirs), sliced_w1(a, b, dirs) + sliced_w1(b, c, dirs) + 1e-9);
  }
}

HyperParams theory_params() {
  HyperParams hp;
  hp.lambda1 = 4;
  hp.lambda2 = 0.1;
  hp.sigma1 = 0.2;
  hp.sigma2 = 0.1;
  hp.gamma = 0.005;
  hp.alpha = 100;
  return hp;
}

TEST(MeanFieldScan, SelfComparisonIsZero) {
  const BenchmarkProblem p = make_wells("quadratic", 2, 2, 2.0);
  const std::vector<int> sizes{30};
  const std::vector<std::uint64_t> seeds{1, 2};
  MeanFieldOptions opts;
  opts.checkpoints = 4;
  const MeanFieldScan scan = meanfield_scan(p, theory_params(), sizes, 30, seeds, 40, opts);
  EXPECT_EQ(scan.discrepancy, std::vector<double>{0.0});
}

TEST(MeanFieldScan, Validation) {
  const BenchmarkProblem p = make_wells("quadratic", 2, 2, 2.0);
  const std::vector<std::uint64_t> seeds{1};
  EXPECT_THROW(meanfield_scan(p, theory_params(), std::vector<int>{20, 10}, 40, seeds, 5),
               InvalidParameter);
  EXPECT_THROW(meanfield_scan(p, theory_params(), std::vector<int>{50}, 40, seeds, 5),
               InvalidParameter);
}

// Standard error scales as 1/sqrt(seeds): four times the seeds halves it.
TEST(MeanFieldScan, StandardErrorFollowsCentralLimit) {
  const BenchmarkProblem p = make_wells("quadratic", 2, 2, 2.0);
  const std::vector<int> sizes{10};
  MeanFieldOptions opts;
  opts.checkpoints = 2;
  opts.projections = 8;
  std::vector<std::uint64_t> few, many;
  for (std::uint64_t s = 1; s <= 50; ++s) few.push_back(s);
  for (std::uint64_t s = 1001; s <= 1200; ++s) many.push_back(s);
  const double se_few = meanfield_scan(p, theory_params(), sizes, 40, few, 10, opts).std_error[0];
  const double se_many =
      meanfield_scan(p, theory_params(), sizes, 40, many, 10, opts).std_error[0];
  EXPECT_NEAR(se_few / se_many, 2.0, 0.3 * 2.0);
}

TEST(SelectionRate, AllSameCluster) {
  const std::vector<int> labels{0, 1, 0, 0, 1};
  EXPECT_EQ(selection_rate(0, std::vector<int>{2, 3}, labels), 1.0);
  EXPECT_EQ(selection_rate(0, std::vector<int>{1, 2}, labels), 0.5);
  EXPECT_THROW(selection_rate(0, std::vector<int>{}, labels), InvalidParameter);
}

std::vector<int> shuffled_labels(int n, int k, std::uint64_t seed) {
  std::vector<int> labels(n);
  for (int j = 0; j < n; ++j) labels[j] = j * k / n;
  CounterRng rng(seed, {});
  for (int j = n - 1; j > 0; --j) std::swap(labels[j], labels[rng.below(j + 1)]);
  return labels;
}

TEST(SelectionRate, UniformSelectionsMatchBinomialOracle) {
  const int n = 20, k = 4, m = 5, rounds = 400;
  const auto labels = shuffled_labels(n, k, 7);
  std::vector<int> g(n);
  std::iota(g.begin(), g.end(), 0);
  const std::vector<double> zeros(n - 1, 0.0);
  std::vector<RoundLog> logs;
  for (int r = 0; r < rounds; ++r) {
    RoundLog log;
    log.round = r;
    log.epsilon = 1.0;
    log.participants = g;
    log.selections.resize(n);
    for (int j = 0; j < n; ++j) {
      CounterRng rng(8, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(r)});
      log.selections[j] = greedy_sample(j, zeros, g, m, 1.0, rng).all();
    }
    logs.push_back(std::move(log));
  }
  const auto curve = sr_curve(logs, labels);
  double mean = 0.0;
  for (const SrPoint& p : curve) {
    mean += p.sr;
    EXPECT_NEAR(p.oracle, 4.0 / 19.0, 1e-15);
  }
  mean /= rounds;
  // Each pick succeeds with p = (N_k - 1)/(N - 1); without-replacement draws
  // only shrink the variance, so the binomial sigma is conservative.
  const double p = 4.0 / 19.0;
  const double sigma = std::sqrt(p * (1 - p) / (static_cast<double>(rounds) * n * m));
  EXPECT_NEAR(mean, p, 3 * sigma);
}

// Expected round-0 SR when every score is zero: exploration is uniform and
// exploitation takes the lowest-id unexplored peers. Exact enumeration.
double round_zero_expected_sr(int agent, const std::vector<int>& labels, int m, int explore) {
  std::vector<int> peers;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    if (i != agent) peers.push_back(i);
  }
  const int p = static_cast<int>(peers.size());
  double total = 0.0;
  int subsets = 0;
  std::vector<bool> mask(p, false);
  std::fill(mask.begin(), mask.begin() + explore, true);
  std::sort(mask.begin(), mask.end());
  do {
    int same = 0, taken = 0;
    for (int t = 0; t < p; ++t) {
      if (mask[t]) same += labels[peers[t]] == labels[agent];
    }
    for (int t = 0; t < p && taken < m - explore; ++t) {
      if (mask[t]) continue;
      same += labels[peers[t]] == labels[agent];
      ++taken;
    }
    total += static_cast<double>(same) / m;
    ++subsets;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return total / subsets;
}

TEST(SrCurve, RoundZeroMatchesEnumeration) {
  const int n = 8, m = 4;
  const auto labels = shuffled_labels(n, 2, 9);
  std::vector<int> g(n);
  std::iota(g.begin(), g.end(), 0);
  const std::vector<double> zeros(n - 1, 0.0);
  const int explore = round_half_up(0.5 * m);
  for (int j = 0; j < n; ++j) {
    const double expected = round_zero_expected_sr(j, labels, m, explore);
    const int trials = 4000;
    double sum = 0.0, sq = 0.0;
    for (int t = 0; t < trials; ++t) {
      CounterRng rng(10, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t)});
      const double sr = selection_rate(j, greedy_sample(j, zeros, g, m, 0.5, rng).all(), labels);
      sum += sr;
      sq += sr * sr;
    }
    const double mean = sum / trials;
    const double sd = std::sqrt(std::max(sq / trials - mean * mean, 1e-12));
    EXPECT_NEAR(mean, expected, 3 * sd / std::sqrt(trials) + 1e-12) << "agent " << j;
  }
}

TEST(SrCurve, MissingSelectionsUnsupported) {
  RoundLog log;
  log.participants = {0, 1};
  const std::vector<RoundLog> logs{log};
  EXPECT_THROW(sr_curve(logs, std::vector<int>{0, 0}), UnsupportedDiagnostic);
}

}  // namespace
}  // namespace fedcbo
