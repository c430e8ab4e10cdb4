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

#include "fedcbo/consensus.h"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fedcbo/objectives.h"
#include "fedcbo/rng.h"

namespace fedcbo {
namespace {

Vec s(double x) { return Vec::Constant(1, x); }

// Independent oracle: long-double direct summation without shifting.
std::vector<long double> direct_oracle(const std::vector<Vec>& xs,
                                       const std::vector<double>& losses, double alpha) {
  const int d = static_cast<int>(xs.front().size());
  std::vector<long double> num(d, 0.0L);
  long double den = 0.0L;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const long double w = std::exp(-static_cast<long double>(alpha) * losses[i]);
    den += w;
    for (int k = 0; k < d; ++k) num[k] += w * xs[i][k];
  }
  for (auto& x : num) x /= den;
  return num;
}

TEST(ConsensusPoint, SingleParticle) {
  const std::vector<Vec> xs{s(5)};
  EXPECT_EQ(consensus_point(xs, std::vector<double>{123.0}, 7.0).value, s(5));
}

TEST(ConsensusPoint, AlphaZeroIsMean) {
  const std::vector<Vec> xs{s(0), s(2)};
  EXPECT_DOUBLE_EQ(consensus_point(xs, std::vector<double>{3, -1}, 0.0).value[0], 1.0);
}

TEST(ConsensusPoint, ThreeParticleOracle) {
  const std::vector<Vec> xs{s(-1), s(0), s(2)};
  const std::vector<double> losses{1, 0, 4};
  const ConsensusPoint m = consensus_point(xs, losses, 1.0);
  const long double expected = (-std::exp(-1.0L) + 2 * std::exp(-4.0L)) /
                               (std::exp(-1.0L) + 1.0L + std::exp(-4.0L));
  EXPECT_NEAR(m.value[0], static_cast<double>(expected), 1e-9);
  EXPECT_NEAR(m.value[0], static_cast<double>(direct_oracle(xs, losses, 1.0)[0]), 1e-12);
  EXPECT_NEAR(m.total_weight, 1 + std::exp(-1.0) + std::exp(-4.0), 1e-12);
  EXPECT_NEAR(m.log_mass, std::log(1 + std::exp(-1.0) + std::exp(-4.0)), 1e-12);
}

TEST(ConsensusPoint, Errors) {
  const std::vector<Vec> none;
  EXPECT_THROW(consensus_point(none, std::vector<double>{}, 1.0), InvalidParameter);
  const std::vector<Vec> xs{s(0), s(1)};
  EXPECT_THROW(consensus_point(xs, std::vector<double>{1.0}, 1.0), InvalidParameter);
  EXPECT_THROW(consensus_point(xs, std::vector<double>{1.0, 1.0}, -1.0), InvalidParameter);
  try {
    consensus_point(xs, std::vector<double>{1.0, NAN}, 1.0);
    FAIL();
  } catch (const InvalidParameter& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(ConsensusPoint, LargeAlphaDoesNotOverflow) {
  const std::vector<Vec> xs{s(-1), s(3)};
  const ConsensusPoint m = consensus_point(xs, std::vector<double>{500, 501}, 1000.0);
  EXPECT_TRUE(std::isfinite(m.value[0]));
  EXPECT_NEAR(m.value[0], -1.0, 1e-12);
}

struct Cloud {
  std::vector<Vec> xs;
  std::vector<double> losses;
};

Cloud random_cloud(std::uint64_t seed, int n, int d) {
  CounterRng rng(seed, {});
  Cloud c;
  for (int i = 0; i < n; ++i) {
    c.xs.push_back(rng.normal_vector(d) * 3.0);
    c.losses.push_back(std::abs(rng.normal()) * 5);
  }
  return c;
}

TEST(ConsensusProperties, TranslationEquivariance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Cloud c = random_cloud(seed, 20, 3);
    CounterRng rng(seed, {99});
    const Vec shift = rng.normal_vector(3);
    std::vector<Vec> moved;
    for (const Vec& x : c.xs) moved.push_back(x + shift);
    for (double alpha : {0.0, 1.0, 30.0}) {
      const Vec a = consensus_point(c.xs, c.losses, alpha).value;
      const Vec b = consensus_point(moved, c.losses, alpha).value;
      EXPECT_LE((b - (a + shift)).lpNorm<Eigen::Infinity>(), 1e-12);
    }
  }
}

TEST(ConsensusProperties, LossShiftInvariance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Cloud c = random_cloud(seed, 20, 3);
    std::vector<double> shifted = c.losses;
    for (double& l : shifted) l += 17.25;
    for (double alpha : {1.0, 10.0, 100.0}) {
      const Vec a = consensus_point(c.xs, c.losses, alpha).value;
      const Vec b = consensus_point(c.xs, shifted, alpha).value;
      EXPECT_LE((a - b).lpNorm<Eigen::Infinity>(), 1e-12);
    }
  }
}

TEST(ConsensusProperties, ConvexHullMembership) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Cloud c = random_cloud(seed, 15, 4);
    for (double alpha : {0.0, 1.0, 100.0, 1e4}) {
      const Vec m = consensus_point(c.xs, c.losses, alpha).value;
      for (int k = 0; k < 4; ++k) {
        double lo = c.xs[0][k], hi = c.xs[0][k];
        for (const Vec& x : c.xs) {
          lo = std::min(lo, x[k]);
          hi = std::max(hi, x[k]);
        }
        EXPECT_GE(m[k], lo);
        EXPECT_LE(m[k], hi);
      }
    }
  }
}

// Losses come from a convex objective evaluated at the particles; for
// arbitrary position/loss pairings the distance need not shrink monotonically.
TEST(ConsensusProperties, LaplaceLimit) {
  // Unique argmin separated from the other losses by at least 1.
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    CounterRng rng(seed, {7});
    const int d = 1 + static_cast<int>(rng.below(4));
    const int best = static_cast<int>(rng.below(12));
    std::vector<Vec> xs;
    std::vector<double> losses;
    for (int i = 0; i < 12; ++i) {
      xs.push_back(3.0 * rng.normal_vector(d));
      losses.push_back(i == best ? 0.0 : 1.0 + 9.0 * rng.uniform());
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double alpha : {1.0, 10.0, 100.0, 1000.0}) {
      const double dist = (consensus_point(xs, losses, alpha).value - xs[best]).norm();
      EXPECT_LE(dist, prev) << "seed " << seed << " alpha " << alpha;
      prev = dist;
    }
    EXPECT_LT(prev, 1e-6);
  }
}

TEST(ConsensusProperties, MatchesDirectOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Cloud c = random_cloud(seed, 12, 2);
    const Vec m = consensus_point(c.xs, c.losses, 2.0).value;
    const auto oracle = direct_oracle(c.xs, c.losses, 2.0);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(m[k], static_cast<double>(oracle[k]), 1e-12);
  }
}

TEST(ConsensusPoint, ObjectiveOverload) {
  const Objective q = make_quadratic(1, s(0), 1);
  const std::vector<Vec> xs{s(-1), s(2)};
  const Vec a = consensus_point(xs, q, 3.0).value;
  const Vec b = consensus_point(xs, std::vector<double>{1.0, 4.0}, 3.0).value;
  EXPECT_EQ(a, b);
}

class AgentConsensusTest : public ::testing::Test {
 protected:
  std::vector<Vec> models{s(0), s(1), s(3), s(-2)};
  std::function<const Vec&(int)> model_of = [this](int i) -> const Vec& { return models[i]; };
};

TEST_F(AgentConsensusTest, OnlySelf) {
  const std::vector<int> a{2};
  const auto r = consensus_point_for_agent(
      2, a, model_of, [](const Vec& x) { return x[0] * x[0]; }, 10.0);
  EXPECT_EQ(r.point.value, s(3));
  EXPECT_EQ(r.models, a);
}

TEST_F(AgentConsensusTest, IdenticalModels) {
  models = {s(4), s(4), s(4)};
  const std::vector<int> a{0, 1, 2};
  for (double alpha : {0.0, 10.0, 1e5}) {
    const auto r = consensus_point_for_agent(
        0, a, model_of, [](const Vec& x) { return x[0]; }, alpha);
    EXPECT_EQ(r.point.value, s(4));
  }
}

TEST_F(AgentConsensusTest, LowLossMidpoint) {
  const std::vector<int> a{0, 1, 2};
  const std::vector<double> loss{0.2, 0.2, 5.0};
  const auto r = consensus_point_for_agent(
      0, a, model_of, [&](const Vec& x) { return x[0] == 0 ? loss[0] : x[0] == 1 ? loss[1] : loss[2]; },
      10.0);
  EXPECT_NEAR(r.point.value[0], 0.5, 1e-3);
  EXPECT_EQ(r.losses, loss);
}

TEST_F(AgentConsensusTest, NonFinitePolicies) {
  const std::vector<int> a{0, 1, 2};
  auto eval = [](const Vec& x) { return x[0] == 1 ? NAN : x[0]; };
  EXPECT_THROW(consensus_point_for_agent(0, a, model_of, eval, 1.0), EvaluationError);
  const auto r = consensus_point_for_agent(0, a, model_of, eval, 1.0, NonFinitePolicy::kExclude);
  EXPECT_EQ(r.models, (std::vector<int>{0, 2}));
  EXPECT_EQ(r.excluded, (std::vector<int>{1}));
}

TEST_F(AgentConsensusTest, EvaluationFailureNamesIds) {
  const std::vector<int> a{0, 3};
  auto eval = [](const Vec& x) -> double {
    if (x[0] < 0) throw std::runtime_error("bad");
    return 0.0;
  };
  try {
    consensus_point_for_agent(1, a, model_of, eval, 1.0);
    FAIL();
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.agent(), 1);
    EXPECT_EQ(e.model(), 3);
  }
}

TEST(StabilityGap, Examples) {
  const Objective q = make_quadratic(2, Vec::Zero(2), 1);
  CounterRng rng(5, {});
  std::vector<Vec> a;
  for (int i = 0; i < 10; ++i) a.push_back(rng.normal_vector(2));
  EXPECT_EQ(stability_gap(a, a, q, 10.0), 0.0);
  Vec shift(2);
  shift << 0.3, -0.4;
  std::vector<Vec> b;
  for (const Vec& x : a) b.push_back(x + shift);
  EXPECT_NEAR(stability_gap(a, b, q, 0.0), 0.5, 1e-12);
  const std::vector<Vec> wrong{Vec::Zero(3)};
  EXPECT_THROW(stability_gap(a, wrong, q, 1.0), InvalidParameter);
}

// Gap over W2 of an index coupling (an upper bound on W2) stays bounded and
// the bound is stable across seeds.
TEST(StabilityGap, EmpiricalLipschitzBound) {
  const Objective q = make_quadratic(2, Vec::Zero(2), 1);
  std::vector<double> worst;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CounterRng rng(seed, {1});
    std::vector<Vec> base;
    for (int i = 0; i < 30; ++i) base.push_back(rng.normal_vector(2));
    double max_ratio = 0.0;
    for (int t = 0; t < 200; ++t) {
      std::vector<Vec> pert;
      double w2 = 0.0;
      for (const Vec& x : base) {
        const Vec d = rng.normal_vector(2) * 0.05 * (1 + rng.uniform());
        pert.push_back(x + d);
        w2 += d.squaredNorm();
      }
      w2 = std::sqrt(w2 / base.size());
      max_ratio = std::max(max_ratio, stability_gap(base, pert, q, 1.0) / w2);
    }
    EXPECT_TRUE(std::isfinite(max_ratio));
    worst.push_back(max_ratio);
  }
  const auto [lo, hi] = std::minmax_element(worst.begin(), worst.end());
  EXPECT_LT(*hi / *lo, 3.0);
}

}  // namespace
}  // namespace fedcbo
