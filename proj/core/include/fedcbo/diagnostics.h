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

#ifndef FEDCBO_DIAGNOSTICS_H_
#define FEDCBO_DIAGNOSTICS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fedcbo/common.h"
#include "fedcbo/fedcbo.h"
#include "fedcbo/hyperparams.h"
#include "fedcbo/objectives.h"
#include "fedcbo/parallel.h"
#include "fedcbo/particle_sde.h"
#include "fedcbo/rng.h"

namespace fedcbo {

// V(rho^k) = 1/2 mean |theta - theta_k*|^2 over cluster k's particles.
struct VarianceReport {
  std::vector<double> per_cluster;
  double total = 0.0;
  double time = 0.0;
};

VarianceReport variance_report(const ParticleCloud& cloud,
                               std::span<const Vec> minimizers, double time = 0.0);
// Throws UnsupportedDiagnostic when an objective has no minimizer.
VarianceReport variance_report(const ParticleCloud& cloud,
                               std::span<const Objective> objectives,
                               double time = 0.0);

struct RateEstimate {
  double rate = 0.0;
  bool theory_regime = false;  // false means `rate` is not a valid bound
};

// (1 - tau_theory) (2 l1 - 2 l2 M - d s1^2 - d s2^2 M^2). Returned signed,
// with theory_regime == false when the bracket is not positive.
RateEstimate theoretical_rate(const HyperParams& hp, double grad_lipschitz,
                              int dim, double tau_theory);

// Exact W1 between two 1-D empirical measures (any sizes) by integrating the
// gap between their quantile functions.
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

// n unit vectors drawn uniformly on the sphere.
std::vector<Vec> random_directions(int dim, int count, CounterRng& rng);

// Mean over `directions` of the 1-D W1 between the projected clouds. With a
// fixed direction set this is a pseudometric (symmetric, triangle
// inequality) on empirical measures.
double sliced_w1(std::span<const Vec> cloud_a, std::span<const Vec> cloud_b,
                 std::span<const Vec> directions);
double sliced_w1(std::span<const Vec> cloud_a, std::span<const Vec> cloud_b,
                 int projections, CounterRng& rng);

struct MeanFieldOptions {
  int checkpoints = 20;
  int projections = 64;
  InitSpec init;
};

struct MeanFieldScan {
  std::vector<int> sizes;           // particles per cluster
  std::vector<double> discrepancy;  // seed mean of sup-over-time sliced W1
  std::vector<double> std_error;    // across seeds
  int reference_size = 0;
  // Non-increasing in N, allowing at most one inversion.
  bool decreasing = false;
};

// For every seed: one reference run with `reference_size` particles per
// cluster and one run per entry of `sizes`, all driven by the same seed so a
// particle keeps its initial draw and noise stream across sizes.
// The discrepancy of a run is the max over an evenly spaced checkpoint grid
// of the cluster-averaged sliced W1 to the reference run.
MeanFieldScan meanfield_scan(const BenchmarkProblem& problem, const HyperParams& hp,
                             std::span<const int> sizes, int reference_size,
                             std::span<const std::uint64_t> seeds,
                             std::int64_t steps, const MeanFieldOptions& options = {},
                             const Executor& exec = Executor{});

// Fraction of `selected` that share `agent`'s hidden cluster.
double selection_rate(int agent, std::span<const int> selected,
                      std::span<const int> hidden_labels);

struct SrPoint {
  int round = 0;
  double sr = 0.0;      // mean over participants
  double oracle = 0.0;  // oracle_sr averaged over the same agents
};

// Throws UnsupportedDiagnostic when a round has no selection log.
std::vector<SrPoint> sr_curve(std::span<const RoundLog> logs,
                              std::span<const int> hidden_labels);

}  // namespace fedcbo

#endif  // FEDCBO_DIAGNOSTICS_H_
