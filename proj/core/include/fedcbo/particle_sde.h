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

#ifndef FEDCBO_PARTICLE_SDE_H_
#define FEDCBO_PARTICLE_SDE_H_

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "fedcbo/common.h"
#include "fedcbo/hyperparams.h"
#include "fedcbo/objectives.h"
#include "fedcbo/parallel.h"

namespace fedcbo {

// Positions of all agents of the multi-cluster particle system.
//
// `hidden_labels` is ground truth owned by the harness. The integrator reads
// it only to pick which cluster loss drives a particle's own drift and noise;
// consensus points are always computed over every particle.
struct ParticleCloud {
  std::vector<Vec> positions;
  std::vector<int> hidden_labels;
  // (cluster << 32 | index within cluster); keys each particle's noise stream
  // so a particle's randomness does not depend on the total N.
  std::vector<std::uint64_t> stream_ids;
  std::int64_t step_count = 0;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(positions.size()); }
  int dim() const { return positions.empty() ? 0 : static_cast<int>(positions.front().size()); }
  std::vector<Vec> cluster(int k) const;
};

// Isotropic Gaussian N(mean, stddev^2 I), identical for every cluster.
struct InitSpec {
  Vec mean;  // empty means the origin
  double stddev = 2.0;
};

ParticleCloud init_cloud(int clusters, int dim, int per_cluster,
                         const InitSpec& init, std::uint64_t seed);

// m^k for every cluster loss, each over all particles.
std::vector<Vec> cluster_consensus_points(std::span<const Vec> positions,
                                          std::span<const Objective> objectives,
                                          double alpha,
                                          const Executor& exec = Executor{});

// One Euler-Maruyama step:
//   theta' = theta - l1 g (theta - m^k) - l2 g grad L_k(theta)
//            + s1 sqrt(g) |theta - m^k| z + s2 sqrt(g) |grad L_k(theta)| z~
// Throws DivergenceError if any position becomes non-finite.
ParticleCloud em_step(const ParticleCloud& cloud,
                      std::span<const Objective> objectives,
                      const HyperParams& hp, const Executor& exec = Executor{});

struct SdeRecord {
  std::int64_t step = 0;
  double time = 0.0;
  std::vector<double> variance;         // V(rho^k) per cluster
  double variance_sum = 0.0;
  std::vector<double> consensus_error;  // |m^k - theta_k*|
};

struct SdeOptions {
  int record_every = 1;
  bool keep_snapshots = false;
};

struct SdeTrajectory {
  std::vector<SdeRecord> records;
  std::vector<ParticleCloud> snapshots;  // aligned with records when kept
  ParticleCloud final_cloud;
  bool theory_regime = false;
};

// Runs `steps` EM steps from a fresh cloud. Records step 0 and every
// `record_every` steps thereafter, plus the final step.
SdeTrajectory run_sde(const BenchmarkProblem& problem, int per_cluster,
                      const HyperParams& hp, std::int64_t steps,
                      const InitSpec& init, std::uint64_t seed,
                      const SdeOptions& options = {},
                      const Executor& exec = Executor{});

// Least-squares slope of log(values) against `times`, sign flipped, so an
// exact exp(-r t) series returns r. The window is cut at the first
// nonpositive value; fewer than two usable points is an error.
double decay_exponent_fit(std::span<const double> values,
                          std::span<const double> times);

// Index of the first value <= threshold, or values.size() if none.
std::size_t first_at_or_below(std::span<const double> values, double threshold);

// One JSON object per record: step, time, V per cluster, consensus errors.
void write_trajectory_jsonl(std::ostream& out, const SdeTrajectory& traj);

}  // namespace fedcbo

#endif  // FEDCBO_PARTICLE_SDE_H_
