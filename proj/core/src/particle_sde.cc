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

#include "fedcbo/particle_sde.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "fedcbo/consensus.h"
#include "fedcbo/diagnostics.h"
#include "fedcbo/rng.h"

namespace fedcbo {

double theory_margin(const HyperParams& hp, double grad_lipschitz, int dim) {
  const double m = grad_lipschitz;
  return 2.0 * hp.lambda1 - 2.0 * hp.lambda2 * m - dim * hp.sigma1 * hp.sigma1 -
         dim * hp.sigma2 * hp.sigma2 * m * m;
}

bool theory_regime(const HyperParams& hp, double grad_lipschitz, int dim) {
  return theory_margin(hp, grad_lipschitz, dim) > 0.0;
}

std::vector<Vec> ParticleCloud::cluster(int k) const {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (hidden_labels[i] == k) out.push_back(positions[i]);
  }
  return out;
}

ParticleCloud init_cloud(int clusters, int dim, int per_cluster,
                         const InitSpec& init, std::uint64_t seed) {
  if (clusters < 1 || per_cluster < 1 || dim < 1) {
    throw InvalidParameter("cloud needs clusters, per_cluster and dim >= 1");
  }
  if (!(init.stddev >= 0)) throw InvalidParameter("init stddev must be >= 0");
  const Vec mean = init.mean.size() == 0 ? Vec::Zero(dim) : init.mean;
  if (mean.size() != dim) throw InvalidParameter("init mean has wrong dimension");

  ParticleCloud cloud;
  cloud.seed = seed;
  for (int k = 0; k < clusters; ++k) {
    for (int i = 0; i < per_cluster; ++i) {
      const std::uint64_t id = (static_cast<std::uint64_t>(k) << 32) |
                               static_cast<std::uint64_t>(i);
      CounterRng rng(seed, {tag(Stream::kInit), id});
      cloud.positions.push_back(mean + init.stddev * rng.normal_vector(dim));
      cloud.hidden_labels.push_back(k);
      cloud.stream_ids.push_back(id);
    }
  }
  return cloud;
}

std::vector<Vec> cluster_consensus_points(std::span<const Vec> positions,
                                          std::span<const Objective> objectives,
                                          double alpha, const Executor& exec) {
  const std::size_t n = positions.size();
  const std::size_t kk = objectives.size();
  // losses[k * n + i] = L_k(theta_i); each slot written by one index.
  std::vector<double> losses(kk * n);
  exec.parallel_for(n, [&](std::size_t i) {
    for (std::size_t k = 0; k < kk; ++k) losses[k * n + i] = objectives[k].eval(positions[i]);
  });
  std::vector<Vec> out;
  out.reserve(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    out.push_back(consensus_point(positions,
                                  std::span<const double>(losses).subspan(k * n, n),
                                  alpha)
                      .value);
  }
  return out;
}

ParticleCloud em_step(const ParticleCloud& cloud,
                      std::span<const Objective> objectives,
                      const HyperParams& hp, const Executor& exec) {
  if (cloud.positions.empty()) throw InvalidParameter("empty particle cloud");
  if (!(hp.gamma > 0)) throw InvalidParameter("step size gamma must be positive");
  if (objectives.empty()) throw InvalidParameter("no cluster objectives");
  for (int label : cloud.hidden_labels) {
    if (label < 0 || label >= static_cast<int>(objectives.size())) {
      throw InvalidParameter("particle label outside the objective list");
    }
  }

  const std::vector<Vec> m =
      cluster_consensus_points(cloud.positions, objectives, hp.alpha, exec);
  const double sqrt_gamma = std::sqrt(hp.gamma);
  const int d = cloud.dim();

  ParticleCloud next = cloud;
  next.step_count = cloud.step_count + 1;
  exec.parallel_for(cloud.positions.size(), [&](std::size_t i) {
    const Vec& theta = cloud.positions[i];
    const int k = cloud.hidden_labels[i];
    const Vec to_consensus = theta - m[k];
    Vec update = -hp.lambda1 * hp.gamma * to_consensus;
    Vec grad;
    if (hp.lambda2 != 0.0 || hp.sigma2 != 0.0) {
      grad = objectives[k].grad(theta);
      update -= hp.lambda2 * hp.gamma * grad;
    }
    if (hp.sigma1 != 0.0 || hp.sigma2 != 0.0) {
      CounterRng rng(cloud.seed, {tag(Stream::kNoise), cloud.stream_ids[i],
                                  static_cast<std::uint64_t>(cloud.step_count)});
      const Vec z = rng.normal_vector(d);
      const Vec z_grad = rng.normal_vector(d);
      update += hp.sigma1 * sqrt_gamma * to_consensus.norm() * z;
      if (hp.sigma2 != 0.0) update += hp.sigma2 * sqrt_gamma * grad.norm() * z_grad;
    }
    next.positions[i] = theta + update;
    if (!next.positions[i].allFinite()) {
      throw DivergenceError("particle " + std::to_string(i) +
                                " diverged at step " +
                                std::to_string(cloud.step_count),
                            cloud.step_count, static_cast<int>(i));
    }
  });
  return next;
}

SdeTrajectory run_sde(const BenchmarkProblem& problem, int per_cluster,
                      const HyperParams& hp, std::int64_t steps,
                      const InitSpec& init, std::uint64_t seed,
                      const SdeOptions& options, const Executor& exec) {
  if (steps < 0) throw InvalidParameter("step count must be >= 0");
  if (options.record_every < 1) throw InvalidParameter("record_every must be >= 1");
  const std::vector<Vec> minimizers = problem.minimizers();

  SdeTrajectory traj;
  traj.theory_regime = theory_regime(hp, problem.grad_lipschitz(), problem.dim());
  ParticleCloud cloud = init_cloud(problem.clusters(), problem.dim(), per_cluster, init, seed);

  auto record = [&](const ParticleCloud& c) {
    SdeRecord r;
    r.step = c.step_count;
    r.time = static_cast<double>(c.step_count) * hp.gamma;
    const VarianceReport v = variance_report(c, minimizers, r.time);
    r.variance = v.per_cluster;
    r.variance_sum = v.total;
    const std::vector<Vec> m = cluster_consensus_points(
        c.positions, problem.cluster_objectives, hp.alpha, exec);
    for (std::size_t k = 0; k < m.size(); ++k) {
      r.consensus_error.push_back((m[k] - minimizers[k]).norm());
    }
    traj.records.push_back(std::move(r));
    if (options.keep_snapshots) traj.snapshots.push_back(c);
  };

  record(cloud);
  for (std::int64_t s = 1; s <= steps; ++s) {
    cloud = em_step(cloud, problem.cluster_objectives, hp, exec);
    if (s % options.record_every == 0 || s == steps) record(cloud);
  }
  traj.final_cloud = std::move(cloud);
  return traj;
}

double decay_exponent_fit(std::span<const double> values,
                          std::span<const double> times) {
  if (values.size() != times.size()) {
    throw InvalidParameter("values and times differ in length");
  }
  std::size_t end = 0;
  while (end < values.size() && values[end] > 0.0 && std::isfinite(values[end])) ++end;
  if (end < 2) throw InvalidParameter("decay fit needs at least two positive values");

  double mean_t = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < end; ++i) {
    mean_t += times[i];
    mean_y += std::log(values[i]);
  }
  mean_t /= static_cast<double>(end);
  mean_y /= static_cast<double>(end);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < end; ++i) {
    const double dt = times[i] - mean_t;
    sxy += dt * (std::log(values[i]) - mean_y);
    sxx += dt * dt;
  }
  if (sxx == 0.0) throw InvalidParameter("decay fit needs distinct times");
  return -sxy / sxx;
}

std::size_t first_at_or_below(std::span<const double> values, double threshold) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] <= threshold) return i;
  }
  return values.size();
}

void write_trajectory_jsonl(std::ostream& out, const SdeTrajectory& traj) {
  for (const SdeRecord& r : traj.records) {
    nlohmann::json j = {
        {"step", r.step},
        {"time", r.time},
        {"V", r.variance},
        {"V_sum", r.variance_sum},
        {"consensus_error", r.consensus_error},
    };
    out << j.dump() << '\n';
  }
}

}  // namespace fedcbo
