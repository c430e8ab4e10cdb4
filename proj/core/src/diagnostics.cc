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
#include <string>

namespace fedcbo {

VarianceReport variance_report(const ParticleCloud& cloud,
                               std::span<const Vec> minimizers, double time) {
  const std::size_t kk = minimizers.size();
  std::vector<double> sums(kk, 0.0);
  std::vector<int> counts(kk, 0);
  for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
    const int k = cloud.hidden_labels[i];
    if (k < 0 || static_cast<std::size_t>(k) >= kk) {
      throw UnsupportedDiagnostic("particle label without a minimizer");
    }
    sums[k] += (cloud.positions[i] - minimizers[k]).squaredNorm();
    ++counts[k];
  }
  VarianceReport r;
  r.time = time;
  for (std::size_t k = 0; k < kk; ++k) {
    if (counts[k] == 0) {
      throw InvalidParameter("cluster " + std::to_string(k) + " has no particles");
    }
    r.per_cluster.push_back(0.5 * sums[k] / counts[k]);
    r.total += r.per_cluster.back();
  }
  return r;
}

VarianceReport variance_report(const ParticleCloud& cloud,
                               std::span<const Objective> objectives, double time) {
  std::vector<Vec> minimizers;
  for (const Objective& obj : objectives) {
    if (!obj.minimizer()) {
      throw UnsupportedDiagnostic("variance needs a known minimizer for '" +
                                  obj.name() + "'");
    }
    minimizers.push_back(*obj.minimizer());
  }
  return variance_report(cloud, minimizers, time);
}

RateEstimate theoretical_rate(const HyperParams& hp, double grad_lipschitz,
                              int dim, double tau_theory) {
  if (!(tau_theory >= 0.0 && tau_theory < 1.0)) {
    throw InvalidParameter("tau_theory must lie in [0, 1)");
  }
  const double margin = theory_margin(hp, grad_lipschitz, dim);
  return RateEstimate{(1.0 - tau_theory) * margin, margin > 0.0};
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidParameter("W1 of an empty measure");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Walk the merged breakpoints of both quantile functions.
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    // Advance both on a shared breakpoint (compared exactly in integers).
    const auto lhs = (i + 1) * b.size();
    const auto rhs = (j + 1) * a.size();
    if (lhs <= rhs) ++i;
    if (rhs <= lhs) ++j;
  }
  return total;
}

std::vector<Vec> random_directions(int dim, int count, CounterRng& rng) {
  if (dim < 1 || count < 1) throw InvalidParameter("need dim >= 1 and count >= 1");
  std::vector<Vec> dirs;
  dirs.reserve(count);
  while (static_cast<int>(dirs.size()) < count) {
    Vec v = rng.normal_vector(dim);
    const double n = v.norm();
    if (n > 1e-12) dirs.push_back(v / n);
  }
  return dirs;
}

double sliced_w1(std::span<const Vec> cloud_a, std::span<const Vec> cloud_b,
                 std::span<const Vec> directions) {
  if (cloud_a.empty() || cloud_b.empty()) throw InvalidParameter("empty cloud");
  if (directions.empty()) throw InvalidParameter("no projection directions");
  const Eigen::Index d = cloud_a.front().size();
  if (cloud_b.front().size() != d) throw InvalidParameter("clouds differ in dimension");
  double sum = 0.0;
  for (const Vec& dir : directions) {
    if (dir.size() != d) throw InvalidParameter("direction has wrong dimension");
    std::vector<double> pa, pb;
    pa.reserve(cloud_a.size());
    pb.reserve(cloud_b.size());
    for (const Vec& x : cloud_a) pa.push_back(x.dot(dir));
    for (const Vec& x : cloud_b) pb.push_back(x.dot(dir));
    sum += wasserstein1_1d(std::move(pa), std::move(pb));
  }
  return sum / static_cast<double>(directions.size());
}

double sliced_w1(std::span<const Vec> cloud_a, std::span<const Vec> cloud_b,
                 int projections, CounterRng& rng) {
  if (cloud_a.empty() || cloud_b.empty()) throw InvalidParameter("empty cloud");
  const auto dirs = random_directions(static_cast<int>(cloud_a.front().size()),
                                      projections, rng);
  return sliced_w1(cloud_a, cloud_b, dirs);
}

namespace {

std::vector<ParticleCloud> checkpoint_clouds(const BenchmarkProblem& problem,
                                             int per_cluster, const HyperParams& hp,
                                             std::int64_t steps, int checkpoints,
                                             const InitSpec& init, std::uint64_t seed,
                                             const Executor& exec) {
  std::vector<std::int64_t> marks;
  for (int c = 0; c <= checkpoints; ++c) marks.push_back(steps * c / checkpoints);
  std::vector<ParticleCloud> out;
  ParticleCloud cloud = init_cloud(problem.clusters(), problem.dim(), per_cluster, init, seed);
  std::size_t next = 0;
  for (std::int64_t s = 0;; ++s) {
    while (next < marks.size() && marks[next] == s) {
      out.push_back(cloud);
      ++next;
    }
    if (s == steps) break;
    cloud = em_step(cloud, problem.cluster_objectives, hp, exec);
  }
  return out;
}

}  // namespace

MeanFieldScan meanfield_scan(const BenchmarkProblem& problem, const HyperParams& hp,
                             std::span<const int> sizes, int reference_size,
                             std::span<const std::uint64_t> seeds,
                             std::int64_t steps, const MeanFieldOptions& options,
                             const Executor& exec) {
  if (sizes.empty() || seeds.empty()) throw InvalidParameter("empty size or seed list");
  if (options.checkpoints < 1) throw InvalidParameter("need at least one checkpoint");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1 || sizes[i] > reference_size) {
      throw InvalidParameter("sizes must lie in [1, reference_size]");
    }
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw InvalidParameter("sizes must increase");
  }
  const int kk = problem.clusters();
  const auto n_seeds = seeds.size();

  // per_seed[s][n]
  std::vector<std::vector<double>> per_seed(n_seeds, std::vector<double>(sizes.size()));
  for (std::size_t s = 0; s < n_seeds; ++s) {
    // Same seed as the smaller runs: particle i of cluster k shares its
    // initial draw and noise stream across all sizes (synchronous coupling).
    const auto ref = checkpoint_clouds(problem, reference_size, hp, steps,
                                       options.checkpoints, options.init, seeds[s], exec);
    CounterRng proj_rng(seeds[s], {tag(Stream::kProjection)});
    const auto dirs = random_directions(problem.dim(), options.projections, proj_rng);
    std::vector<std::vector<std::vector<Vec>>> ref_clusters(ref.size());
    for (std::size_t c = 0; c < ref.size(); ++c) {
      for (int k = 0; k < kk; ++k) ref_clusters[c].push_back(ref[c].cluster(k));
    }
    for (std::size_t n = 0; n < sizes.size(); ++n) {
      const auto run = checkpoint_clouds(problem, sizes[n], hp, steps,
                                         options.checkpoints, options.init, seeds[s], exec);
      double sup = 0.0;
      for (std::size_t c = 0; c < run.size(); ++c) {
        double avg = 0.0;
        for (int k = 0; k < kk; ++k) {
          avg += sliced_w1(run[c].cluster(k), ref_clusters[c][k], dirs);
        }
        sup = std::max(sup, avg / kk);
      }
      per_seed[s][n] = sup;
    }
  }

  MeanFieldScan scan;
  scan.sizes.assign(sizes.begin(), sizes.end());
  scan.reference_size = reference_size;
  for (std::size_t n = 0; n < sizes.size(); ++n) {
    double mean = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) mean += per_seed[s][n];
    mean /= static_cast<double>(n_seeds);
    double var = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      var += (per_seed[s][n] - mean) * (per_seed[s][n] - mean);
    }
    const double se = n_seeds > 1
                          ? std::sqrt(var / static_cast<double>(n_seeds - 1) /
                                      static_cast<double>(n_seeds))
                          : 0.0;
    scan.discrepancy.push_back(mean);
    scan.std_error.push_back(se);
  }
  int inversions = 0;
  for (std::size_t n = 1; n < scan.discrepancy.size(); ++n) {
    if (scan.discrepancy[n] > scan.discrepancy[n - 1]) ++inversions;
  }
  scan.decreasing = inversions <= 1;
  return scan;
}

double selection_rate(int agent, std::span<const int> selected,
                      std::span<const int> hidden_labels) {
  if (selected.empty()) throw InvalidParameter("no selected agents");
  int same = 0;
  for (int i : selected) {
    if (hidden_labels[i] == hidden_labels[agent]) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(selected.size());
}

std::vector<SrPoint> sr_curve(std::span<const RoundLog> logs,
                              std::span<const int> hidden_labels) {
  const int n = static_cast<int>(hidden_labels.size());
  std::vector<int> cluster_size;
  for (int label : hidden_labels) {
    if (label >= static_cast<int>(cluster_size.size())) cluster_size.resize(label + 1, 0);
    ++cluster_size[label];
  }
  std::vector<SrPoint> out;
  for (const RoundLog& log : logs) {
    if (static_cast<int>(log.selections.size()) != n) {
      throw UnsupportedDiagnostic("round " + std::to_string(log.round) +
                                  " has no selection log");
    }
    SrPoint p;
    p.round = log.round;
    int counted = 0;
    for (int j : log.participants) {
      if (log.selections[j].empty()) continue;
      p.sr += selection_rate(j, log.selections[j], hidden_labels);
      p.oracle += oracle_sr(log.epsilon, cluster_size[hidden_labels[j]], n);
      ++counted;
    }
    if (counted == 0) {
      throw UnsupportedDiagnostic("round " + std::to_string(log.round) +
                                  " has no selection log");
    }
    p.sr /= counted;
    p.oracle /= counted;
    out.push_back(p);
  }
  return out;
}

}  // namespace fedcbo
