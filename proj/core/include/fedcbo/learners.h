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

#ifndef FEDCBO_LEARNERS_H_
#define FEDCBO_LEARNERS_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "fedcbo/common.h"
#include "fedcbo/objectives.h"
#include "fedcbo/rng.h"

namespace fedcbo {

enum class Activation { kRelu, kTanh };

// Multinomial logistic regression when hidden == 0, otherwise a
// one-hidden-layer MLP. Parameters are flattened as
//   W1 (row-major, hidden x inputs), b1, W2 (row-major, classes x hidden), b2
// or, without a hidden layer, W (row-major, classes x inputs), b.
struct Architecture {
  int inputs = 2;
  int hidden = 0;
  int classes = 2;
  Activation activation = Activation::kRelu;

  int parameter_count() const;
};

struct Layers {
  Eigen::MatrixXd w1;
  Vec b1;
  Eigen::MatrixXd w2;
  Vec b2;
};

Layers unflatten(const Architecture& arch, const Vec& theta);
Vec flatten(const Architecture& arch, const Layers& layers);

// Scaled-uniform (Glorot) weights, zero biases.
Vec init_params(const Architecture& arch, CounterRng& rng);

// Rows of `features` are samples.
struct Shard {
  Eigen::MatrixXd features;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
};

struct DataSpec {
  int clusters = 4;
  int agents = 40;
  int samples_per_agent = 100;
  int feature_dim = 8;
  int classes = 4;
  std::uint64_t seed = 1;
  int test_per_cluster = 500;
  // Class means sit on a circle of this radius in the first coordinate plane.
  double class_radius = 2.0;
  double noise = 1.0;
  bool allow_unequal_clusters = false;
};

// Class-conditional Gaussian blobs; cluster k sees every sample rotated by
// 2 pi k / K in each coordinate plane (0,1), (2,3), ...
struct ClusteredDataset {
  DataSpec spec;
  std::vector<double> rotation_angles;
  std::vector<Vec> class_means;  // unrotated
  std::vector<Shard> shards;     // one per agent
  std::vector<int> agent_cluster;  // hidden; harness use only
  std::vector<Shard> test_sets;    // one per cluster
};

ClusteredDataset generate_clustered_data(const DataSpec& spec);

// Rotates each coordinate pair by `angle`; a trailing odd coordinate is kept.
Vec rotate_pairs(const Vec& x, double angle);

// Mean cross-entropy over the selected rows (all rows when `rows` is empty).
// Writes the exact mean gradient into `grad` when non-null.
double cross_entropy(const Architecture& arch, const Vec& theta,
                     const Shard& shard, Vec* grad,
                     std::span<const int> rows = {});

double accuracy(const Architecture& arch, const Vec& theta, const Shard& shard);

// Full-shard empirical loss as an Objective. No minimizer metadata.
Objective empirical_loss(const Architecture& arch,
                         std::shared_ptr<const Shard> shard);

// Gradient on `batch` rows drawn without replacement; batch <= 0 or
// batch >= shard size uses the full shard.
Vec minibatch_gradient(const Architecture& arch, const Vec& theta,
                       const Shard& shard, int batch, CounterRng& rng);

Vec sgd_step(const Architecture& arch, const Vec& theta, const Shard& shard,
             double rate, int batch, CounterRng& rng);

// Columnar CSV plus a JSON manifest (seed, K, N, n, angles, agent map).
void write_dataset(const ClusteredDataset& data,
                   const std::filesystem::path& dir);
ClusteredDataset read_dataset(const std::filesystem::path& dir);

}  // namespace fedcbo

#endif  // FEDCBO_LEARNERS_H_
