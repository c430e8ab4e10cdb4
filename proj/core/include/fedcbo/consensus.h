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

#ifndef FEDCBO_CONSENSUS_H_
#define FEDCBO_CONSENSUS_H_

#include <functional>
#include <span>
#include <vector>

#include "fedcbo/common.h"
#include "fedcbo/objectives.h"

namespace fedcbo {

// Gibbs-weighted average sum_i theta_i exp(-alpha L_i) / sum_i exp(-alpha L_i).
struct ConsensusPoint {
  Vec value;
  // sum_i exp(-alpha (L_i - L_min)); always >= 1.
  double total_weight = 0.0;
  // log sum_i exp(-alpha L_i), the unshifted log normalization mass.
  double log_mass = 0.0;
  double alpha = 0.0;
};

// Weights are evaluated as exp(-alpha (L_i - min_j L_j)) so the result is
// finite for any alpha and invariant to shifting all losses by a constant.
// Summation runs in index order. alpha == 0 gives the plain mean.
ConsensusPoint consensus_point(std::span<const Vec> positions,
                               std::span<const double> losses, double alpha);

// Convenience overload evaluating `objective` at every position.
ConsensusPoint consensus_point(std::span<const Vec> positions,
                               const Objective& objective, double alpha);

enum class NonFinitePolicy {
  kReject,   // throw EvaluationError naming the model
  kExclude,  // drop the model from the weighted average
};

struct AgentConsensus {
  ConsensusPoint point;
  std::vector<int> models;      // ids that entered the average, input order
  std::vector<double> losses;   // L_j^i for each entry of `models`
  std::vector<int> excluded;    // ids dropped under NonFinitePolicy::kExclude
};

// Consensus point from agent j's perspective: every downloaded model i is
// scored on j's data (L_j^i) and weighted by exp(-alpha L_j^i).
AgentConsensus consensus_point_for_agent(
    int agent, std::span<const int> downloaded,
    const std::function<const Vec&(int)>& model_of,
    const std::function<double(const Vec&)>& evaluate, double alpha,
    NonFinitePolicy policy = NonFinitePolicy::kReject);

// |m[A] - m[B]| for two clouds weighted by the same objective.
double stability_gap(std::span<const Vec> cloud_a, std::span<const Vec> cloud_b,
                     const Objective& objective, double alpha);

}  // namespace fedcbo

#endif  // FEDCBO_CONSENSUS_H_
