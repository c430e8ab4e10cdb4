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

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

namespace fedcbo {

ConsensusPoint consensus_point(std::span<const Vec> positions,
                               std::span<const double> losses, double alpha) {
  if (positions.empty()) throw InvalidParameter("consensus of an empty set");
  if (positions.size() != losses.size()) {
    throw InvalidParameter("positions and losses differ in length");
  }
  if (!(alpha >= 0) || !std::isfinite(alpha)) {
    throw InvalidParameter("alpha must be finite and >= 0");
  }
  const Eigen::Index d = positions.front().size();
  double min_loss = losses.front();
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i])) {
      throw InvalidParameter("non-finite loss at index " + std::to_string(i));
    }
    if (positions[i].size() != d) {
      throw InvalidParameter("position " + std::to_string(i) + " has wrong dimension");
    }
    min_loss = std::min(min_loss, losses[i]);
  }

  Vec weighted = Vec::Zero(d);
  double mass = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double w = std::exp(-alpha * (losses[i] - min_loss));
    weighted += w * positions[i];
    mass += w;
  }
  ConsensusPoint out;
  out.value = weighted / mass;
  out.total_weight = mass;
  out.log_mass = -alpha * min_loss + std::log(mass);
  out.alpha = alpha;
  return out;
}

ConsensusPoint consensus_point(std::span<const Vec> positions,
                               const Objective& objective, double alpha) {
  std::vector<double> losses;
  losses.reserve(positions.size());
  for (const Vec& p : positions) losses.push_back(objective.eval(p));
  return consensus_point(positions, losses, alpha);
}

AgentConsensus consensus_point_for_agent(
    int agent, std::span<const int> downloaded,
    const std::function<const Vec&(int)>& model_of,
    const std::function<double(const Vec&)>& evaluate, double alpha,
    NonFinitePolicy policy) {
  if (downloaded.empty()) {
    throw InvalidParameter("agent " + std::to_string(agent) +
                           " has no downloaded models");
  }
  AgentConsensus out;
  std::vector<Vec> positions;
  for (int id : downloaded) {
    double loss = 0.0;
    try {
      loss = evaluate(model_of(id));
    } catch (const std::exception& e) {
      throw EvaluationError("agent " + std::to_string(agent) +
                                " failed to evaluate model " +
                                std::to_string(id) + ": " + e.what(),
                            agent, id);
    }
    if (!std::isfinite(loss)) {
      if (policy == NonFinitePolicy::kExclude) {
        out.excluded.push_back(id);
        continue;
      }
      throw EvaluationError("agent " + std::to_string(agent) +
                                " got a non-finite loss for model " +
                                std::to_string(id),
                            agent, id);
    }
    out.models.push_back(id);
    out.losses.push_back(loss);
    positions.push_back(model_of(id));
  }
  if (positions.empty()) {
    throw EvaluationError("agent " + std::to_string(agent) +
                              ": every downloaded model has a non-finite loss",
                          agent, -1);
  }
  out.point = consensus_point(positions, out.losses, alpha);
  return out;
}

double stability_gap(std::span<const Vec> cloud_a, std::span<const Vec> cloud_b,
                     const Objective& objective, double alpha) {
  if (cloud_a.empty() || cloud_b.empty()) {
    throw InvalidParameter("stability gap needs nonempty clouds");
  }
  if (cloud_a.front().size() != cloud_b.front().size()) {
    throw InvalidParameter("clouds differ in dimension");
  }
  const ConsensusPoint a = consensus_point(cloud_a, objective, alpha);
  const ConsensusPoint b = consensus_point(cloud_b, objective, alpha);
  return (a.value - b.value).norm();
}

}  // namespace fedcbo
