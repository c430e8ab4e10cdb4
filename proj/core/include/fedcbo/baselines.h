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

#ifndef FEDCBO_BASELINES_H_
#define FEDCBO_BASELINES_H_

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fedcbo/fedcbo.h"

namespace fedcbo {

enum class BaselineKind { kFedAvg, kLocalOnly, kIfca };

std::string_view to_string(BaselineKind kind);
BaselineKind parse_baseline(std::string_view name);

struct BaselineRoundLog {
  int round = 0;
  double mean_local_loss = 0.0;
  // IFCA only: index of the server model each agent adopted.
  std::vector<int> assignment;
};

// Every agent runs LocalUpdate from the shared global model; the new global
// model is the uniform mean of the results.
BaselineRoundLog fedavg_round(Vec& global_model, std::span<const LocalTask> tasks,
                              const HyperParams& hp, int round,
                              std::uint64_t seed, const Executor& exec = Executor{});

// Each agent adopts the server model with the lowest loss on its own data
// (ties to the lower model id), runs LocalUpdate from it, and each server
// model becomes the mean over its adopters. Models nobody adopted persist.
BaselineRoundLog ifca_round(std::vector<Vec>& server_models,
                            std::span<const LocalTask> tasks,
                            const HyperParams& hp, int round,
                            std::uint64_t seed, const Executor& exec = Executor{});

// LocalUpdate on every agent, no communication.
BaselineRoundLog local_only_round(std::vector<Vec>& models,
                                  std::span<const LocalTask> tasks,
                                  const HyperParams& hp, int round,
                                  std::uint64_t seed,
                                  const Executor& exec = Executor{});

// Index of the lowest-loss model under `loss` (ties to the lower index).
int best_model(std::span<const Vec> models, const Objective& loss);

}  // namespace fedcbo

#endif  // FEDCBO_BASELINES_H_
