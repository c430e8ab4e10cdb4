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

#include "fedcbo/baselines.h"

#include <cmath>
#include <limits>
#include <string>

namespace fedcbo {
namespace {

Vec run_local(const Vec& start, const LocalTask& task, const LocalUpdateConfig& cfg,
              std::uint64_t seed, int agent, int round) {
  CounterRng rng(seed, {tag(Stream::kLocalUpdate), static_cast<std::uint64_t>(agent),
                        static_cast<std::uint64_t>(round)});
  Vec out = local_update(start, task, cfg, rng);
  if (!out.allFinite()) {
    throw DivergenceError("agent " + std::to_string(agent) +
                              " diverged during local update in round " +
                              std::to_string(round),
                          round, agent);
  }
  return out;
}

double mean_loss(std::span<const LocalTask> tasks, std::span<const Vec> models,
                 const Executor& exec) {
  std::vector<double> losses(tasks.size());
  exec.parallel_for(tasks.size(), [&](std::size_t j) { losses[j] = tasks[j].loss.eval(models[j]); });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return losses.empty() ? 0.0 : sum / static_cast<double>(losses.size());
}

}  // namespace

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kFedAvg:
      return "fedavg";
    case BaselineKind::kLocalOnly:
      return "local";
    case BaselineKind::kIfca:
      return "ifca";
  }
  return "unknown";
}

BaselineKind parse_baseline(std::string_view name) {
  if (name == "fedavg") return BaselineKind::kFedAvg;
  if (name == "local" || name == "local_only") return BaselineKind::kLocalOnly;
  if (name == "ifca") return BaselineKind::kIfca;
  throw InvalidParameter("unknown baseline '" + std::string(name) + "'");
}

int best_model(std::span<const Vec> models, const Objective& loss) {
  if (models.empty()) throw InvalidParameter("no models to choose from");
  int best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < models.size(); ++k) {
    const double l = loss.eval(models[k]);
    if (l < best_loss) {
      best_loss = l;
      best = static_cast<int>(k);
    }
  }
  return best;
}

BaselineRoundLog fedavg_round(Vec& global_model, std::span<const LocalTask> tasks,
                              const HyperParams& hp, int round,
                              std::uint64_t seed, const Executor& exec) {
  std::vector<Vec> server{global_model};
  BaselineRoundLog log = ifca_round(server, tasks, hp, round, seed, exec);
  log.assignment.clear();
  global_model = std::move(server.front());
  return log;
}

BaselineRoundLog ifca_round(std::vector<Vec>& server_models,
                            std::span<const LocalTask> tasks,
                            const HyperParams& hp, int round,
                            std::uint64_t seed, const Executor& exec) {
  if (server_models.empty()) throw InvalidParameter("IFCA needs k >= 1 server models");
  if (tasks.empty()) throw InvalidParameter("no agents");
  const LocalUpdateConfig cfg = local_update_config(hp);

  BaselineRoundLog log;
  log.round = round;
  log.assignment.assign(tasks.size(), 0);
  std::vector<Vec> trained(tasks.size());
  exec.parallel_for(tasks.size(), [&](std::size_t j) {
    const int k = server_models.size() == 1 ? 0 : best_model(server_models, tasks[j].loss);
    log.assignment[j] = k;
    trained[j] = run_local(server_models[k], tasks[j], cfg, seed, static_cast<int>(j), round);
  });

  std::vector<Vec> next = server_models;
  std::vector<int> adopters(server_models.size(), 0);
  std::vector<Vec> sums(server_models.size());
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    const int k = log.assignment[j];
    if (adopters[k] == 0) {
      sums[k] = trained[j];
    } else {
      sums[k] += trained[j];
    }
    ++adopters[k];
  }
  for (std::size_t k = 0; k < next.size(); ++k) {
    if (adopters[k] > 0) next[k] = sums[k] / static_cast<double>(adopters[k]);
  }
  log.mean_local_loss = mean_loss(tasks, trained, exec);
  server_models = std::move(next);
  return log;
}

BaselineRoundLog local_only_round(std::vector<Vec>& models,
                                  std::span<const LocalTask> tasks,
                                  const HyperParams& hp, int round,
                                  std::uint64_t seed, const Executor& exec) {
  if (models.size() != tasks.size()) {
    throw InvalidParameter("one model per agent required");
  }
  const LocalUpdateConfig cfg = local_update_config(hp);
  std::vector<Vec> next(models.size());
  exec.parallel_for(models.size(), [&](std::size_t j) {
    next[j] = run_local(models[j], tasks[j], cfg, seed, static_cast<int>(j), round);
  });
  BaselineRoundLog log;
  log.round = round;
  log.mean_local_loss = mean_loss(tasks, next, exec);
  models = std::move(next);
  return log;
}

}  // namespace fedcbo
