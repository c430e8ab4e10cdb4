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

#include "fedcbo/fedcbo.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fedcbo {

double EpsilonSchedule::at(int round) const {
  if (round < 0) throw InvalidParameter("round index must be >= 0");
  return std::max(start - decay * round, floor);
}

double epsilon_schedule(int round, const EpsilonSchedule& schedule) {
  return schedule.at(round);
}

int round_half_up(double x) {
  return static_cast<int>(std::floor(x + 0.5 + 1e-9));
}

LikelihoodMatrix::LikelihoodMatrix(int agents) : agents_(agents) {
  if (agents < 0) throw InvalidParameter("agent count must be >= 0");
  const auto n = static_cast<std::size_t>(agents);
  scores_.assign(agents > 0 ? n * (n - 1) : 0, 0.0);
}

int LikelihoodMatrix::column(int agent, int peer) {
  return peer < agent ? peer : peer - 1;
}

void LikelihoodMatrix::check(int agent, int peer) const {
  if (agent < 0 || agent >= agents_ || peer < 0 || peer >= agents_) {
    throw InvalidParameter("likelihood index out of range");
  }
  if (agent == peer) throw InvalidParameter("likelihood matrix has no self entries");
}

double LikelihoodMatrix::score(int agent, int peer) const {
  check(agent, peer);
  return scores_[static_cast<std::size_t>(agent) * (agents_ - 1) + column(agent, peer)];
}

void LikelihoodMatrix::add(int agent, int peer, double delta) {
  check(agent, peer);
  scores_[static_cast<std::size_t>(agent) * (agents_ - 1) + column(agent, peer)] += delta;
}

std::span<const double> LikelihoodMatrix::row(int agent) const {
  if (agent < 0 || agent >= agents_) throw InvalidParameter("agent out of range");
  const auto width = static_cast<std::size_t>(agents_ - 1);
  return std::span<const double>(scores_).subspan(agent * width, width);
}

std::vector<int> Selection::all() const {
  std::vector<int> out = explored;
  out.insert(out.end(), exploited.begin(), exploited.end());
  return out;
}

Selection greedy_sample(int agent, std::span<const double> scores_row,
                        std::span<const int> participants, int budget,
                        double epsilon, CounterRng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw InvalidParameter("epsilon must lie in [0, 1]");
  }
  if (budget < 0) throw InvalidParameter("download budget must be >= 0");

  std::vector<int> peers;
  peers.reserve(participants.size());
  for (int i : participants) {
    if (i != agent) peers.push_back(i);
  }
  for (int i : peers) {
    if (LikelihoodMatrix::column(agent, i) >= static_cast<int>(scores_row.size())) {
      throw InvalidParameter("score row too short for peer " + std::to_string(i));
    }
  }

  Selection sel;
  int m = budget;
  if (m > static_cast<int>(peers.size())) {
    m = static_cast<int>(peers.size());
    sel.clamped = true;
  }
  const int n_explore = std::min(m, round_half_up(epsilon * m));

  // Partial Fisher-Yates over the peer list.
  for (int t = 0; t < n_explore; ++t) {
    const auto pick = t + static_cast<int>(rng.below(peers.size() - t));
    std::swap(peers[t], peers[pick]);
  }
  sel.explored.assign(peers.begin(), peers.begin() + n_explore);
  std::sort(sel.explored.begin(), sel.explored.end());

  std::vector<int> rest(peers.begin() + n_explore, peers.end());
  auto score_of = [&](int i) { return scores_row[LikelihoodMatrix::column(agent, i)]; };
  const int n_exploit = m - n_explore;
  std::partial_sort(rest.begin(), rest.begin() + n_exploit, rest.end(),
                    [&](int a, int b) {
                      const double sa = score_of(a), sb = score_of(b);
                      if (sa != sb) return sa > sb;
                      return a < b;
                    });
  sel.exploited.assign(rest.begin(), rest.begin() + n_exploit);
  return sel;
}

Vec local_update(const Vec& theta, const LocalTask& task,
                 const LocalUpdateConfig& config, CounterRng& rng) {
  if (config.steps < 0) throw InvalidParameter("local steps must be >= 0");
  if (config.rate < 0) throw InvalidParameter("local rate must be >= 0");
  Vec x = theta;
  Vec velocity = Vec::Zero(theta.size());
  for (int q = 0; q < config.steps; ++q) {
    const Vec g = task.stochastic_grad ? task.stochastic_grad(x, rng) : task.loss.grad(x);
    if (config.momentum != 0.0) {
      velocity = config.momentum * velocity + g;
      x -= config.rate * velocity;
    } else {
      x -= config.rate * g;
    }
  }
  return x;
}

LocalUpdateConfig local_update_config(const HyperParams& hp) {
  return LocalUpdateConfig{hp.local_steps, hp.lambda2 * hp.gamma, hp.momentum};
}

AggregationResult local_aggregation(int agent, std::span<const Vec> models,
                                    std::span<const int> downloads,
                                    const Objective& local_loss,
                                    const HyperParams& hp) {
  if (agent < 0 || agent >= static_cast<int>(models.size())) {
    throw InvalidParameter("agent id out of range");
  }
  for (int i : downloads) {
    if (i < 0 || i >= static_cast<int>(models.size()) || i == agent) {
      throw InvalidParameter("agent " + std::to_string(agent) +
                             " has an invalid download id " + std::to_string(i));
    }
  }

  AggregationResult out;
  const Vec& own = models[agent];
  try {
    out.own_loss = local_loss.eval(own);
  } catch (const std::exception& e) {
    throw EvaluationError("agent " + std::to_string(agent) +
                              " failed to evaluate its own model: " + e.what(),
                          agent, agent);
  }
  if (!std::isfinite(out.own_loss)) {
    throw EvaluationError("agent " + std::to_string(agent) +
                              " has a non-finite loss on its own model",
                          agent, agent);
  }

  std::vector<int> pool;
  if (hp.include_self) pool.push_back(agent);
  pool.insert(pool.end(), downloads.begin(), downloads.end());
  if (pool.empty()) {
    out.model = own;
    return out;
  }

  out.consensus = consensus_point_for_agent(
      agent, pool, [&](int i) -> const Vec& { return models[i]; },
      [&](const Vec& theta) {
        return &theta == &own ? out.own_loss : local_loss.eval(theta);
      },
      hp.alpha, NonFinitePolicy::kExclude);

  const double step = hp.lambda1 * hp.gamma;
  out.model = own - step * (own - out.consensus.point.value);
  for (std::size_t t = 0; t < out.consensus.models.size(); ++t) {
    const int i = out.consensus.models[t];
    if (i == agent) continue;
    out.score_deltas.emplace_back(i, out.own_loss - out.consensus.losses[t]);
  }
  return out;
}

FedCboState init_fedcbo_state(std::vector<Vec> models) {
  if (models.empty()) throw InvalidParameter("FedCBO needs at least one agent");
  FedCboState s;
  const auto n = static_cast<int>(models.size());
  s.models = std::move(models);
  s.scores = LikelihoodMatrix(n);
  return s;
}

std::vector<int> participating_agents(int agents, double fraction, int round,
                                      std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidParameter("participation fraction must lie in (0, 1]");
  }
  std::vector<int> ids(agents);
  std::iota(ids.begin(), ids.end(), 0);
  const int count = std::clamp(round_half_up(fraction * agents), 1, agents);
  if (count == agents) return ids;
  CounterRng rng(seed, {tag(Stream::kParticipation), static_cast<std::uint64_t>(round)});
  for (int t = 0; t < count; ++t) {
    const auto pick = t + static_cast<int>(rng.below(static_cast<std::uint64_t>(agents - t)));
    std::swap(ids[t], ids[pick]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

RoundLog fedcbo_round(FedCboState& state, std::span<const LocalTask> tasks,
                      const HyperParams& hp, int round, std::uint64_t seed,
                      const Executor& exec) {
  const int n = static_cast<int>(state.models.size());
  if (static_cast<int>(tasks.size()) != n) {
    throw InvalidParameter("one local task per agent required");
  }
  if (state.scores.agents() != n) throw InvalidParameter("score matrix size mismatch");

  RoundLog log;
  log.round = round;
  log.epsilon = hp.epsilon.at(round);
  log.participants = participating_agents(n, hp.participation, round, seed);
  log.selections.assign(n, {});
  const auto& g = log.participants;

  // LocalUpdate on every participant; others keep their model.
  std::vector<Vec> snapshot = state.models;
  const LocalUpdateConfig lu = local_update_config(hp);
  exec.parallel_for(g.size(), [&](std::size_t t) {
    const int j = g[t];
    CounterRng rng(seed, {tag(Stream::kLocalUpdate), static_cast<std::uint64_t>(j),
                          static_cast<std::uint64_t>(round)});
    Vec updated = local_update(state.models[j], tasks[j], lu, rng);
    if (!updated.allFinite()) {
      throw DivergenceError("agent " + std::to_string(j) +
                                " diverged during local update in round " +
                                std::to_string(round),
                            round, j);
    }
    snapshot[j] = std::move(updated);
  });

  // LocalAggregation against the frozen snapshot.
  std::vector<AggregationResult> results(g.size());
  std::vector<Selection> selections(g.size());
  exec.parallel_for(g.size(), [&](std::size_t t) {
    const int j = g[t];
    CounterRng rng(seed, {tag(Stream::kSampling), static_cast<std::uint64_t>(j),
                          static_cast<std::uint64_t>(round)});
    selections[t] = greedy_sample(j, state.scores.row(j), g, hp.downloads,
                                  log.epsilon, rng);
    const std::vector<int> downloads = selections[t].all();
    results[t] = local_aggregation(j, snapshot, downloads, tasks[j].loss, hp);
  });

  // Commit.
  std::vector<Vec> next = std::move(snapshot);
  double loss_sum = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) {
    const int j = g[t];
    next[j] = std::move(results[t].model);
    for (const auto& [peer, delta] : results[t].score_deltas) {
      state.scores.add(j, peer, delta);
    }
    log.selections[j] = selections[t].all();
    log.budget_clamped = log.budget_clamped || selections[t].clamped;
    log.excluded_models += static_cast<int>(results[t].consensus.excluded.size());
    loss_sum += results[t].own_loss;
  }
  state.models = std::move(next);
  log.mean_local_loss = g.empty() ? 0.0 : loss_sum / static_cast<double>(g.size());
  return log;
}

double oracle_sr(double epsilon, int cluster_size, int agents) {
  if (agents < 2) throw InvalidParameter("oracle SR needs at least two agents");
  if (cluster_size < 1 || cluster_size > agents) {
    throw InvalidParameter("cluster size out of range");
  }
  return (1.0 - epsilon) +
         epsilon * static_cast<double>(cluster_size - 1) / static_cast<double>(agents - 1);
}

}  // namespace fedcbo
