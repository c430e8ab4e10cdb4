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

#ifndef FEDCBO_FEDCBO_H_
#define FEDCBO_FEDCBO_H_

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "fedcbo/common.h"
#include "fedcbo/consensus.h"
#include "fedcbo/hyperparams.h"
#include "fedcbo/objectives.h"
#include "fedcbo/parallel.h"
#include "fedcbo/rng.h"

namespace fedcbo {

double epsilon_schedule(int round, const EpsilonSchedule& schedule = {});

// floor(x + 1/2) with a small tolerance so that values such as 0.45 * 10,
// which land at 4.4999999999999991 in binary, still round up.
int round_half_up(double x);

// N x (N - 1) sampling scores. Row j holds agent j's accumulated affinity
// for every other agent; there is no self entry. Starts at zero.
class LikelihoodMatrix {
 public:
  explicit LikelihoodMatrix(int agents = 0);

  int agents() const { return agents_; }
  double score(int agent, int peer) const;
  void add(int agent, int peer, double delta);
  std::span<const double> row(int agent) const;

  // Column of `peer` within row `agent`.
  static int column(int agent, int peer);

 private:
  void check(int agent, int peer) const;

  int agents_;
  std::vector<double> scores_;
};

struct Selection {
  std::vector<int> explored;   // uniform draws, ascending
  std::vector<int> exploited;  // top scorers, in rank order
  bool clamped = false;        // budget exceeded the available peers

  std::vector<int> all() const;
  std::size_t size() const { return explored.size() + exploited.size(); }
};

// Epsilon-greedy peer selection for `agent` among `participants`:
// round_half_up(eps * M) peers uniformly without replacement, then the
// remaining budget filled with the highest scores among the rest (ties to
// the lower id). `scores_row` is the agent's LikelihoodMatrix row.
Selection greedy_sample(int agent, std::span<const double> scores_row,
                        std::span<const int> participants, int budget,
                        double epsilon, CounterRng& rng);

// An agent's private data, seen only through its loss.
struct LocalTask {
  Objective loss;  // full local dataset; weights and scores use this
  // Optional mini-batch gradient; loss.grad() is used when empty.
  std::function<Vec(const Vec&, CounterRng&)> stochastic_grad;
};

struct LocalUpdateConfig {
  int steps = 1;
  double rate = 0.1;
  double momentum = 0.0;
};

// steps x (heavy-ball) gradient descent; velocity starts at zero.
Vec local_update(const Vec& theta, const LocalTask& task,
                 const LocalUpdateConfig& config, CounterRng& rng);

// tau steps at rate lambda2 * gamma.
LocalUpdateConfig local_update_config(const HyperParams& hp);

struct AggregationResult {
  Vec model;
  double own_loss = 0.0;
  // (peer, L_j^j - L_j^peer) for each peer that entered the average.
  std::vector<std::pair<int, double>> score_deltas;
  AgentConsensus consensus;
};

// theta_j <- theta_j - lambda1 gamma (theta_j - m_j) with m_j the Gibbs
// average of the downloaded models under agent j's loss. `models` is the
// frozen snapshot of every agent's model. Models with non-finite loss are
// dropped from both the average and the score update.
AggregationResult local_aggregation(int agent, std::span<const Vec> models,
                                    std::span<const int> downloads,
                                    const Objective& local_loss,
                                    const HyperParams& hp);

struct FedCboState {
  std::vector<Vec> models;
  LikelihoodMatrix scores;
};

FedCboState init_fedcbo_state(std::vector<Vec> models);

struct RoundLog {
  int round = 0;
  double epsilon = 0.0;
  std::vector<int> participants;
  // Peers downloaded by each agent; empty for non-participants.
  std::vector<std::vector<int>> selections;
  double mean_local_loss = 0.0;
  int excluded_models = 0;
  bool budget_clamped = false;
};

// One communication round: pick G_n, run LocalUpdate for each j in G_n,
// freeze the post-update models, then run LocalAggregation for each j in G_n
// against the frozen snapshot. `state` is left untouched if anything throws.
RoundLog fedcbo_round(FedCboState& state, std::span<const LocalTask> tasks,
                      const HyperParams& hp, int round, std::uint64_t seed,
                      const Executor& exec = Executor{});

// Subset of agents taking part in a round (ascending ids).
std::vector<int> participating_agents(int agents, double fraction, int round,
                                      std::uint64_t seed);

// Expected selection rate if every exploitation pick is correct:
// (1 - eps) + eps (N_k - 1) / (N - 1).
double oracle_sr(double epsilon, int cluster_size, int agents);

}  // namespace fedcbo

#endif  // FEDCBO_FEDCBO_H_
