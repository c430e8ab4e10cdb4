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

#ifndef FEDCBO_HYPERPARAMS_H_
#define FEDCBO_HYPERPARAMS_H_

namespace fedcbo {

// eps(n) = max(start - decay * n, floor)
struct EpsilonSchedule {
  double start = 0.5;
  double decay = 0.01;
  double floor = 0.1;

  double at(int round) const;
};

// Shared by the particle integrator and the federated protocols. Defaults
// follow the federated experiment settings (lambda1 = 10, lambda2 = 1,
// alpha = 10, gamma = 0.1); the integrator normally overrides them.
struct HyperParams {
  double lambda1 = 10.0;
  double lambda2 = 1.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double alpha = 10.0;
  double gamma = 0.1;  // discretization step size
  int local_steps = 10;  // tau: gradient steps per communication round
  int downloads = 10;    // M: models downloaded per agent per round
  EpsilonSchedule epsilon;
  double momentum = 0.0;
  int batch_size = 0;  // 0 = full shard
  double participation = 1.0;
  bool include_self = true;  // agent's own model enters its consensus point
};

// 2 lambda1 > 2 lambda2 M + d sigma1^2 + d sigma2^2 M^2, where M bounds the
// Lipschitz constant of every cluster gradient.
bool theory_regime(const HyperParams& hp, double grad_lipschitz, int dim);

// Left-hand minus right-hand side of the condition above.
double theory_margin(const HyperParams& hp, double grad_lipschitz, int dim);

}  // namespace fedcbo

#endif  // FEDCBO_HYPERPARAMS_H_
