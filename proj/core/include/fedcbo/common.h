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

#ifndef FEDCBO_COMMON_H_
#define FEDCBO_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fedcbo {

// Parameter vectors, particle positions and gradients all share this type.
using Vec = Eigen::VectorXd;

// A precondition on an argument or configuration value was violated.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A diagnostic was requested that the inputs cannot support, e.g. a variance
// functional for an objective without a known minimizer.
class UnsupportedDiagnostic : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A particle or model left the finite range during integration/training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::int64_t step, int index)
      : std::runtime_error(what), step_(step), index_(index) {}

  std::int64_t step() const { return step_; }
  int index() const { return index_; }

 private:
  std::int64_t step_;
  int index_;
};

// Evaluating an agent's loss on a downloaded model failed.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, int agent, int model)
      : std::runtime_error(what), agent_(agent), model_(model) {}

  int agent() const { return agent_; }
  int model() const { return model_; }

 private:
  int agent_;
  int model_;
};

// Configuration validation failed; carries every violated field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace fedcbo

#endif  // FEDCBO_COMMON_H_
