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

#ifndef FEDCBO_OBJECTIVES_H_
#define FEDCBO_OBJECTIVES_H_

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedcbo/common.h"

namespace fedcbo {

inline constexpr double kDefaultGradBound = 1e3;

// Rescales `raw` onto the ball of radius `bound` when it lies outside it.
// Direction is preserved; the zero vector maps to itself.
Vec clamp_gradient(const Vec& raw, double bound);

// A loss L: R^d -> R with a bounded, Lipschitz gradient oracle.
//
// The gradient returned by grad() is the raw gradient passed through
// clamp_gradient(grad_bound), which makes objectives with unbounded raw
// gradients (quadratics, Rastrigin) globally satisfy a gradient bound.
// Inside clamp_free_radius() of the minimizer the clamp is inactive and
// grad_lipschitz() bounds the gradient's Lipschitz constant.
//
// Immutable after construction; safe to evaluate concurrently.
class Objective {
 public:
  using EvalFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;

  struct Constants {
    double grad_bound = std::numeric_limits<double>::infinity();
    double grad_lipschitz = std::numeric_limits<double>::infinity();
    // Radius around the minimizer inside which clamping never triggers.
    std::optional<double> clamp_free_radius;
  };

  Objective(int dim, EvalFn eval, GradFn raw_grad, Constants constants,
            std::optional<Vec> minimizer = std::nullopt,
            std::optional<double> min_value = std::nullopt,
            std::string name = "custom");

  int dim() const { return dim_; }
  double eval(const Vec& theta) const;
  Vec grad(const Vec& theta) const;
  Vec raw_grad(const Vec& theta) const;

  const std::optional<Vec>& minimizer() const { return minimizer_; }
  const std::optional<double>& min_value() const { return min_value_; }
  double grad_bound() const { return constants_.grad_bound; }
  double grad_lipschitz() const { return constants_.grad_lipschitz; }
  const std::optional<double>& clamp_free_radius() const {
    return constants_.clamp_free_radius;
  }
  const std::string& name() const { return name_; }

 private:
  void check_dim(const Vec& theta) const;

  int dim_;
  EvalFn eval_;
  GradFn raw_grad_;
  Constants constants_;
  std::optional<Vec> minimizer_;
  std::optional<double> min_value_;
  std::string name_;
};

// scale * |theta - center|^2.
Objective make_quadratic(int dim, const Vec& center, double scale,
                         double grad_bound = kDefaultGradBound);

// 10 d + sum_i [(x_i - c_i)^2 - 10 cos(2 pi (x_i - c_i))].
Objective make_rastrigin(int dim, const Vec& center,
                         double grad_bound = kDefaultGradBound);

// One objective per hidden cluster, each with a known minimizer.
struct BenchmarkProblem {
  std::vector<Objective> cluster_objectives;
  // Smallest pairwise distance between cluster minimizers.
  double separation = 0.0;

  int clusters() const { return static_cast<int>(cluster_objectives.size()); }
  int dim() const;
  std::vector<Vec> minimizers() const;
  // Largest grad_lipschitz over the clusters (the M in the decay condition).
  double grad_lipschitz() const;
};

BenchmarkProblem make_problem(std::vector<Objective> objectives);

// Builds K wells of the given kind ("quadratic" or "rastrigin"). For K = 2
// the minimizers sit at +offset * 1 and -offset * 1. For K > 2 they are
// spread on a circle of radius offset * sqrt(d) in the first coordinate
// plane (d >= 2 required).
BenchmarkProblem make_wells(std::string_view kind, int dim, int clusters,
                            double offset, double scale = 1.0,
                            double grad_bound = kDefaultGradBound);

}  // namespace fedcbo

#endif  // FEDCBO_OBJECTIVES_H_
