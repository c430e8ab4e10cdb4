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

#include "fedcbo/objectives.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace fedcbo {

Vec clamp_gradient(const Vec& raw, double bound) {
  if (!(bound > 0)) throw InvalidParameter("gradient bound must be positive");
  const double norm = raw.norm();
  if (norm <= bound) return raw;
  return raw * (bound / norm);
}

Objective::Objective(int dim, EvalFn eval, GradFn raw_grad,
                     Constants constants, std::optional<Vec> minimizer,
                     std::optional<double> min_value, std::string name)
    : dim_(dim),
      eval_(std::move(eval)),
      raw_grad_(std::move(raw_grad)),
      constants_(constants),
      minimizer_(std::move(minimizer)),
      min_value_(min_value),
      name_(std::move(name)) {
  if (dim < 1) throw InvalidParameter("objective dimension must be >= 1");
  if (!(constants_.grad_bound > 0)) {
    throw InvalidParameter("objective gradient bound must be positive");
  }
  if (minimizer_ && minimizer_->size() != dim) {
    throw InvalidParameter("minimizer dimension does not match objective");
  }
}

void Objective::check_dim(const Vec& theta) const {
  if (theta.size() != dim_) {
    throw InvalidParameter("objective '" + name_ + "' expects dimension " +
                           std::to_string(dim_) + ", got " +
                           std::to_string(theta.size()));
  }
}

double Objective::eval(const Vec& theta) const {
  check_dim(theta);
  return eval_(theta);
}

Vec Objective::raw_grad(const Vec& theta) const {
  check_dim(theta);
  return raw_grad_(theta);
}

Vec Objective::grad(const Vec& theta) const {
  Vec g = raw_grad(theta);
  if (std::isinf(constants_.grad_bound)) return g;
  return clamp_gradient(g, constants_.grad_bound);
}

Objective make_quadratic(int dim, const Vec& center, double scale,
                         double grad_bound) {
  if (!(scale > 0)) throw InvalidParameter("quadratic scale must be positive");
  if (dim < 1) throw InvalidParameter("dimension must be >= 1");
  if (center.size() != dim) {
    throw InvalidParameter("quadratic center has wrong dimension");
  }
  Objective::Constants k;
  k.grad_bound = grad_bound;
  k.grad_lipschitz = 2.0 * scale;
  // |2 s (x - c)| <= bound  <=>  |x - c| <= bound / (2 s)
  k.clamp_free_radius = grad_bound / (2.0 * scale);
  return Objective(
      dim,
      [center, scale](const Vec& x) { return scale * (x - center).squaredNorm(); },
      [center, scale](const Vec& x) -> Vec { return 2.0 * scale * (x - center); },
      k, center, 0.0, "quadratic");
}

Objective make_rastrigin(int dim, const Vec& center, double grad_bound) {
  if (dim < 1) throw InvalidParameter("dimension must be >= 1");
  if (center.size() != dim) {
    throw InvalidParameter("rastrigin center has wrong dimension");
  }
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  Objective::Constants k;
  k.grad_bound = grad_bound;
  // d^2/dx^2 [x^2 - 10 cos(2 pi x)] = 2 + 40 pi^2 cos(2 pi x)
  k.grad_lipschitz = 2.0 + 40.0 * std::numbers::pi * std::numbers::pi;
  // |grad| <= 2 |x - c| + 20 pi sqrt(d)
  const double slack = grad_bound - 20.0 * std::numbers::pi * std::sqrt(dim);
  k.clamp_free_radius = std::max(0.0, slack / 2.0);
  return Objective(
      dim,
      [center, dim](const Vec& x) {
        double total = 10.0 * dim;
        for (int i = 0; i < dim; ++i) {
          const double u = x[i] - center[i];
          total += u * u - 10.0 * std::cos(kTwoPi * u);
        }
        return total;
      },
      [center, dim](const Vec& x) -> Vec {
        Vec g(dim);
        for (int i = 0; i < dim; ++i) {
          const double u = x[i] - center[i];
          g[i] = 2.0 * u + 20.0 * std::numbers::pi * std::sin(kTwoPi * u);
        }
        return g;
      },
      k, center, 0.0, "rastrigin");
}

int BenchmarkProblem::dim() const {
  if (cluster_objectives.empty()) return 0;
  return cluster_objectives.front().dim();
}

std::vector<Vec> BenchmarkProblem::minimizers() const {
  std::vector<Vec> out;
  out.reserve(cluster_objectives.size());
  for (const Objective& obj : cluster_objectives) {
    if (!obj.minimizer()) {
      throw UnsupportedDiagnostic("objective '" + obj.name() +
                                  "' has no known minimizer");
    }
    out.push_back(*obj.minimizer());
  }
  return out;
}

double BenchmarkProblem::grad_lipschitz() const {
  double m = 0.0;
  for (const Objective& obj : cluster_objectives) {
    m = std::max(m, obj.grad_lipschitz());
  }
  return m;
}

BenchmarkProblem make_problem(std::vector<Objective> objectives) {
  if (objectives.empty()) throw InvalidParameter("problem needs >= 1 cluster");
  const int d = objectives.front().dim();
  for (const Objective& obj : objectives) {
    if (obj.dim() != d) throw InvalidParameter("cluster dimensions differ");
    if (!obj.minimizer()) {
      throw InvalidParameter("benchmark objectives must carry a minimizer");
    }
  }
  BenchmarkProblem p;
  p.cluster_objectives = std::move(objectives);
  p.separation = 0.0;
  const auto& objs = p.cluster_objectives;
  bool first = true;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    for (std::size_t j = i + 1; j < objs.size(); ++j) {
      const double dist = (*objs[i].minimizer() - *objs[j].minimizer()).norm();
      p.separation = first ? dist : std::min(p.separation, dist);
      first = false;
    }
  }
  return p;
}

BenchmarkProblem make_wells(std::string_view kind, int dim, int clusters,
                            double offset, double scale, double grad_bound) {
  if (clusters < 1) throw InvalidParameter("need at least one cluster");
  if (dim < 1) throw InvalidParameter("dimension must be >= 1");
  std::vector<Vec> centers;
  if (clusters == 1) {
    centers.push_back(Vec::Constant(dim, offset));
  } else if (clusters == 2) {
    centers.push_back(Vec::Constant(dim, offset));
    centers.push_back(Vec::Constant(dim, -offset));
  } else {
    if (dim < 2) throw InvalidParameter("K > 2 wells need dimension >= 2");
    const double radius = offset * std::sqrt(static_cast<double>(dim));
    for (int k = 0; k < clusters; ++k) {
      const double angle = 2.0 * std::numbers::pi * k / clusters;
      Vec c = Vec::Zero(dim);
      c[0] = radius * std::cos(angle);
      c[1] = radius * std::sin(angle);
      centers.push_back(c);
    }
  }
  std::vector<Objective> objs;
  for (const Vec& c : centers) {
    if (kind == "quadratic") {
      objs.push_back(make_quadratic(dim, c, scale, grad_bound));
    } else if (kind == "rastrigin") {
      objs.push_back(make_rastrigin(dim, c, grad_bound));
    } else {
      throw InvalidParameter("unknown benchmark kind '" + std::string(kind) + "'");
    }
  }
  return make_problem(std::move(objs));
}

}  // namespace fedcbo
