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

#ifndef FEDCBO_RNG_H_
#define FEDCBO_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <limits>

#include "fedcbo/common.h"

namespace fedcbo {

// Counter-based random stream. The stream is fully determined by its key,
// which is derived from a run seed and any number of identifiers such as
// (agent, step, purpose). Two streams with the same key yield the same
// sequence regardless of which thread consumes them or in what order other
// streams are consumed.
//
// Satisfies UniformRandomBitGenerator so it composes with <random>.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via Box-Muller; does not cache the second variate so
  // the draw count per call is fixed.
  double normal();
  // i.i.d. standard normal vector of length `dim`.
  Vec normal_vector(int dim);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream purposes. Keep values stable: they are part of the reproducibility
// contract for persisted runs.
enum class Stream : std::uint64_t {
  kInit = 1,
  kNoise = 2,
  kParticipation = 3,
  kLocalUpdate = 4,
  kSampling = 5,
  kData = 6,
  kProjection = 7,
  kReference = 8,
  kModelInit = 9,
};

constexpr std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace fedcbo

#endif  // FEDCBO_RNG_H_
