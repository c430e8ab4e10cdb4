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

#include "fedcbo/rng.h"

#include <cmath>
#include <numbers>

namespace fedcbo {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed,
                       std::initializer_list<std::uint64_t> ids)
    : key_(mix64(seed)) {
  for (std::uint64_t id : ids) key_ = mix64(key_ ^ mix64(id + 0x632be59bd9b4e019ULL));
}

CounterRng::result_type CounterRng::operator()() {
  return mix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
}

double CounterRng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

Vec CounterRng::normal_vector(int dim) {
  Vec z(dim);
  for (int i = 0; i < dim; ++i) z[i] = normal();
  return z;
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Lemire's nearly-divisionless rejection.
  const std::uint64_t threshold = (0 - n) % n;
  while (true) {
    const std::uint64_t r = (*this)();
    __extension__ using u128 = unsigned __int128;
    const u128 m = static_cast<u128>(r) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::uint64_t>(m >> 64);
    }
  }
}

}  // namespace fedcbo
