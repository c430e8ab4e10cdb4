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

#ifndef FEDCBO_PARALLEL_H_
#define FEDCBO_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace fedcbo {

// Runs index-parallel loops on a bounded number of threads. Work items must
// only write to state owned by their index; under that contract results are
// identical for every thread count. Exceptions thrown by any item are
// rethrown on the calling thread (the first one by index).
class Executor {
 public:
  explicit Executor(int threads = 1);

  int threads() const { return threads_; }

  void parallel_for(std::size_t count,
                    const std::function<void(std::size_t)>& body) const;

 private:
  int threads_;
};

}  // namespace fedcbo

#endif  // FEDCBO_PARALLEL_H_
