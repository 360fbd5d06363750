// Copyright (c) the iclp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstddef>
#include <functional>

namespace iclp {

/// Worker cap from ICLP_THREADS (unset or invalid: hardware concurrency),
/// never more than `jobs` and never less than 1.
std::size_t worker_count(std::size_t jobs);

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = worker_count).
/// Indices are handed out dynamically; callers write results into slot i so
/// the outcome does not depend on scheduling. The first exception thrown by
/// any job is rethrown after all workers stop. While more than one worker is
/// active, BLAS is pinned to a single thread. Nested calls from inside a
/// worker run serially on that worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t workers = 0);

}  // namespace iclp
