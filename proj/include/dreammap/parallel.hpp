// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

namespace dreammap {

/// Execution policy for order-independent work items.
enum class Exec { Auto, Serial, Parallel };

/// Worker cap from DREAMMAP_THREADS (0 or unset means hardware concurrency).
int thread_budget();

/// Run fn(0..n-1). Items must be independent; results must not depend on
/// execution order. Exec::Parallel forces threads even when the budget is 1.
void parallel_for(int n, const std::function<void(int)>& fn, Exec mode = Exec::Auto);

}  // namespace dreammap
