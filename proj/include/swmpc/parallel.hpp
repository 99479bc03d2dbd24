#pragma once

#include <functional>

namespace swmpc {

// Process-global thread cap for the parallel kernels.
// 1 forces the serial reference path, 0 restores the OpenMP default.
// The environment variable SWMPC_THREADS, when set, provides the initial value.
void set_max_threads(int n);
int max_threads();

// Number of threads a parallel region would actually use right now.
int effective_threads();

// Runs f(0), ..., f(n-1) with iterations distributed over threads.
// Iterations must be independent and results must not depend on execution
// order; every call site writes to disjoint slots. Exceptions thrown by f are
// captured and rethrown on the calling thread.
void parallel_for(int n, const std::function<void(int)>& f);

} // namespace swmpc
