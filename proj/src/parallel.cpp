#include "swmpc/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>

#ifdef SWMPC_HAVE_OPENMP
#include <omp.h>
#endif

namespace swmpc {

namespace {

int initial_threads() {
  if (const char* env = std::getenv("SWMPC_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 0;
}

std::atomic<int> g_max_threads{initial_threads()};

} // namespace

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() { return g_max_threads.load(); }

int effective_threads() {
  int cap = g_max_threads.load();
#ifdef SWMPC_HAVE_OPENMP
  int avail = omp_get_max_threads();
  if (cap == 0) return avail;
  return cap;
#else
  return cap == 0 ? 1 : cap;
#endif
}

void parallel_for(int n, const std::function<void(int)>& f) {
  if (n <= 0) return;
  const int nt = effective_threads();
  if (nt <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
#ifdef SWMPC_HAVE_OPENMP
  std::exception_ptr err;
  std::mutex err_mutex;
#pragma omp parallel for schedule(dynamic) num_threads(nt)
  for (int i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  for (int i = 0; i < n; ++i) f(i);
#endif
}

} // namespace swmpc
