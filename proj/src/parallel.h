#ifndef BPNP_SRC_PARALLEL_H_
#define BPNP_SRC_PARALLEL_H_

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace bpnp::internal {

// Worker count: BPNP_THREADS when set to a positive integer, else the
// hardware concurrency.
inline int ThreadCount() {
  if (const char* env = std::getenv("BPNP_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n). Each index is independent; results must be
// written to per-index slots. The exception of the lowest failing index is
// rethrown, so errors do not depend on scheduling.
template <typename Fn>
void ParallelFor(int n, Fn&& fn) {
  const int workers = std::min(ThreadCount(), n);
  std::vector<std::exception_ptr> errors(std::max(n, 0));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    auto work = [&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace bpnp::internal

#endif  // BPNP_SRC_PARALLEL_H_
