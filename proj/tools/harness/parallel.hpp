#pragma once

// Fixed-size work pool over replicate ids. Results land in slot `id`, so the
// output order never depends on scheduling.

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace harness {

template <typename Result, typename Fn>
std::vector<Result> run_replicates(int count, int threads, Fn&& fn) {
  std::vector<Result> results(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const int id = next.fetch_add(1);
      if (id >= count) return;
      try {
        results[static_cast<std::size_t>(id)] = fn(id);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace harness
