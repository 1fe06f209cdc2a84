#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vreval {

// Runs fn(item) over all items with up to `parallelism` worker threads.
// Results are delivered to `sink` under a lock, in completion order. The
// first exception aborts the remaining work and is rethrown on the caller.
template <typename Item, typename Result>
void run_concurrently(const std::vector<Item>& items,
                      const std::function<Result(const Item&)>& fn,
                      const std::function<void(Result)>& sink, int parallelism) {
  if (parallelism < 1) parallelism = 1;
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex sink_mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= items.size() || failed.load()) return;
      try {
        Result r = fn(items[i]);
        std::lock_guard lock(sink_mu);
        sink(std::move(r));
      } catch (...) {
        std::lock_guard lock(sink_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  size_t n_threads = std::min<size_t>(static_cast<size_t>(parallelism), items.size());
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace vreval
