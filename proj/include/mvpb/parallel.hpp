#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace mvpb {

void set_threads(int n);
int threads();

// Runs f(i) for i in [begin, end). Each index is independent, so results do
// not depend on the worker count.
template <class F>
void parallel_for(int begin, int end, F&& f) {
  const int nt = std::min(threads(), std::max(1, end - begin));
  if (nt <= 1) {
    for (int i = begin; i < end; ++i) f(i);
    return;
  }
  std::atomic<int> next{begin};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < end && !failed; i = next++) {
        try {
          f(i);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace mvpb
