#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tk {

/// Default worker count: TERNKIN_THREADS if set, otherwise the hardware count.
inline unsigned default_threads() {
  if (const char* env = std::getenv("TERNKIN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(shard) for shard in [0, shards). Each shard must own its RNG
/// stream and output slot, so results do not depend on the thread count.
template <class Fn>
void parallel_shards(std::size_t shards, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = default_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, shards));
  if (threads <= 1) {
    for (std::size_t s = 0; s < shards; ++s) fn(s);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      std::size_t s;
      {
        std::lock_guard<std::mutex> lk(mu);
        if (next >= shards || err) return;
        s = next++;
      }
      try {
        fn(s);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace tk
