#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace qsdflow {

// Static block partition; fn(i) must be independent across i. Results that
// need aggregation are written to per-index slots so the reduction order is
// fixed regardless of thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const auto t = static_cast<std::size_t>(threads);
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (std::size_t w = 0; w < t; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += t) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace qsdflow
