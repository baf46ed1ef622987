#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace icpvi::detail {

/// Runs fn(0..n-1) with at most max_in_flight worker threads. fn must not
/// throw; callers collect failures per index themselves.
template <typename Fn>
inline void parallel_for(std::size_t n, std::size_t max_in_flight, Fn&& fn) {
    if (n == 0) return;
    const std::size_t workers = std::min(n, std::max<std::size_t>(1, max_in_flight));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace icpvi::detail
