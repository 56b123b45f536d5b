#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ces {

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index is
/// handled exactly once; callers write results into per-index slots so the
/// output does not depend on scheduling. The first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    const std::size_t count = std::min(jobs, n);
    pool.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        pool.emplace_back(worker);
    }
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace ces
