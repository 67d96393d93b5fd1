#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace cfomimo {

/// Environment variable consulted when the worker count is left at 0.
inline constexpr const char* kWorkersEnv = "CFOMIMO_WORKERS";

/// Resolves a requested worker count: positive values are used as-is, 0 falls
/// back to $CFOMIMO_WORKERS and then to the hardware concurrency.
inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv(kWorkersEnv)) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on `workers` threads.
///
/// Indices are handed out dynamically, so fn must only write to state owned by
/// index i; callers reduce afterwards in index order, which keeps results
/// independent of the worker count. If several indices throw, the exception of
/// the smallest index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const int w = static_cast<int>(std::min<std::size_t>(resolve_workers(workers), n));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::size_t err_index = n;
    std::exception_ptr err;

    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(w - 1));
    for (int t = 1; t < w; ++t) pool.emplace_back(body);
    body();
    pool.clear();  // joins
    if (err) std::rethrow_exception(err);
}

}  // namespace cfomimo
