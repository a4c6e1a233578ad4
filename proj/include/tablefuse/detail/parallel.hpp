#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tablefuse::detail {

// Runs fn(0..n-1) with at most max_inflight workers. Results land in
// caller-owned slots indexed by i, so the merge order is deterministic
// regardless of scheduling. The first exception wins and is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t max_inflight, Fn&& fn) {
    if (n == 0) return;
    if (max_inflight <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    std::vector<std::thread> threads;
    const std::size_t workers = std::min(max_inflight, n);
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace tablefuse::detail
