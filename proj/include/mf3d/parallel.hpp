#pragma once

// Minimal fork-join helper. Work is split into contiguous chunks whose
// boundaries depend only on the range and the chunk count, so any reduction
// done per index is independent of scheduling.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mf3d {

namespace detail {
inline std::atomic<int>& thread_setting() {
    static std::atomic<int> n{0};
    return n;
}
} // namespace detail

/// Sets the worker count used by parallel_for. n <= 0 restores the default
/// (hardware concurrency).
inline void set_thread_count(int n) { detail::thread_setting().store(n); }

inline int thread_count() {
    int n = detail::thread_setting().load();
    if (n > 0) return n;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for every i in [begin, end). fn must only write state owned by i.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
    if (end <= begin) return;
    const std::size_t total = end - begin;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), total);
    if (workers <= 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = begin + total * w / workers;
            const std::size_t hi = begin + total * (w + 1) / workers;
            pool.emplace_back([&, lo, hi, w] {
                try {
                    for (std::size_t i = lo; i < hi; ++i) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace mf3d
