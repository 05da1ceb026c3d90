#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace haarkit {

inline int resolve_workers(int workers) {
    if (workers > 0) return workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Splits [0, n) into at most `workers` contiguous ranges, runs
// f(range_index, begin, end) on each, and returns the per-range results in
// range order. Results depend only on the split, never on thread timing, so
// any worker count produces identical output.
template <class R, class F>
std::vector<R> parallel_map_ranges(std::int64_t n, int workers, F f) {
    workers = resolve_workers(workers);
    const std::int64_t chunks = std::min<std::int64_t>(workers, std::max<std::int64_t>(n, 1));
    std::vector<R> results(static_cast<std::size_t>(chunks));
    if (chunks == 1) {
        results[0] = f(0, std::int64_t{0}, n);
        return results;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(chunks));
    const std::int64_t base = n / chunks;
    const std::int64_t rem = n % chunks;
    std::int64_t begin = 0;
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::int64_t len = base + (c < rem ? 1 : 0);
        const std::int64_t end = begin + len;
        threads.emplace_back([&results, &f, c, begin, end] { results[static_cast<std::size_t>(c)] = f(c, begin, end); });
        begin = end;
    }
    for (auto& t : threads) t.join();
    return results;
}

}  // namespace haarkit
