#pragma once

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace setmix {

// Worker cap for data-parallel loops. SETMIX_THREADS overrides; default is
// the hardware concurrency.
inline unsigned max_threads() {
    if (const char* env = std::getenv("SETMIX_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// Splits [0, n) into contiguous chunks, one worker thread per chunk.
// Each index is processed by exactly one worker, so the result of writing
// disjoint outputs is identical to the serial loop. Work smaller than `grain`
// runs inline.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                         std::size_t grain = 2048) {
    unsigned workers = max_threads();
    if (workers <= 1 || n < grain) {
        body(0, n);
        return;
    }
    if (workers > n) workers = static_cast<unsigned>(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = lo + chunk < n ? lo + chunk : n;
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace setmix
