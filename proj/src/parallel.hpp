#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace grt {

// Splits [0, n) into contiguous chunks, one per worker. n_threads == 1 runs
// inline (the deterministic path).
template <class F>
void parallel_for(std::size_t n, int n_threads, F&& body) {
    if (n == 0) return;
    if (n_threads <= 1 || n < 2) {
        body(std::size_t{0}, n, 0);
        return;
    }
    std::size_t workers = std::min<std::size_t>(n_threads, n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(begin + chunk, n);
        if (begin >= end) break;
        threads.emplace_back([&body, begin, end, w] { body(begin, end, static_cast<int>(w)); });
    }
    for (auto& t : threads) t.join();
}

} // namespace grt
