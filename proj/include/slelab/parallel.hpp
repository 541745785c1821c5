#pragma once

// Replicate-parallel loop with deterministic results: worker threads claim
// replicate indices from an atomic counter, write into per-replicate slots,
// and any reduction afterwards runs sequentially in replicate order.

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace slelab::par {

inline void for_each_replicate(uint64_t n, int workers,
                               const std::function<void(uint64_t)>& body)
{
    if (workers <= 1 || n <= 1) {
        for (uint64_t r = 0; r < n; ++r) body(r);
        return;
    }
    std::atomic<uint64_t> next{0};
    auto run = [&]() {
        for (;;) {
            uint64_t r = next.fetch_add(1);
            if (r >= n) return;
            body(r);
        }
    };
    std::vector<std::thread> pool;
    int nt = std::min<int>(workers, static_cast<int>(n));
    pool.reserve(static_cast<size_t>(nt));
    for (int i = 0; i < nt; ++i) pool.emplace_back(run);
    for (auto& t : pool) t.join();
}

} // namespace slelab::par
