#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace choquard {

// Worker cap from CHOQUARD_THREADS (0 or unset = hardware concurrency).
inline unsigned thread_cap() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("CHOQUARD_THREADS");
    if (!env) return hw;
    long v = std::strtol(env, nullptr, 10);
    if (v <= 0) return hw;
    return std::min<unsigned>(static_cast<unsigned>(v), hw);
}

// Runs fn(i) for i in [0, count) on up to thread_cap() workers. Each index is
// processed exactly once with no shared mutable state, so results cannot
// depend on the partitioning.
inline void parallel_for_index(std::size_t count, const std::function<void(std::size_t)>& fn) {
    unsigned workers = std::min<std::size_t>(thread_cap(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

}
