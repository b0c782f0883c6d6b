// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace selfpitch {

/// Run fn(chunk_index) for chunk_index in [0, n_chunks) on up to n_threads
/// workers. Chunking is a pure function of n_chunks, so numeric results never
/// depend on how many threads actually execute.
inline void parallel_chunks(int n_chunks, int n_threads, const std::function<void(int)>& fn) {
    if (n_chunks <= 0) return;
    if (n_threads <= 1 || n_chunks == 1) {
        for (int c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    const int workers = std::min(n_threads, n_chunks);
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers), nullptr);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int c = w; c < n_chunks; c += workers) fn(c);
            } catch (...) {
                errors[std::size_t(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw > 8 ? 8 : hw);
}

}  // namespace selfpitch
