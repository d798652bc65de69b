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

namespace two_settle {

// TWO_SETTLE_WORKERS, else 1.
inline int default_workers() {
    if (const char* env = std::getenv("TWO_SETTLE_WORKERS")) {
        try {
            int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (...) {
        }
    }
    return 1;
}

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so results do
// not depend on the worker count. The lowest-index exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t err_index = n;
    std::exception_ptr err;
    auto run = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    int k = std::min<int>(workers, int(n));
    for (int w = 0; w < k; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace two_settle
