#include "shapegem/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace shapegem {

namespace {

std::atomic<int> g_override{0};

int env_threads() {
    if (const char* value = std::getenv("SHAPEGEM_THREADS")) {
        const int parsed = std::atoi(value);
        if (parsed >= 1) {
            return parsed;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace

int max_threads() {
    const int forced = g_override.load(std::memory_order_relaxed);
    return forced >= 1 ? forced : env_threads();
}

void set_max_threads(int n) {
    g_override.store(n >= 1 ? n : 0, std::memory_order_relaxed);
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    if (n <= 0) {
        return;
    }
    const int workers = std::min<std::int64_t>(max_threads(), n);
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }

    std::atomic<std::int64_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& thread : pool) {
        thread.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

} // namespace shapegem
