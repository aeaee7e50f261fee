#include "kobt/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kobt {

namespace {
std::atomic<int> g_max_threads{0};
}

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() {
    int n = g_max_threads.load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace detail {

namespace {
// Nested regions run serially on the calling worker; the outermost region
// owns the thread budget.
thread_local bool t_inside_parallel = false;
}

void parallel_for_impl(std::size_t n, void* ctx, void (*body)(void*, std::size_t)) {
    if (n == 0) return;
    std::size_t workers = static_cast<std::size_t>(max_threads());
    if (workers > n) workers = n;
    if (workers <= 1 || t_inside_parallel) {
        for (std::size_t i = 0; i < n; ++i) body(ctx, i);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = n * w / workers;
        std::size_t hi = n * (w + 1) / workers;
        pool.emplace_back([=, &first_error, &error_mutex] {
            t_inside_parallel = true;
            try {
                for (std::size_t i = lo; i < hi; ++i) body(ctx, i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail
}  // namespace kobt
