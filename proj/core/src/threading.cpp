#include "spg/threading.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spg {

namespace {
std::atomic<int> g_max_threads{0};  // 0 = not set yet
}

int max_threads() {
    int n = g_max_threads.load(std::memory_order_relaxed);
    if (n > 0) return n;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void set_max_threads(int n) {
    g_max_threads.store(std::max(1, n), std::memory_order_relaxed);
}

void parallel_ranges(std::int64_t n, std::int64_t grain,
                     const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    grain = std::max<std::int64_t>(1, grain);
    const std::int64_t n_ranges = (n + grain - 1) / grain;
    const int workers = static_cast<int>(
        std::min<std::int64_t>(max_threads(), n_ranges));

    if (workers <= 1) {
        for (std::int64_t r = 0; r < n_ranges; ++r)
            fn(r * grain, std::min(n, (r + 1) * grain));
        return;
    }

    std::atomic<std::int64_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto work = [&] {
        for (;;) {
            const std::int64_t r = next.fetch_add(1, std::memory_order_relaxed);
            if (r >= n_ranges) return;
            try {
                fn(r * grain, std::min(n, (r + 1) * grain));
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace spg
