#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace capecgen {

// Runs fn(i) for i in [0, n) on at most `workers` threads. The first
// exception thrown by any task is rethrown after all workers stop; tasks
// not yet started are skipped once an error is seen.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    if (n == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;
    auto work = [&] {
        while (!failed.load()) {
            auto i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);
}

// Token bucket shared by all callers of one provider. Capacity is one
// request, so consecutive requests are spaced by 60/rpm seconds.
class TokenBucket {
public:
    explicit TokenBucket(double requests_per_minute)
        : interval_(std::chrono::duration_cast<Clock::duration>(
              std::chrono::duration<double>(60.0 / requests_per_minute))) {}

    void acquire() {
        Clock::time_point slot;
        {
            std::lock_guard lock(mu_);
            auto now = Clock::now();
            slot = std::max(now, next_);
            next_ = slot + interval_;
        }
        std::this_thread::sleep_until(slot);
    }

private:
    using Clock = std::chrono::steady_clock;
    Clock::duration interval_;
    Clock::time_point next_{};
    std::mutex mu_;
};

}  // namespace capecgen
