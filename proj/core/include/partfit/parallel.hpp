// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace partfit {

// Small fixed-size worker pool. Work is dispatched as an index range; each
// index is processed exactly once and workers write only to per-index slots,
// so results do not depend on the thread count. Reductions over the results
// must be done by the caller in index order to stay bit-reproducible.
class ThreadPool {
public:
    explicit ThreadPool(int threads = 0) {
        int n = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
        worker_count_ = n;
        for (int i = 0; i + 1 < n; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    int thread_count() const { return worker_count_; }

    /// Runs fn(i) for every i in [0, n). Blocks until all indices are done.
    void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        if (workers_.empty() || n == 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::lock_guard<std::mutex> lock(mutex_);
            fn_ = &fn;
            total_ = n;
            next_ = 0;
            pending_ = n;
        }
        cv_.notify_all();
        run_range();  // the calling thread participates
        std::unique_lock<std::mutex> lock(mutex_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        fn_ = nullptr;
    }

private:
    void run_range() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mutex_);
                if (next_ >= total_) return;
                i = next_++;
            }
            (*fn_)(i);
            {
                std::lock_guard<std::mutex> lock(mutex_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        for (;;) {
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_.wait(lock, [this] { return stop_ || (fn_ != nullptr && next_ < total_); });
                if (stop_) return;
            }
            run_range();
        }
    }

    std::vector<std::thread> workers_;
    int worker_count_ = 1;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t total_ = 0;
    std::size_t next_ = 0;
    std::size_t pending_ = 0;
    bool stop_ = false;
};

/// Convenience: runs fn(i) over [0, n), sequentially when pool is null.
inline void parallel_for(ThreadPool* pool, std::size_t n,
                         const std::function<void(std::size_t)>& fn) {
    if (pool != nullptr) {
        pool->for_each_index(n, fn);
    } else {
        for (std::size_t i = 0; i < n; ++i) fn(i);
    }
}

}  // namespace partfit
