#pragma once

#include <condition_variable>
#include <cstdlib>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fnr {

inline int worker_count() {
    static const int count = [] {
        if (const char* env = std::getenv("FNR_THREADS")) {
            const int n = std::atoi(env);
            if (n >= 1) {
                return n > 64 ? 64 : n;
            }
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return static_cast<int>(hw == 0 ? 1 : (hw > 8 ? 8 : hw));
    }();
    return count;
}

namespace detail {

// Set while a pool worker (or the caller inside run_chunks) executes a task;
// nested parallel_for calls then degrade to sequential execution instead of
// deadlocking on the pool.
inline bool& in_parallel_section() {
    thread_local bool flag = false;
    return flag;
}

// Persistent helper threads so per-thread scratch buffers survive across
// calls. Worker w always processes the same index range for a given n, so
// results are bitwise independent of scheduling.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(worker_count() - 1);
        return pool;
    }

    // Runs fn(begin, end) on the helpers for ranges 1..helpers and returns
    // the range for the caller (chunk 0) to execute inline.
    void run_chunks(std::int64_t n, std::int64_t chunk,
                    const std::function<void(std::int64_t, std::int64_t)>& fn) {
        {
            std::unique_lock lock(mutex_);
            task_ = &fn;
            task_n_ = n;
            task_chunk_ = chunk;
            ++generation_;
            pending_ = static_cast<int>(threads_.size());
        }
        cv_.notify_all();
        fn(0, std::min<std::int64_t>(n, chunk));
        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        task_ = nullptr;
    }

    int helpers() const { return static_cast<int>(threads_.size()); }

private:
    explicit ThreadPool(int helpers) {
        for (int i = 0; i < helpers; ++i) {
            threads_.emplace_back([this, i] { worker_loop(i + 1); });
        }
    }

    ~ThreadPool() {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : threads_) {
            t.join();
        }
    }

    void worker_loop(int index) {
        std::uint64_t seen = 0;
        while (true) {
            const std::function<void(std::int64_t, std::int64_t)>* task = nullptr;
            std::int64_t n = 0, chunk = 0;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) {
                    return;
                }
                seen = generation_;
                task = task_;
                n = task_n_;
                chunk = task_chunk_;
            }
            if (task) {
                const std::int64_t begin = static_cast<std::int64_t>(index) * chunk;
                const std::int64_t end = std::min<std::int64_t>(n, begin + chunk);
                if (begin < end) {
                    in_parallel_section() = true;
                    (*task)(begin, end);
                    in_parallel_section() = false;
                }
            }
            {
                std::unique_lock lock(mutex_);
                if (--pending_ == 0) {
                    done_cv_.notify_all();
                }
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* task_ = nullptr;
    std::int64_t task_n_ = 0;
    std::int64_t task_chunk_ = 0;
    std::uint64_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

} // namespace detail

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker; every index is processed by exactly one thread in ascending order,
// so results are bitwise independent of the thread count.
template <typename F>
void parallel_for(std::int64_t n, F&& fn) {
    const int workers = worker_count();
    if (n <= 1 || workers <= 1 || detail::in_parallel_section()) {
        for (std::int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const int used = static_cast<int>(n < workers ? n : workers);
    const std::int64_t chunk = (n + used - 1) / used;
    const std::function<void(std::int64_t, std::int64_t)> run_range = [&fn](std::int64_t begin,
                                                                            std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            fn(i);
        }
    };
    auto& flag = detail::in_parallel_section();
    flag = true;
    detail::ThreadPool::instance().run_chunks(n, chunk, run_range);
    flag = false;
}

} // namespace fnr
