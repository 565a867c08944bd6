#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace molq {

/// Minimal fork-join pool for per-molecule forward/backward work. Results
/// must be written to caller-owned slots; reductions happen after join in a
/// fixed order, so outputs do not depend on the number of workers.
///
/// Each parallel_for owns a heap-shared job record; a worker that wakes late
/// only ever touches the job it joined, never a successor's counters.
class ThreadPool {
public:
    explicit ThreadPool(int threads) {
        if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads < 1) threads = 1;
        for (int i = 0; i < threads - 1; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    int size() const { return static_cast<int>(workers_.size()) + 1; }

    /// Runs fn(i) for all i in [0, n), including on the calling thread;
    /// returns only after every index completed.
    void parallel_for(int n, const std::function<void(int)>& fn) {
        if (n <= 0) return;
        if (workers_.empty() || n == 1) {
            for (int i = 0; i < n; ++i) fn(i);
            return;
        }
        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->n = n;
        {
            std::lock_guard lock(mutex_);
            job_ = job;
            ++generation_;
        }
        cv_.notify_all();
        run(*job);
        {
            std::unique_lock lock(mutex_);
            finished_cv_.wait(lock, [&] { return job->done.load(std::memory_order_acquire) >= n; });
            if (job_ == job) job_ = nullptr;
        }
    }

private:
    struct Job {
        const std::function<void(int)>* fn = nullptr;
        int n = 0;
        std::atomic<int> next{0};
        std::atomic<int> done{0};
    };

    void run(Job& job) {
        while (true) {
            const int i = job.next.fetch_add(1, std::memory_order_relaxed);
            if (i >= job.n) break;
            (*job.fn)(i);
            if (job.done.fetch_add(1, std::memory_order_acq_rel) + 1 >= job.n) {
                std::lock_guard lock(mutex_);
                finished_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        while (true) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [this, seen] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                job = job_;
            }
            if (job) run(*job);
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable finished_cv_;
    std::shared_ptr<Job> job_;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace molq
