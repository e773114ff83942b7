#include "mvlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace mvlab {

namespace {

thread_local bool t_inside_pool = false;

class WorkerPool {
public:
    explicit WorkerPool(std::size_t n) {
        for (std::size_t i = 0; i + 1 < n; ++i) threads_.emplace_back([this, i] { loop(i + 1); });
    }

    ~WorkerPool() {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    [[nodiscard]] std::size_t size() const { return threads_.size() + 1; }

    void run(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn) {
        {
            std::lock_guard lock(mu_);
            fn_ = &fn;
            begin_ = begin;
            end_ = end;
            pending_ = threads_.size();
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();
        work(0, fn, begin, end);
        std::unique_lock lock(mu_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        if (error_) std::rethrow_exception(error_);
    }

private:
    void work(std::size_t worker, const std::function<void(std::size_t)>& fn, std::size_t begin, std::size_t end) {
        const std::size_t n = end - begin;
        const std::size_t chunk = (n + size() - 1) / size();
        const std::size_t lo = begin + std::min(n, worker * chunk);
        const std::size_t hi = begin + std::min(n, (worker + 1) * chunk);
        t_inside_pool = true;
        try {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
            std::lock_guard lock(mu_);
            if (!error_) error_ = std::current_exception();
        }
        t_inside_pool = false;
    }

    void loop(std::size_t worker) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t)>* fn;
            std::size_t begin, end;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                fn = fn_;
                begin = begin_;
                end = end_;
            }
            work(worker, *fn, begin, end);
            {
                std::lock_guard lock(mu_);
                --pending_;
            }
            done_cv_.notify_one();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
    std::size_t pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
};

std::mutex g_pool_mu;
std::size_t g_workers = 1;
std::unique_ptr<WorkerPool> g_pool;

}  // namespace

void set_worker_count(std::size_t n) {
    std::lock_guard lock(g_pool_mu);
    n = std::max<std::size_t>(1, n);
    if (n == g_workers) return;
    g_pool.reset();
    g_workers = n;
}

std::size_t worker_count() {
    std::lock_guard lock(g_pool_mu);
    return g_workers;
}

void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn) {
    if (end <= begin) return;
    if (t_inside_pool) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::unique_lock lock(g_pool_mu);
    if (g_workers <= 1 || end - begin < 2) {
        lock.unlock();
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    if (!g_pool) g_pool = std::make_unique<WorkerPool>(g_workers);
    // One parallel region at a time; the lock is held for its duration.
    g_pool->run(begin, end, fn);
}

}  // namespace mvlab
