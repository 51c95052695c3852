#pragma once

#include <atomic>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "specroute/errors.hpp"

namespace specroute {

// Work-stealing task pool. Each worker drains its own deque from the back and
// steals from the front of a victim's deque when idle. parallel_for blocks
// until every task finished; the first exception thrown by a task is stashed
// and rethrown on the caller's thread.
class ThreadPool {
public:
    explicit ThreadPool(int n_threads) {
        if (n_threads < 1) throw ArgumentError("ThreadPool: need >= 1 thread");
        n_ = n_threads;
    }

    int size() const { return n_; }

    void parallel_for(long n_items, const std::function<void(long)>& fn) {
        if (n_items <= 0) return;
        if (n_ == 1 || n_items == 1) {
            for (long i = 0; i < n_items; ++i) fn(i);
            return;
        }

        const int workers = static_cast<int>(std::min<long>(n_, n_items));
        std::vector<Queue> queues(static_cast<std::size_t>(workers));
        for (long i = 0; i < n_items; ++i)
            queues[static_cast<std::size_t>(i % workers)].items.push_back(i);

        std::atomic<long> remaining{n_items};
        std::mutex err_mu;
        std::exception_ptr first_error;

        auto work = [&](int me) {
            while (remaining.load(std::memory_order_acquire) > 0) {
                long item = -1;
                if (!queues[static_cast<std::size_t>(me)].pop_back(item)) {
                    bool stole = false;
                    for (int off = 1; off < workers && !stole; ++off)
                        stole = queues[static_cast<std::size_t>((me + off) % workers)]
                                    .pop_front(item);
                    if (!stole) break;  // everything claimed; finishers drain remaining
                }
                try {
                    fn(item);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
                remaining.fetch_sub(1, std::memory_order_release);
            }
        };

        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers - 1));
        for (int t = 1; t < workers; ++t) threads.emplace_back(work, t);
        work(0);
        for (auto& th : threads) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

private:
    struct Queue {
        std::mutex mu;
        std::deque<long> items;

        bool pop_back(long& out) {
            std::lock_guard<std::mutex> lk(mu);
            if (items.empty()) return false;
            out = items.back();
            items.pop_back();
            return true;
        }
        bool pop_front(long& out) {
            std::lock_guard<std::mutex> lk(mu);
            if (items.empty()) return false;
            out = items.front();
            items.pop_front();
            return true;
        }
    };

    int n_ = 1;
};

}  // namespace specroute
