#include "avstream/parallel.h"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace avs {
namespace {

int g_threads = 1;

struct Pool {
    explicit Pool(int workers) {
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([this, w] { loop(w); });
        }
    }

    ~Pool() {
        {
            std::unique_lock<std::mutex> lk(mu);
            stop = true;
        }
        cv.notify_all();
        for (auto& t : threads) t.join();
    }

    void run(int parts, const std::function<void(int)>& part_fn) {
        std::unique_lock<std::mutex> lk(mu);
        job = &part_fn;
        job_parts = parts;
        next_part.store(0);
        pending.store(parts);
        ++generation;
        cv.notify_all();
        done_cv.wait(lk, [this] { return pending.load() == 0; });
        job = nullptr;
    }

    void loop(int) {
        uint64_t seen = 0;
        for (;;) {
            const std::function<void(int)>* fn = nullptr;
            {
                std::unique_lock<std::mutex> lk(mu);
                cv.wait(lk, [&] { return stop || generation != seen; });
                if (stop) return;
                seen = generation;
                fn = job;
            }
            for (;;) {
                int p = next_part.fetch_add(1);
                if (p >= job_parts) break;
                (*fn)(p);
                if (pending.fetch_sub(1) == 1) {
                    std::unique_lock<std::mutex> lk(mu);
                    done_cv.notify_all();
                }
            }
        }
    }

    std::vector<std::thread> threads;
    std::mutex mu;
    std::condition_variable cv;
    std::condition_variable done_cv;
    const std::function<void(int)>* job = nullptr;
    int job_parts = 0;
    std::atomic<int> next_part{0};
    std::atomic<int> pending{0};
    uint64_t generation = 0;
    bool stop = false;
};

Pool* pool() {
    static Pool* p = nullptr;
    static int built_for = 0;
    if (g_threads <= 1) return nullptr;
    if (p == nullptr || built_for != g_threads) {
        delete p;
        p = new Pool(g_threads);
        built_for = g_threads;
    }
    return p;
}

}  // namespace

void set_thread_count(int n) { g_threads = n < 1 ? 1 : n; }
int thread_count() { return g_threads; }

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    Pool* p = g_threads > 1 && n > 1 ? pool() : nullptr;
    if (p == nullptr) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    int parts = g_threads;
    if (static_cast<size_t>(parts) > n) parts = static_cast<int>(n);
    size_t chunk = (n + parts - 1) / parts;
    std::function<void(int)> part_fn = [&](int part) {
        size_t lo = static_cast<size_t>(part) * chunk;
        size_t hi = lo + chunk < n ? lo + chunk : n;
        for (size_t i = lo; i < hi; ++i) fn(i);
    };
    p->run(parts, part_fn);
}

void parallel_pair(const std::function<void()>& a, const std::function<void()>& b) {
    if (g_threads <= 1) {
        a();
        b();
        return;
    }
    std::thread t(a);
    b();
    t.join();
}

}  // namespace avs
