#include "spav/threading.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace spav {

namespace {

std::size_t initial_worker_count() {
    if (const char* env = std::getenv("SPAV_THREADS")) {
        long v = std::atol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return std::min<std::size_t>(hw, 8);
}

std::size_t g_workers = initial_worker_count();

// Minimal persistent pool: one broadcast task at a time, caller participates.
// Each run owns its task object, so a late-waking worker can only touch an
// exhausted part counter, never the next run's.
class Pool {
    struct Task {
        const std::function<void(std::size_t)>* fn = nullptr;
        std::size_t parts = 0;
        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> completed{0};
    };

  public:
    explicit Pool(std::size_t threads) {
        for (std::size_t i = 0; i < threads; ++i) threads_.emplace_back([this] { worker(); });
    }
    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(std::size_t parts, const std::function<void(std::size_t)>& part_fn) {
        auto task = std::make_shared<Task>();
        task->fn = &part_fn;
        task->parts = parts;
        {
            std::lock_guard<std::mutex> lk(mu_);
            current_ = task;
        }
        cv_.notify_all();
        drain(*task);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return task->completed.load(std::memory_order_acquire) == parts; });
        if (current_ == task) current_.reset();
    }

  private:
    void drain(Task& t) {
        for (;;) {
            std::size_t p = t.next.fetch_add(1, std::memory_order_relaxed);
            if (p >= t.parts) break;
            (*t.fn)(p);
            if (t.completed.fetch_add(1, std::memory_order_acq_rel) + 1 == t.parts) {
                std::lock_guard<std::mutex> lk(mu_);
                done_cv_.notify_all();
            }
        }
    }

    void worker() {
        std::shared_ptr<Task> seen;
        for (;;) {
            std::shared_ptr<Task> task;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || (current_ && current_ != seen); });
                if (stop_) return;
                task = current_;
            }
            seen = task;
            drain(*task);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::shared_ptr<Task> current_;
    bool stop_ = false;
};

}  // namespace

std::size_t worker_count() { return g_workers; }
void set_worker_count(std::size_t n) { g_workers = std::max<std::size_t>(1, n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain) {
    if (n == 0) return;
    const std::size_t workers = g_workers;
    if (workers <= 1 || n <= grain) {
        fn(0, n);
        return;
    }
    // Fixed partition: identical chunking regardless of scheduling.
    const std::size_t parts = std::min(workers, (n + grain - 1) / grain);
    const std::size_t chunk = (n + parts - 1) / parts;
    static Pool* pool = new Pool(initial_worker_count() > 1 ? initial_worker_count() - 1 : 0);
    std::function<void(std::size_t)> part_fn = [&](std::size_t p) {
        const std::size_t b = p * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) fn(b, e);
    };
    pool->run(parts, part_fn);
}

}  // namespace spav
