#include "lazymg/scheduler.hpp"

namespace lazymg {

TaskPool::TaskPool(SchedulerConfig cfg) : cfg_(cfg) {
    if (cfg_.workers < 1) cfg_.workers = 1;
    budget_.store(cfg_.throttle);
    for (int i = 0; i < cfg_.workers; ++i)
        executed_.push_back(std::make_unique<std::atomic<uint64_t>>(0));
    for (int i = 1; i < cfg_.workers; ++i)
        threads_.emplace_back([this, i] { worker_loop(i); });
}

TaskPool::~TaskPool() { shutdown(); }

void TaskPool::shutdown() {
    {
        std::lock_guard<std::mutex> lk(mutex_);
        if (stop_.exchange(true)) return;
    }
    cv_.notify_all();
    for (std::thread& t : threads_) t.join();
    threads_.clear();
}

bool TaskPool::spawn(Task t) {
    {
        std::lock_guard<std::mutex> lk(mutex_);
        if (stop_.load()) return false;
        (t.kind == TaskKind::coarse_recompute ? high_ : low_).push_back(std::move(t));
        spawned_.fetch_add(1, std::memory_order_relaxed);
    }
    cv_.notify_one();
    return true;
}

std::size_t TaskPool::pending_count() const {
    std::lock_guard<std::mutex> lk(mutex_);
    return high_.size() + low_.size();
}

bool TaskPool::take_budget() {
    for (;;) {
        uint64_t b = budget_.load(std::memory_order_relaxed);
        if (b == 0) return false;
        if (b == std::numeric_limits<uint64_t>::max()) return true;
        if (budget_.compare_exchange_weak(b, b - 1, std::memory_order_relaxed)) return true;
    }
}

void TaskPool::run_one(Task& t, int worker_id) {
    in_flight_.fetch_add(1, std::memory_order_relaxed);
    if (task_observer) task_observer(t, true);
    t.fn();
    if (task_observer) task_observer(t, false);
    executed_[static_cast<std::size_t>(worker_id)]->fetch_add(1, std::memory_order_relaxed);
    completed_.fetch_add(1, std::memory_order_relaxed);
    in_flight_.fetch_sub(1, std::memory_order_relaxed);
    idle_cv_.notify_all();
}

void TaskPool::worker_loop(int id) {
    for (;;) {
        Task t;
        {
            std::unique_lock<std::mutex> lk(mutex_);
            cv_.wait(lk, [&] {
                return stop_.load() ||
                       ((!high_.empty() || !low_.empty()) &&
                        budget_.load(std::memory_order_relaxed) > 0);
            });
            if (stop_.load()) return;
            if (!take_budget()) continue;
            if (!high_.empty()) {
                t = std::move(high_.front());
                high_.pop_front();
            } else if (!low_.empty()) {
                t = std::move(low_.front());
                low_.pop_front();
            } else {
                continue;
            }
        }
        run_one(t, id);
    }
}

void TaskPool::begin_cycle() {
    budget_.store(cfg_.throttle, std::memory_order_relaxed);
    cv_.notify_all();
    if (cfg_.workers == 1) help_drain(0);
}

void TaskPool::help_drain(int worker_id) {
    for (;;) {
        Task t;
        {
            std::lock_guard<std::mutex> lk(mutex_);
            if (high_.empty() && low_.empty()) return;
            if (!take_budget()) return;
            if (!high_.empty()) {
                t = std::move(high_.front());
                high_.pop_front();
            } else {
                t = std::move(low_.front());
                low_.pop_front();
            }
        }
        run_one(t, worker_id);
    }
}

bool TaskPool::try_run_one(int worker_id) {
    Task t;
    {
        std::lock_guard<std::mutex> lk(mutex_);
        if (!high_.empty()) {
            t = std::move(high_.front());
            high_.pop_front();
        } else if (!low_.empty()) {
            t = std::move(low_.front());
            low_.pop_front();
        } else {
            return false;
        }
    }
    run_one(t, worker_id);
    return true;
}

void TaskPool::drain_all() {
    budget_.store(std::numeric_limits<uint64_t>::max(), std::memory_order_relaxed);
    cv_.notify_all();
    if (cfg_.workers == 1) {
        help_drain(0);
        return;
    }
    std::unique_lock<std::mutex> lk(mutex_);
    idle_cv_.wait(lk, [&] {
        return high_.empty() && low_.empty() && in_flight_.load(std::memory_order_relaxed) == 0;
    });
    budget_.store(cfg_.throttle, std::memory_order_relaxed);
}

std::vector<uint64_t> TaskPool::per_worker_executed() const {
    std::vector<uint64_t> out;
    out.reserve(executed_.size());
    for (const auto& e : executed_) out.push_back(e->load());
    return out;
}

}  // namespace lazymg
