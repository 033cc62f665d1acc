#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace lazymg {

enum class TaskKind : uint8_t { integrate, coarse_recompute };

struct Task {
    TaskKind kind = TaskKind::integrate;
    int32_t cell = -1;
    std::function<void()> fn;
};

struct SchedulerConfig {
    int workers = 1;  // total workers; 1 = no background threads
    uint64_t throttle = std::numeric_limits<uint64_t>::max();  // tasks per cycle
};

/// Two-class priority pool: coarse recomputes preempt integrate tasks in
/// queue order. With workers = 1 nothing runs in the background; spawned
/// tasks execute inline at cycle boundaries in priority+FIFO order, up to
/// `throttle` per cycle, which keeps single-worker runs bit-reproducible.
/// With workers = N > 1, N-1 background threads share the same per-cycle
/// budget.
class TaskPool {
public:
    explicit TaskPool(SchedulerConfig cfg = {});
    ~TaskPool();

    TaskPool(const TaskPool&) = delete;
    TaskPool& operator=(const TaskPool&) = delete;

    /// Enqueue; never executes inline on the caller. Returns false and does
    /// nothing while shutting down (the caller rolls back its p2 flag).
    bool spawn(Task t);

    /// Linearizable count of ready (not yet started) tasks.
    std::size_t pending_count() const;

    /// Refill the per-cycle budget and, without background threads, run up
    /// to that many pending tasks inline.
    void begin_cycle();

    /// Execute pending tasks on the calling thread until the queues are
    /// empty or the budget runs out (work for idle traversal workers).
    void help_drain(int worker_id = 0);

    /// Pop and run one pending task regardless of the cycle budget; used by
    /// blocking waiters so a queued dependency cannot deadlock them.
    bool try_run_one(int worker_id = 0);

    /// Block until every spawned task has completed (unlimited budget).
    void drain_all();

    void shutdown();

    uint64_t spawned() const { return spawned_.load(); }
    uint64_t completed() const { return completed_.load(); }
    std::vector<uint64_t> per_worker_executed() const;
    int workers() const { return cfg_.workers; }

    /// Called around every task execution (begin = true before, false
    /// after); set before any spawn. Stress harnesses use it to audit the
    /// one-in-flight-per-cell contract.
    std::function<void(const Task&, bool)> task_observer;

private:
    bool take_budget();
    void worker_loop(int id);
    void run_one(Task& t, int worker_id);

    SchedulerConfig cfg_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<Task> high_, low_;
    std::atomic<bool> stop_{false};
    std::atomic<uint64_t> spawned_{0}, completed_{0};
    std::atomic<uint64_t> budget_{0};
    std::atomic<uint64_t> in_flight_{0};
    std::vector<std::unique_ptr<std::atomic<uint64_t>>> executed_;
    std::vector<std::thread> threads_;
};

}  // namespace lazymg
