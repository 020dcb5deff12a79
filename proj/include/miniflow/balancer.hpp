#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "miniflow/event_log.hpp"
#include "miniflow/task.hpp"

namespace miniflow {

/// Work type wildcard for get(): any type the worker registered for.
inline constexpr std::int32_t kAnyWorkType = -1;

struct Dispatch {
    std::int32_t worker = 0;
    TaskDescriptor task;
};

/// Task queues and waiting workers of the single server. Pure state machine:
/// the server loop feeds it one message at a time.
///
/// Queue discipline: priority descending, then put order. A worker's own
/// targeted tasks compete with untargeted ones by the same order.
class Balancer {
public:
    explicit Balancer(EventLog* log = nullptr);

    /// A worker id may register once. Subscribing to no types means "all".
    void register_worker(std::int32_t worker, std::vector<std::int32_t> work_types);
    bool registered(std::int32_t worker) const { return workers_.count(worker) != 0; }

    /// Dispatches at once when a matching worker waits. Throws ProtocolError
    /// after shutdown or on a reused task id.
    std::optional<Dispatch> put(TaskDescriptor task);

    /// The best task for this worker, or nullopt after recording the worker as
    /// waiting. Throws ProtocolError for an unregistered or already waiting
    /// worker, or when called after shutdown (callers check shutting_down()).
    std::optional<TaskDescriptor> get(std::int32_t worker, std::int32_t work_type = kAnyWorkType);

    /// Throws ProtocolError unless `task` is in dispatch to `worker`.
    void complete(TaskId task, std::int32_t worker);

    /// Refuses further puts and returns the workers that were waiting, in
    /// the order they asked.
    std::vector<std::int32_t> shutdown();
    bool shutting_down() const noexcept { return shutdown_; }

    std::size_t queued() const noexcept { return queued_count_; }
    std::size_t in_dispatch() const noexcept { return in_dispatch_.size(); }
    std::size_t completed() const noexcept { return completed_.size(); }
    std::size_t waiting() const noexcept { return waiting_.size(); }
    std::size_t dispatched_to(std::int32_t worker) const;

    /// Work-conserving check: no worker waits on a type with queued
    /// untargeted work, and no worker waits while its own targeted work is
    /// queued. Runs after every mutation.
    bool work_conserving() const;
    /// Process-wide count of work-conserving violations; must stay zero.
    static std::uint64_t trips() noexcept { return trips_.load(); }

private:
    struct Order {
        bool operator()(const std::pair<std::int64_t, std::uint64_t>& a,
                        const std::pair<std::int64_t, std::uint64_t>& b) const {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        }
    };
    using Queue = std::map<std::pair<std::int64_t, std::uint64_t>, TaskDescriptor, Order>;
    struct Waiter {
        std::int32_t worker;
        std::int32_t work_type;
    };

    bool accepts(std::int32_t worker, std::int32_t requested, std::int32_t task_type) const;
    Dispatch hand_out(std::int32_t worker, TaskDescriptor task);
    void check();
    void log(std::string kind, std::vector<std::pair<std::string, std::string>> fields);

    EventLog* log_;
    std::map<std::int32_t, std::set<std::int32_t>> workers_;
    std::map<std::int32_t, Queue> by_type_;     // untargeted
    std::map<std::int32_t, Queue> by_target_;   // targeted, keyed by worker
    std::deque<Waiter> waiting_;
    std::unordered_map<TaskId, std::int32_t> in_dispatch_;
    std::set<TaskId> seen_;
    std::set<TaskId> completed_;
    std::map<std::int32_t, std::size_t> per_worker_;
    std::size_t queued_count_ = 0;
    std::uint64_t seq_ = 0;
    bool shutdown_ = false;

    static std::atomic<std::uint64_t> trips_;
};

}  // namespace miniflow
