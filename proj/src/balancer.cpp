#include "miniflow/balancer.hpp"

#include <algorithm>

#include "miniflow/errors.hpp"

namespace miniflow {

std::atomic<std::uint64_t> Balancer::trips_{0};

Balancer::Balancer(EventLog* log) : log_(log) {}

void Balancer::log(std::string kind, std::vector<std::pair<std::string, std::string>> fields) {
    if (log_) log_->record(std::move(kind), std::move(fields));
}

void Balancer::register_worker(std::int32_t worker, std::vector<std::int32_t> work_types) {
    if (worker < 0) throw ProtocolError("invalid worker id " + std::to_string(worker));
    if (workers_.count(worker)) throw ProtocolError("worker " + std::to_string(worker) + " registered twice");
    workers_[worker] = std::set<std::int32_t>(work_types.begin(), work_types.end());
    per_worker_[worker] = 0;
}

bool Balancer::accepts(std::int32_t worker, std::int32_t requested, std::int32_t task_type) const {
    if (requested != kAnyWorkType) return requested == task_type;
    const auto& types = workers_.at(worker);
    return types.empty() || types.count(task_type) != 0;
}

Dispatch Balancer::hand_out(std::int32_t worker, TaskDescriptor task) {
    in_dispatch_.emplace(task.id, worker);
    ++per_worker_[worker];
    log("dispatch", {{"task", std::to_string(task.id)}, {"worker", std::to_string(worker)},
                     {"type", std::to_string(task.work_type)}, {"prio", std::to_string(task.priority)}});
    return Dispatch{worker, std::move(task)};
}

std::optional<Dispatch> Balancer::put(TaskDescriptor task) {
    if (shutdown_) throw ProtocolError("put of task " + std::to_string(task.id) + " after shutdown");
    if (!seen_.insert(task.id).second) {
        throw ProtocolError("task id " + std::to_string(task.id) + " was already put");
    }
    log("put", {{"task", std::to_string(task.id)}, {"type", std::to_string(task.work_type)},
                {"prio", std::to_string(task.priority)},
                {"target", task.target ? std::to_string(*task.target) : "-"}});

    for (auto it = waiting_.begin(); it != waiting_.end(); ++it) {
        const bool match = task.target ? it->worker == *task.target
                                       : accepts(it->worker, it->work_type, task.work_type);
        if (match) {
            const auto worker = it->worker;
            waiting_.erase(it);
            auto d = hand_out(worker, std::move(task));
            check();
            return d;
        }
    }
    auto& q = task.target ? by_target_[*task.target] : by_type_[task.work_type];
    const auto key = std::make_pair(task.priority, seq_++);
    q.emplace(key, std::move(task));
    ++queued_count_;
    check();
    return std::nullopt;
}

std::optional<TaskDescriptor> Balancer::get(std::int32_t worker, std::int32_t work_type) {
    if (!workers_.count(worker)) throw ProtocolError("get from unregistered worker " + std::to_string(worker));
    if (shutdown_) throw ProtocolError("get from worker " + std::to_string(worker) + " after shutdown");
    for (const auto& w : waiting_) {
        if (w.worker == worker) throw ProtocolError("worker " + std::to_string(worker) + " is already waiting");
    }

    // Best candidate across the worker's targeted queue and every acceptable
    // untargeted queue.
    Queue* best_q = nullptr;
    Queue::iterator best;
    auto consider = [&](Queue& q) {
        if (q.empty()) return;
        auto it = q.begin();
        if (!best_q || Order{}(it->first, best->first)) {
            best_q = &q;
            best = it;
        }
    };
    if (auto t = by_target_.find(worker); t != by_target_.end()) consider(t->second);
    for (auto& [type, q] : by_type_) {
        if (accepts(worker, work_type, type)) consider(q);
    }
    if (best_q) {
        TaskDescriptor task = std::move(best->second);
        best_q->erase(best);
        --queued_count_;
        auto d = hand_out(worker, std::move(task));
        check();
        return std::move(d.task);
    }
    waiting_.push_back({worker, work_type});
    check();
    return std::nullopt;
}

void Balancer::complete(TaskId task, std::int32_t worker) {
    auto it = in_dispatch_.find(task);
    if (it == in_dispatch_.end()) {
        if (completed_.count(task)) throw ProtocolError("duplicate completion of task " + std::to_string(task));
        throw ProtocolError("completion of unknown task " + std::to_string(task));
    }
    if (it->second != worker) {
        throw ProtocolError("task " + std::to_string(task) + " completed by worker " +
                            std::to_string(worker) + " but dispatched to worker " +
                            std::to_string(it->second));
    }
    in_dispatch_.erase(it);
    completed_.insert(task);
    check();
}

std::vector<std::int32_t> Balancer::shutdown() {
    std::vector<std::int32_t> out;
    if (!shutdown_) log("shutdown", {{"waiting", std::to_string(waiting_.size())}});
    shutdown_ = true;
    for (const auto& w : waiting_) out.push_back(w.worker);
    waiting_.clear();
    return out;
}

std::size_t Balancer::dispatched_to(std::int32_t worker) const {
    auto it = per_worker_.find(worker);
    return it == per_worker_.end() ? 0 : it->second;
}

bool Balancer::work_conserving() const {
    for (const auto& w : waiting_) {
        if (auto t = by_target_.find(w.worker); t != by_target_.end() && !t->second.empty()) return false;
        for (const auto& [type, q] : by_type_) {
            if (!q.empty() && accepts(w.worker, w.work_type, type)) return false;
        }
    }
    return true;
}

void Balancer::check() {
    if (!work_conserving()) ++trips_;
}

}  // namespace miniflow
