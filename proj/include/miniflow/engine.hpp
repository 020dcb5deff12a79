#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "miniflow/event_log.hpp"
#include "miniflow/ir.hpp"
#include "miniflow/task.hpp"

namespace miniflow {

/// Final contents of every future, indexed by FutureId::value.
using FutureStore = std::vector<std::optional<Value>>;

bool identical(const FutureStore& a, const FutureStore& b) noexcept;

struct EngineOptions {
    EventLog* log = nullptr;
    /// Receives printf output.
    std::function<void(std::string_view)> trace;
};

/// Dataflow evaluator for one IrProgram.
///
/// Owns the write-once cells and the pending rules. A rule fires exactly once,
/// when its last unset input is stored; inline rules run immediately and leaf
/// rules become TaskDescriptors collected by take_emitted(). Not thread-safe:
/// callers serialize all mutation.
class Engine {
public:
    explicit Engine(const IrProgram& ir, EngineOptions opts = {});

    /// Applies entry stores and fires every rule with no inputs.
    std::vector<RuleId> init();

    /// Throws RuntimeError on a double store, TypeError on a type mismatch.
    std::vector<RuleId> store(FutureId fid, Value value);

    /// Throws RuntimeError for an unknown or already completed task, or when
    /// the outputs do not match what the task was emitted with. State is
    /// unchanged on error.
    std::vector<RuleId> on_task_complete(TaskId task,
                                         std::vector<std::pair<FutureId, Value>> outputs);

    std::vector<TaskDescriptor> take_emitted();

    /// No fireable rule remains and no leaf task is in flight.
    bool quiescent() const noexcept { return initialized_ && in_flight_.empty(); }
    /// Quiescent with rules still waiting on inputs that can never arrive.
    bool stalled() const noexcept { return quiescent() && !pending_.empty(); }

    std::size_t in_flight() const noexcept { return in_flight_.size(); }
    std::size_t pending() const noexcept { return pending_.size(); }
    std::size_t fired() const noexcept { return fired_; }
    std::size_t remaining(RuleId r) const;
    /// Rule that emitted an in-flight task.
    std::optional<RuleId> rule_of(TaskId task) const;

    const std::optional<Value>& cell(FutureId fid) const { return cells_.at(fid.value); }
    const FutureStore& cells() const noexcept { return cells_; }

    /// Times a rule was about to fire with an unset input. Process-wide; must
    /// stay zero.
    static std::uint64_t assertion_trips() noexcept { return trips_.load(); }

private:
    void drain(std::deque<std::pair<FutureId, Value>>& work, std::vector<RuleId>& fired);
    void fire(RuleId id, std::deque<std::pair<FutureId, Value>>& work);
    void log(std::string kind, std::vector<std::pair<std::string, std::string>> fields);

    const IrProgram& ir_;
    EngineOptions opts_;
    FutureStore cells_;
    std::vector<std::vector<RuleId>> subscribers_;
    std::map<std::uint32_t, std::size_t> pending_;  // rule -> unset input count
    std::unordered_map<TaskId, RuleId> in_flight_;
    std::unordered_map<TaskId, std::vector<FutureId>> task_outputs_;
    std::vector<TaskId> completed_;
    std::vector<TaskDescriptor> outbox_;
    TaskId next_task_ = 1;
    std::size_t fired_ = 0;
    bool initialized_ = false;

    static std::atomic<std::uint64_t> trips_;
};

/// Deterministic in-process leaf execution used by run_local.
using LeafExecutor =
    std::function<std::vector<Value>(const LeafBinding&, std::span<const Value> inputs)>;

/// Sequential reference evaluation in topo_order. Leaf failures are rethrown
/// as LeafError naming the rule.
FutureStore run_local(const IrProgram& ir, const LeafExecutor& exec,
                      std::function<void(std::string_view)> trace = {});

}  // namespace miniflow
