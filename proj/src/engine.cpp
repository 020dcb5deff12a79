#include "miniflow/engine.hpp"

#include <algorithm>

namespace miniflow {

std::atomic<std::uint64_t> Engine::trips_{0};

bool identical(const FutureStore& a, const FutureStore& b) noexcept {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].has_value() != b[i].has_value()) return false;
        if (a[i] && !identical(*a[i], *b[i])) return false;
    }
    return true;
}

bool identical(const TaskDescriptor& a, const TaskDescriptor& b) noexcept {
    if (a.id != b.id || a.work_type != b.work_type || a.priority != b.priority ||
        a.target != b.target || a.binding != b.binding || a.outputs != b.outputs ||
        a.inputs.size() != b.inputs.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        if (!identical(a.inputs[i], b.inputs[i])) return false;
    }
    return true;
}

namespace {

std::string ids(const std::vector<FutureId>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i].value);
    }
    return "[" + s + "]";
}

}  // namespace

Engine::Engine(const IrProgram& ir, EngineOptions opts)
    : ir_(ir), opts_(std::move(opts)), cells_(ir.futures.size()), subscribers_(ir.futures.size()) {
    for (const auto& r : ir_.rules) {
        pending_.emplace(r.id.value, r.inputs.size());
        for (FutureId f : r.inputs) subscribers_.at(f.value).push_back(r.id);
    }
}

std::size_t Engine::remaining(RuleId r) const {
    auto it = pending_.find(r.value);
    return it == pending_.end() ? 0 : it->second;
}

void Engine::log(std::string kind, std::vector<std::pair<std::string, std::string>> fields) {
    if (opts_.log) opts_.log->record(std::move(kind), std::move(fields));
}

std::vector<RuleId> Engine::init() {
    if (initialized_) throw InternalError("engine initialized twice");
    std::vector<RuleId> fired;
    std::deque<std::pair<FutureId, Value>> work;
    for (const auto& s : ir_.entry_stores) work.emplace_back(s.future, s.value);
    drain(work, fired);
    std::vector<RuleId> ready;
    for (const auto& [rule, count] : pending_) {
        if (count == 0) ready.push_back(RuleId{rule});
    }
    for (RuleId r : ready) {
        fired.push_back(r);
        fire(r, work);
        drain(work, fired);
    }
    initialized_ = true;
    return fired;
}

std::vector<RuleId> Engine::store(FutureId fid, Value value) {
    if (fid.value >= cells_.size()) {
        throw RuntimeError("store to unknown future " + std::to_string(fid.value));
    }
    std::vector<RuleId> fired;
    std::deque<std::pair<FutureId, Value>> work;
    work.emplace_back(fid, std::move(value));
    drain(work, fired);
    return fired;
}

void Engine::drain(std::deque<std::pair<FutureId, Value>>& work, std::vector<RuleId>& fired) {
    while (!work.empty()) {
        auto [fid, value] = std::move(work.front());
        work.pop_front();
        auto& cell = cells_.at(fid.value);
        if (cell) {
            throw RuntimeError("double store to future " + std::to_string(fid.value) + " (" +
                               ir_.futures[fid.value].name + ")");
        }
        if (type_of(value) != ir_.futures[fid.value].type) {
            throw TypeError("store of " + std::string(type_name(type_of(value))) + " to future " +
                            std::to_string(fid.value) + " of type " +
                            std::string(type_name(ir_.futures[fid.value].type)));
        }
        cell = std::move(value);
        log("store", {{"future", std::to_string(fid.value)}});
        for (RuleId r : subscribers_[fid.value]) {
            auto it = pending_.find(r.value);
            if (it == pending_.end()) continue;
            if (--it->second == 0) {
                fired.push_back(r);
                fire(r, work);
            }
        }
    }
}

void Engine::fire(RuleId id, std::deque<std::pair<FutureId, Value>>& work) {
    const RuleSpec& rule = ir_.rules.at(id.value);
    for (FutureId f : rule.inputs) {
        if (!cells_[f.value]) {
            ++trips_;
            throw InternalError("rule " + std::to_string(id.value) + " fired with unset input " +
                                std::to_string(f.value));
        }
    }
    pending_.erase(id.value);
    ++fired_;
    log("fire", {{"rule", std::to_string(id.value)}, {"inputs", ids(rule.inputs)}});

    if (const auto* emit = std::get_if<EmitLeafTask>(&rule.action)) {
        const LeafBinding* binding = ir_.find_binding(emit->binding);
        if (!binding) throw InternalError("no binding for leaf '" + emit->binding + "'");
        TaskDescriptor t;
        t.id = next_task_++;
        t.work_type = binding->work_type();
        t.priority = emit->priority;
        t.target = emit->target;
        t.binding = emit->binding;
        for (FutureId f : emit->inputs) t.inputs.push_back(*cells_[f.value]);
        t.outputs = emit->outputs;
        in_flight_.emplace(t.id, id);
        task_outputs_.emplace(t.id, emit->outputs);
        log("emit", {{"rule", std::to_string(id.value)},
                     {"task", std::to_string(t.id)},
                     {"binding", emit->binding},
                     {"in", ids(emit->inputs)},
                     {"out", ids(emit->outputs)},
                     {"prio", std::to_string(emit->priority)}});
        outbox_.push_back(std::move(t));
        return;
    }

    const auto& op = std::get<InlineOp>(rule.action);
    std::vector<Value> args;
    args.reserve(op.inputs.size());
    for (FutureId f : op.inputs) args.push_back(*cells_[f.value]);
    std::string trace;
    std::optional<Value> result;
    try {
        result = eval_inline(op.op, args, &trace);
    } catch (const RuntimeError& e) {
        throw RuntimeError("rule " + std::to_string(id.value) + " (" + op.op + "): " + e.what());
    }
    if (!trace.empty() && opts_.trace) opts_.trace(trace);
    if (op.output && result) work.emplace_back(*op.output, std::move(*result));
}

std::vector<RuleId> Engine::on_task_complete(TaskId task,
                                             std::vector<std::pair<FutureId, Value>> outputs) {
    auto it = task_outputs_.find(task);
    if (it == task_outputs_.end()) {
        if (std::find(completed_.begin(), completed_.end(), task) != completed_.end()) {
            throw RuntimeError("duplicate completion of task " + std::to_string(task));
        }
        throw RuntimeError("completion of unknown task " + std::to_string(task));
    }
    const auto& expected = it->second;
    if (outputs.size() != expected.size()) {
        throw RuntimeError("task " + std::to_string(task) + " completed with " +
                           std::to_string(outputs.size()) + " outputs, expected " +
                           std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        if (outputs[i].first != expected[i]) {
            throw RuntimeError("task " + std::to_string(task) + " output " + std::to_string(i) +
                               " targets future " + std::to_string(outputs[i].first.value) +
                               ", expected " + std::to_string(expected[i].value));
        }
        const ScalarType want = ir_.futures[expected[i].value].type;
        if (type_of(outputs[i].second) != want) {
            throw TypeError("task " + std::to_string(task) + " output " + std::to_string(i) +
                            " is " + std::string(type_name(type_of(outputs[i].second))) +
                            ", expected " + std::string(type_name(want)));
        }
        if (cells_[expected[i].value]) {
            throw RuntimeError("double store to future " + std::to_string(expected[i].value));
        }
    }
    task_outputs_.erase(it);
    in_flight_.erase(task);
    completed_.push_back(task);
    log("complete", {{"task", std::to_string(task)}});

    std::vector<RuleId> fired;
    std::deque<std::pair<FutureId, Value>> work;
    for (auto& [fid, v] : outputs) work.emplace_back(fid, std::move(v));
    drain(work, fired);
    return fired;
}

std::optional<RuleId> Engine::rule_of(TaskId task) const {
    auto it = in_flight_.find(task);
    if (it == in_flight_.end()) return std::nullopt;
    return it->second;
}

std::vector<TaskDescriptor> Engine::take_emitted() { return std::exchange(outbox_, {}); }

FutureStore run_local(const IrProgram& ir, const LeafExecutor& exec,
                      std::function<void(std::string_view)> trace) {
    FutureStore store(ir.futures.size());
    auto put = [&](FutureId f, Value v) {
        if (store[f.value]) throw RuntimeError("double store to future " + std::to_string(f.value));
        store[f.value] = std::move(v);
    };
    for (const auto& s : ir.entry_stores) put(s.future, s.value);
    for (RuleId id : topo_order(ir)) {
        const RuleSpec& rule = ir.rules[id.value];
        std::vector<Value> args;
        if (const auto* emit = std::get_if<EmitLeafTask>(&rule.action)) {
            for (FutureId f : emit->inputs) args.push_back(store.at(f.value).value());
            const LeafBinding* b = ir.find_binding(emit->binding);
            if (!b) throw InternalError("no binding for leaf '" + emit->binding + "'");
            std::vector<Value> outs;
            try {
                outs = exec(*b, args);
            } catch (const std::exception& e) {
                throw LeafError("rule " + std::to_string(id.value) + " (" + emit->binding +
                                "): " + e.what());
            }
            if (outs.size() != emit->outputs.size()) {
                throw LeafError("rule " + std::to_string(id.value) + " (" + emit->binding +
                                "): wrong output count");
            }
            for (std::size_t i = 0; i < outs.size(); ++i) put(emit->outputs[i], std::move(outs[i]));
        } else {
            const auto& op = std::get<InlineOp>(rule.action);
            for (FutureId f : op.inputs) args.push_back(store.at(f.value).value());
            std::string text;
            std::optional<Value> r;
            try {
                r = eval_inline(op.op, args, &text);
            } catch (const RuntimeError& e) {
                throw RuntimeError("rule " + std::to_string(id.value) + " (" + op.op +
                                   "): " + e.what());
            }
            if (!text.empty() && trace) trace(text);
            if (op.output && r) put(*op.output, std::move(*r));
        }
    }
    return store;
}

}  // namespace miniflow
