#include <algorithm>
#include <map>
#include <queue>
#include <unordered_map>

#include "miniflow/ir.hpp"

namespace miniflow {

using namespace ast;

std::vector<FutureId> RuleSpec::outputs() const {
    if (const auto* e = std::get_if<EmitLeafTask>(&action)) return e->outputs;
    const auto& op = std::get<InlineOp>(action);
    if (op.output) return {*op.output};
    return {};
}

const LeafBinding* IrProgram::find_binding(std::string_view name) const noexcept {
    for (const auto& b : bindings) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

namespace {

class Lowerer {
public:
    IrProgram take() { return std::move(ir_); }

    void top_level(const std::vector<Stmt>& stmts) {
        frames_.push_back(Frame{});
        block(stmts);
        frames_.pop_back();
    }

    void declarations_and_loop(const std::vector<Stmt>& stmts, const Foreach& loop,
                               SourceLoc loc) {
        frames_.push_back(Frame{});
        for (const auto& s : stmts) {
            if (!std::holds_alternative<Foreach>(s.node)) statement(s);
        }
        foreach_loop(loop, loc);
        frames_.pop_back();
    }

private:
    struct Frame {
        std::unordered_map<std::string, FutureId> names;
    };

    FutureId new_future(ScalarType type, std::string name) {
        ir_.futures.push_back(FutureInfo{type, std::move(name)});
        return FutureId{static_cast<std::uint32_t>(ir_.futures.size() - 1)};
    }

    FutureId temp(ScalarType type) { return new_future(type, "%" + std::to_string(temps_++)); }

    std::string qualified(const std::string& name) const { return prefix_ + name + suffix_; }

    FutureId lookup(const std::string& name) const {
        auto& names = frames_.back().names;
        if (auto it = names.find(name); it != names.end()) return it->second;
        throw InternalError("lowering: unresolved name '" + name + "'");
    }

    void add_rule(std::variant<EmitLeafTask, InlineOp> action) {
        RuleSpec r;
        r.id = RuleId{static_cast<std::uint32_t>(ir_.rules.size())};
        std::visit([&](const auto& a) { r.inputs = a.inputs; }, action);
        std::sort(r.inputs.begin(), r.inputs.end());
        r.inputs.erase(std::unique(r.inputs.begin(), r.inputs.end()), r.inputs.end());
        r.action = std::move(action);
        ir_.rules.push_back(std::move(r));
    }

    void block(const std::vector<Stmt>& stmts) {
        for (const auto& s : stmts) statement(s);
    }

    void statement(const Stmt& s) {
        const Annotations saved = ann_;
        if (s.annotations.priority) ann_.priority = s.annotations.priority;
        if (s.annotations.target) ann_.target = s.annotations.target;
        std::visit(
            [&](const auto& n) {
                using N = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<N, VarDecl>) {
                    FutureId f = new_future(n.type, qualified(n.name));
                    frames_.back().names[n.name] = f;
                    if (frames_.size() == 1 && call_depth_ == 0) ir_.named.push_back(f);
                    if (n.init) compile_into(*n.init, f);
                } else if constexpr (std::is_same_v<N, Assign>) {
                    if (n.targets.size() == 1) {
                        compile_into(n.value, lookup(n.targets[0]));
                    } else {
                        std::vector<FutureId> outs;
                        for (const auto& t : n.targets) outs.push_back(lookup(t));
                        emit_call(n.value, std::get<Call>(n.value.node), outs);
                    }
                } else if constexpr (std::is_same_v<N, CallStmt>) {
                    const auto& c = std::get<Call>(n.call.node);
                    std::vector<FutureId> outs;
                    for (ScalarType t : output_types(c.callee)) outs.push_back(temp(t));
                    emit_call(n.call, c, outs);
                } else if constexpr (std::is_same_v<N, Foreach>) {
                    foreach_loop(n, s.loc);
                } else if constexpr (std::is_same_v<N, LeafDecl>) {
                    ir_.bindings.push_back(n.binding);
                } else {
                    funcs_[n.name] = &n;
                }
            },
            s.node);
        ann_ = saved;
    }

    void foreach_loop(const Foreach& loop, SourceLoc) {
        for (std::int64_t k = loop.first; k <= loop.last; ++k) {
            Frame inner = frames_.back();
            const std::string saved_suffix = suffix_;
            suffix_ += "@" + loop.index + "=" + std::to_string(k);
            FutureId idx = new_future(ScalarType::Int, qualified(loop.index));
            ir_.entry_stores.push_back(EntryStore{idx, k});
            inner.names[loop.index] = idx;
            frames_.push_back(std::move(inner));
            block(loop.body);
            frames_.pop_back();
            suffix_ = saved_suffix;
            if (k == INT64_MAX) break;
        }
    }

    std::vector<ScalarType> output_types(const std::string& callee) const {
        if (const BuiltinSig* b = find_builtin(callee)) {
            if (b->result) return {*b->result};
            return {};
        }
        std::vector<ScalarType> out;
        if (auto f = funcs_.find(callee); f != funcs_.end()) {
            for (const auto& p : f->second->outputs) out.push_back(p.type);
            return out;
        }
        for (const auto& b : ir_.bindings) {
            if (b.name == callee) {
                for (const auto& p : b.outputs) out.push_back(p.type);
                return out;
            }
        }
        throw InternalError("lowering: unknown function '" + callee + "'");
    }

    FutureId compile_value(const Expr& e) {
        if (const auto* v = std::get_if<VarRef>(&e.node)) return lookup(v->name);
        FutureId f = temp(*e.type);
        compile_into(e, f);
        return f;
    }

    void compile_into(const Expr& e, FutureId out) {
        std::visit(
            [&](const auto& n) {
                using N = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<N, IntLit>) {
                    ir_.entry_stores.push_back(EntryStore{out, n.value});
                } else if constexpr (std::is_same_v<N, FloatLit>) {
                    ir_.entry_stores.push_back(EntryStore{out, n.value});
                } else if constexpr (std::is_same_v<N, StringLit>) {
                    ir_.entry_stores.push_back(EntryStore{out, n.value});
                } else if constexpr (std::is_same_v<N, VarRef>) {
                    add_rule(InlineOp{"copy", {lookup(n.name)}, out});
                } else if constexpr (std::is_same_v<N, Call>) {
                    emit_call(e, n, {out});
                } else if constexpr (std::is_same_v<N, Binary>) {
                    FutureId l = compile_value(n.operands[0]);
                    FutureId r = compile_value(n.operands[1]);
                    std::string op;
                    switch (n.op) {
                        case '+': op = *e.type == ScalarType::String ? "concat" : "add"; break;
                        case '-': op = "sub"; break;
                        case '*': op = "mul"; break;
                        default: op = "div";
                    }
                    add_rule(InlineOp{op, {l, r}, out});
                } else {
                    add_rule(InlineOp{"neg", {compile_value(n.operand[0])}, out});
                }
            },
            e.node);
    }

    void emit_call(const Expr&, const Call& c, const std::vector<FutureId>& outs) {
        std::vector<FutureId> args;
        args.reserve(c.args.size());
        for (const auto& a : c.args) args.push_back(compile_value(a));

        if (find_builtin(c.callee)) {
            std::optional<FutureId> out;
            if (!outs.empty()) out = outs[0];
            add_rule(InlineOp{c.callee, std::move(args), out});
            return;
        }
        if (auto f = funcs_.find(c.callee); f != funcs_.end()) {
            inline_function(*f->second, args, outs);
            return;
        }
        EmitLeafTask emit;
        emit.binding = c.callee;
        emit.inputs = std::move(args);
        emit.outputs = outs;
        emit.priority = ann_.priority.value_or(0);
        if (ann_.target) emit.target = static_cast<std::int32_t>(*ann_.target);
        add_rule(std::move(emit));
    }

    void inline_function(const FuncDef& f, const std::vector<FutureId>& args,
                         const std::vector<FutureId>& outs) {
        Frame frame;
        for (std::size_t i = 0; i < f.inputs.size(); ++i) frame.names[f.inputs[i].name] = args[i];
        for (std::size_t i = 0; i < f.outputs.size(); ++i) frame.names[f.outputs[i].name] = outs[i];
        const std::string saved_prefix = prefix_;
        const std::string saved_suffix = suffix_;
        prefix_ = prefix_ + f.name + "#" + std::to_string(calls_++) + ".";
        suffix_.clear();
        ++call_depth_;
        frames_.push_back(std::move(frame));
        block(f.body);
        frames_.pop_back();
        --call_depth_;
        prefix_ = saved_prefix;
        suffix_ = saved_suffix;
    }

    IrProgram ir_;
    std::vector<Frame> frames_;
    std::map<std::string, const FuncDef*> funcs_;
    Annotations ann_;
    std::string prefix_;
    std::string suffix_;
    std::size_t temps_ = 0;
    std::size_t calls_ = 0;
    int call_depth_ = 0;
};

std::string id_list(const std::vector<FutureId>& ids) {
    std::string s = "[";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(ids[i].value);
    }
    return s + "]";
}

}  // namespace

IrProgram lower(const CheckedProgram& program) {
    Lowerer l;
    l.top_level(program.program.statements);
    return l.take();
}

IrProgram expand_foreach(const CheckedProgram& program, const ast::Foreach& loop) {
    Lowerer l;
    l.declarations_and_loop(program.program.statements, loop, SourceLoc{});
    return l.take();
}

std::vector<RuleId> topo_order(const IrProgram& ir) {
    const std::size_t n = ir.rules.size();
    std::vector<std::optional<std::size_t>> producer(ir.futures.size());
    for (std::size_t r = 0; r < n; ++r) {
        for (FutureId f : ir.rules[r].outputs()) {
            if (producer[f.value]) {
                throw InternalError("future " + std::to_string(f.value) + " has two writers");
            }
            producer[f.value] = r;
        }
    }
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> consumers(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (FutureId f : ir.rules[r].inputs) {
            if (auto p = producer[f.value]) {
                ++indegree[r];
                consumers[*p].push_back(r);
            }
        }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t r = 0; r < n; ++r) {
        if (indegree[r] == 0) ready.push(r);
    }
    std::vector<RuleId> order;
    order.reserve(n);
    while (!ready.empty()) {
        std::size_t r = ready.top();
        ready.pop();
        order.push_back(RuleId{static_cast<std::uint32_t>(r)});
        for (std::size_t c : consumers[r]) {
            if (--indegree[c] == 0) ready.push(c);
        }
    }
    if (order.size() != n) {
        throw InternalError("dependency cycle among " + std::to_string(n - order.size()) + " rules");
    }
    return order;
}

std::string dump(const IrProgram& ir) {
    std::string out;
    for (std::size_t i = 0; i < ir.futures.size(); ++i) {
        out += "future " + std::to_string(i) + " " + std::string(type_name(ir.futures[i].type)) +
               " " + ir.futures[i].name + "\n";
    }
    for (const auto& s : ir.entry_stores) {
        out += "store " + std::to_string(s.future.value) + " = " + display(s.value) + "\n";
    }
    for (const auto& r : ir.rules) {
        out += "rule " + std::to_string(r.id.value) + ": " + id_list(r.inputs) + " -> ";
        if (const auto* e = std::get_if<EmitLeafTask>(&r.action)) {
            out += "emit " + e->binding + " " + id_list(e->inputs) + " -> " + id_list(e->outputs) +
                   " prio=" + std::to_string(e->priority);
            if (e->target) out += " target=" + std::to_string(*e->target);
        } else {
            const auto& op = std::get<InlineOp>(r.action);
            out += "inline " + op.op + " " + id_list(op.inputs);
            if (op.output) out += " -> " + std::to_string(op.output->value);
        }
        out += "\n";
    }
    return out;
}

}  // namespace miniflow
