#include <algorithm>
#include <map>
#include <unordered_map>

#include "miniflow/frontend.hpp"

namespace miniflow {

using namespace ast;

namespace {

using T = ScalarType;

const std::vector<BuiltinSig>& builtins() {
    static const std::vector<BuiltinSig> table = {
        {"strcat", {T::String, T::String}, false, T::String},
        {"itof", {T::Int}, false, T::Float},
        {"ftoi", {T::Float}, false, T::Int},
        {"tostring", {}, true, T::String},
        {"blob_from_string", {T::String}, false, T::Blob},
        {"string_from_blob", {T::Blob}, false, T::String},
        {"blob_size", {T::Blob}, false, T::Int},
        {"printf", {T::String}, true, std::nullopt},
    };
    return table;
}

struct Symbol {
    std::string name;
    ScalarType type;
    SourceLoc loc;
    bool assigned = false;
    bool assignable = true;  // false for parameters and loop indices
    bool must_assign = true;
};

enum class ScopeKind { Top, Loop, Func };

struct Scope {
    ScopeKind kind;
    std::unordered_map<std::string, std::size_t> names;
    std::vector<std::size_t> declared;  // in order
};

struct FuncSig {
    std::vector<Param> inputs;
    std::vector<Param> outputs;
};

class Resolver {
public:
    Program run(Program p) {
        push(ScopeKind::Top);
        p.statements = body(std::move(p.statements));
        pop();
        check_cycles();
        return p;
    }

private:
    void push(ScopeKind k) { scopes_.push_back(Scope{k, {}, {}}); }

    void pop() {
        for (auto id : scopes_.back().declared) {
            const Symbol& s = syms_[id];
            if (s.must_assign && !s.assigned) {
                throw ResolveError(ResolveError::Kind::Unassigned,
                                   "variable '" + s.name + "' is declared but never assigned",
                                   s.loc);
            }
        }
        scopes_.pop_back();
    }

    std::optional<std::size_t> lookup(const std::string& name) const {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            if (auto f = it->names.find(name); f != it->names.end()) return f->second;
            if (it->kind == ScopeKind::Func) break;  // functions see only their own frame
        }
        return std::nullopt;
    }

    std::size_t declare(const std::string& name, ScalarType type, SourceLoc loc) {
        if (lookup(name) || funcs_.count(name) || find_builtin(name)) {
            throw ResolveError(ResolveError::Kind::Redeclared, "'" + name + "' is already declared",
                               loc);
        }
        syms_.push_back(Symbol{name, type, loc});
        deps_.emplace_back();
        const std::size_t id = syms_.size() - 1;
        scopes_.back().names.emplace(name, id);
        scopes_.back().declared.push_back(id);
        return id;
    }

    std::vector<Stmt> body(std::vector<Stmt> stmts) {
        std::vector<Stmt> out;
        out.reserve(stmts.size());
        for (auto& s : stmts) statement(std::move(s), out);
        return out;
    }

    void statement(Stmt s, std::vector<Stmt>& out) {
        const SourceLoc loc = s.loc;
        if (auto* d = std::get_if<VarDecl>(&s.node)) {
            if (d->init) {
                std::vector<std::size_t> reads;
                expect_type(*d->init, d->type, reads, "initializer of '" + d->name + "'");
                auto id = declare(d->name, d->type, loc);
                syms_[id].assigned = true;
                deps_[id] = std::move(reads);
            } else {
                declare(d->name, d->type, loc);
            }
            out.push_back(std::move(s));
        } else if (std::holds_alternative<Assign>(s.node)) {
            assign(std::move(s), out);
        } else if (auto* c = std::get_if<CallStmt>(&s.node)) {
            std::vector<std::size_t> reads;
            call_outputs(c->call, reads);
            out.push_back(std::move(s));
        } else if (auto* f = std::get_if<Foreach>(&s.node)) {
            push(ScopeKind::Loop);
            auto idx = declare(f->index, ScalarType::Int, loc);
            syms_[idx].assigned = true;
            syms_[idx].assignable = false;
            f->body = body(std::move(f->body));
            pop();
            out.push_back(std::move(s));
        } else if (auto* l = std::get_if<LeafDecl>(&s.node)) {
            top_level_only(loc, "leaf declarations");
            define_function(l->binding.name, FuncSig{l->binding.inputs, l->binding.outputs}, loc);
            out.push_back(std::move(s));
        } else if (auto* fd = std::get_if<FuncDef>(&s.node)) {
            top_level_only(loc, "function definitions");
            push(ScopeKind::Func);
            for (const auto& p : fd->inputs) {
                auto id = declare(p.name, p.type, loc);
                syms_[id].assigned = true;
                syms_[id].assignable = false;
            }
            for (const auto& p : fd->outputs) declare(p.name, p.type, loc);
            fd->body = body(std::move(fd->body));
            pop();
            // Defined after its body so it cannot call itself.
            define_function(fd->name, FuncSig{fd->inputs, fd->outputs}, loc);
            out.push_back(std::move(s));
        }
    }

    void top_level_only(SourceLoc loc, std::string_view what) {
        if (scopes_.size() != 1) {
            throw ResolveError(ResolveError::Kind::Redeclared,
                               std::string(what) + " are only allowed at top level", loc);
        }
    }

    void define_function(const std::string& name, FuncSig sig, SourceLoc loc) {
        if (funcs_.count(name) || find_builtin(name) || lookup(name)) {
            throw ResolveError(ResolveError::Kind::Redeclared,
                               "function '" + name + "' is already declared", loc);
        }
        funcs_.emplace(name, std::move(sig));
    }

    void assign(Stmt s, std::vector<Stmt>& out) {
        Assign& a = std::get<Assign>(s.node);
        const SourceLoc loc = s.loc;
        std::vector<std::size_t> reads;
        std::vector<ScalarType> rhs;
        if (a.targets.size() == 1) {
            rhs.push_back(value_type(a.value, reads));
        } else {
            if (!std::holds_alternative<Call>(a.value.node)) {
                throw ResolveError(ResolveError::Kind::Arity,
                                   "multiple assignment needs a call on the right-hand side", loc);
            }
            rhs = call_outputs(a.value, reads);
            if (rhs.size() != a.targets.size()) {
                throw ResolveError(ResolveError::Kind::Arity,
                                   "call to '" + std::get<Call>(a.value.node).callee + "' yields " +
                                       std::to_string(rhs.size()) + " values, " +
                                       std::to_string(a.targets.size()) + " targets given",
                                   loc);
            }
        }

        std::vector<Stmt> implicit;
        for (std::size_t i = 0; i < a.targets.size(); ++i) {
            const std::string& name = a.targets[i];
            auto id = lookup(name);
            if (!id) {
                if (funcs_.count(name) || find_builtin(name)) {
                    throw ResolveError(ResolveError::Kind::Redeclared,
                                       "cannot assign to function '" + name + "'", loc);
                }
                id = declare(name, rhs[i], loc);
                Stmt decl;
                decl.loc = loc;
                decl.node = VarDecl{rhs[i], name, std::nullopt};
                implicit.push_back(std::move(decl));
            }
            Symbol& sym = syms_[*id];
            const bool local = scopes_.back().names.count(name) > 0;
            if (!sym.assignable || sym.assigned) {
                throw ResolveError(ResolveError::Kind::DoubleAssignment,
                                   "double assignment to '" + name + "'", loc);
            }
            if (!local) {
                throw ResolveError(ResolveError::Kind::DoubleAssignment,
                                   "double assignment to '" + name +
                                       "': assigned inside a loop body but declared outside it",
                                   loc);
            }
            if (sym.type != rhs[i]) {
                throw ResolveError(ResolveError::Kind::Type,
                                   "cannot assign " + std::string(type_name(rhs[i])) + " to '" +
                                       name + "' of type " + std::string(type_name(sym.type)),
                                   loc);
            }
            sym.assigned = true;
            deps_[*id].insert(deps_[*id].end(), reads.begin(), reads.end());
        }

        // A single implicit target folds into its declaration.
        if (a.targets.size() == 1 && implicit.size() == 1) {
            auto& d = std::get<VarDecl>(implicit[0].node);
            d.init = std::move(a.value);
            implicit[0].annotations = s.annotations;
            out.push_back(std::move(implicit[0]));
            return;
        }
        for (auto& d : implicit) out.push_back(std::move(d));
        out.push_back(std::move(s));
    }

    void expect_type(Expr& e, ScalarType want, std::vector<std::size_t>& reads,
                     const std::string& what) {
        ScalarType got = value_type(e, reads);
        if (got != want) {
            throw ResolveError(ResolveError::Kind::Type,
                               what + ": expected " + std::string(type_name(want)) + ", got " +
                                   std::string(type_name(got)),
                               e.loc);
        }
    }

    ScalarType value_type(Expr& e, std::vector<std::size_t>& reads) {
        ScalarType t = std::visit(
            [&](auto& n) -> ScalarType {
                using N = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<N, IntLit>) {
                    return T::Int;
                } else if constexpr (std::is_same_v<N, FloatLit>) {
                    return T::Float;
                } else if constexpr (std::is_same_v<N, StringLit>) {
                    return T::String;
                } else if constexpr (std::is_same_v<N, VarRef>) {
                    auto id = lookup(n.name);
                    if (!id) {
                        throw ResolveError(ResolveError::Kind::Unbound,
                                           "unbound identifier '" + n.name + "'", e.loc);
                    }
                    reads.push_back(*id);
                    return syms_[*id].type;
                } else if constexpr (std::is_same_v<N, Call>) {
                    auto outs = call_outputs(e, reads);
                    if (outs.size() != 1) {
                        throw ResolveError(ResolveError::Kind::Arity,
                                           "'" + n.callee + "' yields " +
                                               std::to_string(outs.size()) +
                                               " values where one is expected",
                                           e.loc);
                    }
                    return outs[0];
                } else if constexpr (std::is_same_v<N, Binary>) {
                    ScalarType l = value_type(n.operands[0], reads);
                    ScalarType r = value_type(n.operands[1], reads);
                    if (l != r) {
                        throw ResolveError(ResolveError::Kind::Type,
                                           std::string("operands of '") + n.op + "' differ: " +
                                               std::string(type_name(l)) + " and " +
                                               std::string(type_name(r)),
                                           e.loc);
                    }
                    const bool ok = l == T::Int || l == T::Float || (l == T::String && n.op == '+');
                    if (!ok) {
                        throw ResolveError(ResolveError::Kind::Type,
                                           std::string("operator '") + n.op + "' is not defined for " +
                                               std::string(type_name(l)),
                                           e.loc);
                    }
                    return l;
                } else {
                    ScalarType t = value_type(n.operand[0], reads);
                    if (t != T::Int && t != T::Float) {
                        throw ResolveError(ResolveError::Kind::Type,
                                           "cannot negate " + std::string(type_name(t)), e.loc);
                    }
                    return t;
                }
            },
            e.node);
        e.type = t;
        return t;
    }

    std::vector<ScalarType> call_outputs(Expr& e, std::vector<std::size_t>& reads) {
        auto& c = std::get<Call>(e.node);
        if (const BuiltinSig* b = find_builtin(c.callee)) {
            if (c.args.size() < b->params.size() || (!b->variadic && c.args.size() != b->params.size())) {
                throw ResolveError(ResolveError::Kind::Arity,
                                   "'" + c.callee + "' expects " +
                                       (b->variadic ? "at least " : "") +
                                       std::to_string(b->params.size()) + " arguments, got " +
                                       std::to_string(c.args.size()),
                                   e.loc);
            }
            for (std::size_t i = 0; i < c.args.size(); ++i) {
                if (i < b->params.size()) {
                    expect_type(c.args[i], b->params[i], reads,
                                "argument " + std::to_string(i + 1) + " of '" + c.callee + "'");
                } else {
                    value_type(c.args[i], reads);
                }
            }
            if (b->name == "tostring" && c.args.size() != 1) {
                throw ResolveError(ResolveError::Kind::Arity, "'tostring' expects 1 argument, got " +
                                                                  std::to_string(c.args.size()),
                                   e.loc);
            }
            if (b->result) {
                e.type = *b->result;
                return {*b->result};
            }
            return {};
        }
        auto f = funcs_.find(c.callee);
        if (f == funcs_.end()) {
            throw ResolveError(ResolveError::Kind::Unbound,
                               "unbound function '" + c.callee + "'", e.loc);
        }
        const FuncSig& sig = f->second;
        if (c.args.size() != sig.inputs.size()) {
            throw ResolveError(ResolveError::Kind::Arity,
                               "'" + c.callee + "' expects " + std::to_string(sig.inputs.size()) +
                                   " arguments, got " + std::to_string(c.args.size()),
                               e.loc);
        }
        for (std::size_t i = 0; i < c.args.size(); ++i) {
            expect_type(c.args[i], sig.inputs[i].type, reads,
                        "argument '" + sig.inputs[i].name + "' of '" + c.callee + "'");
        }
        std::vector<ScalarType> outs;
        for (const auto& o : sig.outputs) outs.push_back(o.type);
        if (outs.size() == 1) e.type = outs[0];
        return outs;
    }

    void check_cycles() const {
        // 0 = unvisited, 1 = on stack, 2 = done
        std::vector<int> state(syms_.size(), 0);
        for (std::size_t root = 0; root < syms_.size(); ++root) {
            if (state[root]) continue;
            std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
            state[root] = 1;
            while (!stack.empty()) {
                auto& [node, next] = stack.back();
                if (next < deps_[node].size()) {
                    std::size_t dep = deps_[node][next++];
                    if (state[dep] == 1) {
                        throw ResolveError(ResolveError::Kind::Cycle,
                                           "cyclic dataflow dependency through '" +
                                               syms_[dep].name + "'",
                                           syms_[dep].loc);
                    }
                    if (state[dep] == 0) {
                        state[dep] = 1;
                        stack.emplace_back(dep, 0);
                    }
                } else {
                    state[node] = 2;
                    stack.pop_back();
                }
            }
        }
    }

    std::vector<Scope> scopes_;
    std::vector<Symbol> syms_;
    std::vector<std::vector<std::size_t>> deps_;  // symbol -> symbols its value reads
    std::map<std::string, FuncSig> funcs_;
};

}  // namespace

const BuiltinSig* find_builtin(std::string_view name) noexcept {
    for (const auto& b : builtins()) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

CheckedProgram resolve(Program program) { return CheckedProgram{Resolver().run(std::move(program))}; }

CheckedProgram compile_source(std::string_view source) {
    auto tokens = tokenize(source);
    return resolve(parse(tokens));
}

}  // namespace miniflow
