#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "miniflow/binding.hpp"
#include "miniflow/errors.hpp"
#include "miniflow/value.hpp"

namespace miniflow::ast {

struct Expr;
struct Stmt;

struct IntLit {
    std::int64_t value = 0;
};
struct FloatLit {
    double value = 0;
};
struct StringLit {
    std::string value;
};
struct VarRef {
    std::string name;
};
struct Call {
    std::string callee;
    std::vector<Expr> args;
};
/// op is one of + - * /
struct Binary {
    char op = '+';
    std::vector<Expr> operands;  // exactly two
};
struct Negate {
    std::vector<Expr> operand;  // exactly one
};

struct Expr {
    SourceLoc loc;
    std::variant<IntLit, FloatLit, StringLit, VarRef, Call, Binary, Negate> node;
    /// Filled in by resolve().
    std::optional<ScalarType> type;
};

struct Annotations {
    std::optional<std::int64_t> priority;
    std::optional<std::int64_t> target;

    bool empty() const noexcept { return !priority && !target; }
};

/// `int x;` or `int x = expr;`
struct VarDecl {
    ScalarType type = ScalarType::Int;
    std::string name;
    std::optional<Expr> init;
};

/// `x = expr;` or `(a, b) = call(...);`
struct Assign {
    std::vector<std::string> targets;
    Expr value;
};

/// A call evaluated for effect, e.g. `printf("%d", x);`
struct CallStmt {
    Expr call;
};

/// `foreach i in [first:last] { ... }`, bounds inclusive.
struct Foreach {
    std::string index;
    std::int64_t first = 0;
    std::int64_t last = 0;
    std::vector<Stmt> body;
};

struct TemplateSlot {
    std::string name;
    std::size_t position = 0;  // byte offset of the opening "<<"

    bool operator==(const TemplateSlot&) const = default;
};

struct LeafDecl {
    LeafBinding binding;
    std::vector<TemplateSlot> slots;
};

/// `func (outs) name (ins) { body }`, expanded inline at each call site.
struct FuncDef {
    std::string name;
    std::vector<Param> inputs;
    std::vector<Param> outputs;
    std::vector<Stmt> body;
};

struct Stmt {
    SourceLoc loc;
    Annotations annotations;
    std::variant<VarDecl, Assign, CallStmt, Foreach, LeafDecl, FuncDef> node;
};

struct Program {
    std::vector<Stmt> statements;
};

/// Location-free structural rendering, used to compare ASTs.
std::string to_sexpr(const Program& p);
std::string to_sexpr(const Expr& e);

/// Re-emits source text that parses back to a structurally identical program.
std::string pretty_print(const Program& p);
std::string pretty_print(const Expr& e);

}  // namespace miniflow::ast
