#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "miniflow/binding.hpp"
#include "miniflow/frontend.hpp"
#include "miniflow/value.hpp"

namespace miniflow {

/// Dense id of a write-once dataflow cell.
struct FutureId {
    std::uint32_t value = 0;
    auto operator<=>(const FutureId&) const = default;
};

struct RuleId {
    std::uint32_t value = 0;
    auto operator<=>(const RuleId&) const = default;
};

using TaskId = std::int64_t;

struct FutureInfo {
    ScalarType type = ScalarType::Int;
    /// Source name with loop-index suffixes, e.g. "t@i=3"; temporaries start with '%'.
    std::string name;
};

struct EmitLeafTask {
    std::string binding;
    std::vector<FutureId> inputs;   // ordered as the leaf's parameters
    std::vector<FutureId> outputs;  // ordered as the leaf's outputs
    std::int64_t priority = 0;
    std::optional<std::int32_t> target;
};

/// Builtin evaluated on the engine: arithmetic, concatenation, conversions, trace.
struct InlineOp {
    std::string op;
    std::vector<FutureId> inputs;
    std::optional<FutureId> output;  // empty for printf
};

struct RuleSpec {
    RuleId id;
    /// Distinct futures read by the action, ascending.
    std::vector<FutureId> inputs;
    std::variant<EmitLeafTask, InlineOp> action;

    std::vector<FutureId> outputs() const;
};

struct EntryStore {
    FutureId future;
    Value value;
};

struct IrProgram {
    std::vector<FutureInfo> futures;
    std::vector<RuleSpec> rules;
    std::vector<EntryStore> entry_stores;
    std::vector<LeafBinding> bindings;
    /// Top-level named variables in declaration order.
    std::vector<FutureId> named;

    std::size_t future_count() const noexcept { return futures.size(); }
    const LeafBinding* find_binding(std::string_view name) const noexcept;
};

IrProgram lower(const CheckedProgram& program);

/// Lowers the loop-free top-level statements of `program` as the parent
/// scope, then unrolls `loop` into (last - first + 1) instantiations.
IrProgram expand_foreach(const CheckedProgram& program, const ast::Foreach& loop);

/// Rules ordered so producers precede consumers. Throws InternalError on a cycle.
std::vector<RuleId> topo_order(const IrProgram& ir);

/// Deterministic text form: futures, entry stores, then one line per rule
/// `rule <id>: [<inputs>] -> <action>`.
std::string dump(const IrProgram& ir);

/// Evaluates a builtin inline op. printf writes its text to `trace`.
/// Throws RuntimeError on division by zero or a malformed blob.
std::optional<Value> eval_inline(std::string_view op, std::span<const Value> args,
                                 std::string* trace = nullptr);

}  // namespace miniflow
