#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "miniflow/blob.hpp"
#include "miniflow/value.hpp"

// A small dynamically typed guest language evaluated in-process. Statements
// are separated by newlines or ';'. Supports assignment, if/else, while,
// def/return, lists, and blob accessors; see README for the builtin list.
namespace miniflow::toy {

struct FunctionDef;
struct ToyValue;
using ToyList = std::vector<ToyValue>;

struct Nil {
    bool operator==(const Nil&) const = default;
};

struct ToyValue {
    std::variant<Nil, std::int64_t, double, std::string, Blob, std::shared_ptr<const ToyList>,
                 std::shared_ptr<const FunctionDef>>
        v;

    std::string_view type_name() const noexcept;
};

/// Guest-side representation of a dataflow value. Blobs stay handles onto the
/// same immutable buffer.
ToyValue marshal(const Value& v);
/// Strict: the guest value must already have the expected type. Throws
/// TypeError naming expected and actual types.
Value unmarshal(const ToyValue& g, ScalarType expected);

/// Source text that evaluates to `v` (blobs are not literals; callers bind
/// them as variables instead).
std::string render_literal(const Value& v);

class Interpreter {
public:
    Interpreter();
    ~Interpreter();
    Interpreter(Interpreter&&) noexcept;
    Interpreter& operator=(Interpreter&&) noexcept;

    /// Throws GuestError with a line number on parse or evaluation failure.
    void eval(std::string_view code);

    void set(const std::string& name, ToyValue v);
    std::optional<ToyValue> get(const std::string& name) const;
    void erase(const std::string& name);
    std::size_t global_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace miniflow::toy
