#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "miniflow/value.hpp"

namespace miniflow {

enum class ExecKind : std::uint8_t { Template = 0, Native = 1, Guest = 2 };

std::string_view exec_kind_name(ExecKind k) noexcept;

struct Param {
    ScalarType type = ScalarType::Int;
    std::string name;

    bool operator==(const Param&) const = default;
};

/// How a leaf function is executed on a worker.
struct LeafBinding {
    std::string name;
    std::vector<Param> inputs;
    std::vector<Param> outputs;
    ExecKind kind = ExecKind::Template;
    /// Guest code (Template/Guest) or optional registered symbol (Native).
    std::optional<std::string> code;
    std::optional<std::string> package;
    std::optional<std::string> version;

    bool operator==(const LeafBinding&) const = default;

    /// Task queue this binding's tasks go to: 1 for interpreter-hosted leaves.
    std::int32_t work_type() const noexcept { return kind == ExecKind::Native ? 0 : 1; }
};

inline constexpr std::int32_t kGenericWorkType = 0;
inline constexpr std::int32_t kGuestWorkType = 1;

}  // namespace miniflow
