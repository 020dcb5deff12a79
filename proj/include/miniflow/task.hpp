#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "miniflow/ir.hpp"
#include "miniflow/value.hpp"

namespace miniflow {

/// Self-contained unit of leaf work: every input is already materialized.
struct TaskDescriptor {
    TaskId id = 0;
    std::int32_t work_type = kGenericWorkType;
    std::int64_t priority = 0;  // higher runs sooner
    std::optional<std::int32_t> target;
    std::string binding;
    std::vector<Value> inputs;
    std::vector<FutureId> outputs;
};

bool identical(const TaskDescriptor& a, const TaskDescriptor& b) noexcept;

}  // namespace miniflow
