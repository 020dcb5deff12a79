#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "miniflow/blob.hpp"

namespace miniflow {

enum class ScalarType : std::uint8_t { Int = 0, Float = 1, String = 2, Blob = 3 };

std::string_view type_name(ScalarType t) noexcept;
std::optional<ScalarType> parse_type_name(std::string_view s) noexcept;

/// A fully materialized dataflow value. Alternative order matches ScalarType.
using Value = std::variant<std::int64_t, double, std::string, Blob>;

inline ScalarType type_of(const Value& v) noexcept { return static_cast<ScalarType>(v.index()); }

/// Equality with floats compared by bit pattern (NaN payloads and -0.0 count).
bool identical(const Value& a, const Value& b) noexcept;

/// Human-readable rendering used by the CLI and IR dumps.
std::string display(const Value& v);

/// Shortest decimal text that parses back to the same double; keeps a '.' or
/// exponent so the text still reads as a float. Non-finite values render as
/// "inf", "-inf", "nan".
std::string format_float(double d);

std::string quote_string(std::string_view s);

void encode_value(const Value& v, std::vector<std::uint8_t>& out);
Value decode_value(std::span<const std::uint8_t> in, std::size_t& pos);

}  // namespace miniflow
