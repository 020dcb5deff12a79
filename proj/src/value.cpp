#include "miniflow/value.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "miniflow/bytes.hpp"

namespace miniflow {

std::string_view type_name(ScalarType t) noexcept {
    switch (t) {
        case ScalarType::Int: return "int";
        case ScalarType::Float: return "float";
        case ScalarType::String: return "string";
        case ScalarType::Blob: return "blob";
    }
    return "?";
}

std::optional<ScalarType> parse_type_name(std::string_view s) noexcept {
    if (s == "int") return ScalarType::Int;
    if (s == "float") return ScalarType::Float;
    if (s == "string") return ScalarType::String;
    if (s == "blob") return ScalarType::Blob;
    return std::nullopt;
}

bool identical(const Value& a, const Value& b) noexcept {
    if (a.index() != b.index()) return false;
    if (const auto* da = std::get_if<double>(&a)) {
        return std::bit_cast<std::uint64_t>(*da) == std::bit_cast<std::uint64_t>(std::get<double>(b));
    }
    return a == b;
}

std::string format_float(double d) {
    if (std::isnan(d)) return "nan";
    if (std::isinf(d)) return d < 0 ? "-inf" : "inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
    std::string s(buf, end);
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

std::string quote_string(std::string_view s) {
    std::string out = "\"";
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (c < 0x20 || c == 0x7F) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\x%02X", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    out += '"';
    return out;
}

std::string display(const Value& v) {
    switch (type_of(v)) {
        case ScalarType::Int: return std::to_string(std::get<std::int64_t>(v));
        case ScalarType::Float: return format_float(std::get<double>(v));
        case ScalarType::String: return quote_string(std::get<std::string>(v));
        case ScalarType::Blob: {
            const auto& b = std::get<Blob>(v);
            std::string s = "blob(" + std::to_string(b.size()) + " bytes";
            if (b.elem_type() != ElemType::None) {
                s += ", ";
                s += elem_type_name(b.elem_type());
            }
            if (!b.shape().empty()) {
                s += ", [";
                for (std::size_t i = 0; i < b.shape().size(); ++i) {
                    if (i) s += ",";
                    s += std::to_string(b.shape()[i]);
                }
                s += "]";
            }
            return s + ")";
        }
    }
    return "?";
}

void encode_value(const Value& v, std::vector<std::uint8_t>& out) {
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(type_of(v)));
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::int64_t>) {
                le::put(out, x);
            } else if constexpr (std::is_same_v<T, double>) {
                le::put_f64(out, x);
            } else if constexpr (std::is_same_v<T, std::string>) {
                le::put_string(out, x);
            } else {
                encode_blob(x, out);
            }
        },
        v);
}

Value decode_value(std::span<const std::uint8_t> in, std::size_t& pos) {
    const auto tag = le::get<std::uint8_t>(in, pos);
    switch (tag) {
        case 0: return le::get<std::int64_t>(in, pos);
        case 1: return le::get_f64(in, pos);
        case 2: return le::get_string(in, pos);
        case 3: return decode_blob(in, pos);
        default: throw DecodeError("unknown value tag " + std::to_string(tag));
    }
}

}  // namespace miniflow
