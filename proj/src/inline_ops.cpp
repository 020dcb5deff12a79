#include <cmath>
#include <cstdio>

#include "miniflow/ir.hpp"

namespace miniflow {

namespace {

std::int64_t wrap(std::uint64_t v) { return static_cast<std::int64_t>(v); }

template <typename F>
Value arith(std::span<const Value> a, F&& f) {
    if (type_of(a[0]) == ScalarType::Int) {
        return f(std::get<std::int64_t>(a[0]), std::get<std::int64_t>(a[1]));
    }
    return f(std::get<double>(a[0]), std::get<double>(a[1]));
}

std::string to_text(const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    return display(v);
}

std::string format_printf(std::span<const Value> args) {
    const std::string& fmt = std::get<std::string>(args[0]);
    std::string out;
    std::size_t next = 1;
    auto arg = [&](char conv) -> const Value& {
        if (next >= args.size()) {
            throw RuntimeError(std::string("printf: missing argument for %") + conv);
        }
        return args[next++];
    };
    for (std::size_t i = 0; i < fmt.size(); ++i) {
        if (fmt[i] != '%' || i + 1 == fmt.size()) {
            out += fmt[i];
            continue;
        }
        const char conv = fmt[++i];
        switch (conv) {
            case '%': out += '%'; break;
            case 'd':
            case 'i': {
                const Value& v = arg(conv);
                if (type_of(v) != ScalarType::Int) throw RuntimeError("printf: %d needs an int");
                out += std::to_string(std::get<std::int64_t>(v));
                break;
            }
            case 'f':
            case 'g': {
                const Value& v = arg(conv);
                if (type_of(v) != ScalarType::Float) throw RuntimeError("printf: %f needs a float");
                char buf[64];
                std::snprintf(buf, sizeof buf, conv == 'f' ? "%f" : "%g", std::get<double>(v));
                out += buf;
                break;
            }
            case 's': {
                const Value& v = arg(conv);
                if (type_of(v) != ScalarType::String) throw RuntimeError("printf: %s needs a string");
                out += std::get<std::string>(v);
                break;
            }
            case 'v': out += to_text(arg(conv)); break;
            default: throw RuntimeError(std::string("printf: unknown conversion %") + conv);
        }
    }
    if (next != args.size()) throw RuntimeError("printf: too many arguments");
    return out;
}

}  // namespace

std::optional<Value> eval_inline(std::string_view op, std::span<const Value> a, std::string* trace) {
    if (op == "copy") return a[0];
    if (op == "add") {
        return arith(a, [](auto x, auto y) -> Value {
            if constexpr (std::is_same_v<decltype(x), double>) return x + y;
            else return wrap(static_cast<std::uint64_t>(x) + static_cast<std::uint64_t>(y));
        });
    }
    if (op == "sub") {
        return arith(a, [](auto x, auto y) -> Value {
            if constexpr (std::is_same_v<decltype(x), double>) return x - y;
            else return wrap(static_cast<std::uint64_t>(x) - static_cast<std::uint64_t>(y));
        });
    }
    if (op == "mul") {
        return arith(a, [](auto x, auto y) -> Value {
            if constexpr (std::is_same_v<decltype(x), double>) return x * y;
            else return wrap(static_cast<std::uint64_t>(x) * static_cast<std::uint64_t>(y));
        });
    }
    if (op == "div") {
        return arith(a, [](auto x, auto y) -> Value {
            if constexpr (std::is_same_v<decltype(x), double>) {
                return x / y;
            } else {
                if (y == 0) throw RuntimeError("integer division by zero");
                if (x == INT64_MIN && y == -1) return x;
                return x / y;
            }
        });
    }
    if (op == "neg") {
        if (type_of(a[0]) == ScalarType::Int) {
            return wrap(0 - static_cast<std::uint64_t>(std::get<std::int64_t>(a[0])));
        }
        return -std::get<double>(a[0]);
    }
    if (op == "concat" || op == "strcat") {
        return std::get<std::string>(a[0]) + std::get<std::string>(a[1]);
    }
    if (op == "itof") return static_cast<double>(std::get<std::int64_t>(a[0]));
    if (op == "ftoi") {
        const double d = std::get<double>(a[0]);
        if (!std::isfinite(d) || d >= 9223372036854775808.0 || d < -9223372036854775808.0) {
            throw RuntimeError("ftoi: " + format_float(d) + " is not representable as int");
        }
        return static_cast<std::int64_t>(d);
    }
    if (op == "tostring") return to_text(a[0]);
    if (op == "blob_from_string") return blob_of_string(std::get<std::string>(a[0]));
    if (op == "string_from_blob") {
        try {
            return string_of_blob(std::get<Blob>(a[0]));
        } catch (const BlobError& e) {
            throw RuntimeError(std::string("string_from_blob: ") + e.what());
        }
    }
    if (op == "blob_size") return static_cast<std::int64_t>(std::get<Blob>(a[0]).size());
    if (op == "printf") {
        std::string text = format_printf(a);
        if (trace) *trace += text + "\n";
        return std::nullopt;
    }
    throw InternalError("unknown inline op '" + std::string(op) + "'");
}

}  // namespace miniflow
