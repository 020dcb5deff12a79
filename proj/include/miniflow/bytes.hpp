#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "miniflow/errors.hpp"

// Little-endian primitive codecs shared by the blob and wire encoders.
namespace miniflow::le {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    put(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_bytes(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> b) {
    out.insert(out.end(), b.begin(), b.end());
}

inline void put_string(std::vector<std::uint8_t>& out, std::string_view s) {
    put<std::uint64_t>(out, s.size());
    out.insert(out.end(), s.begin(), s.end());
}

inline void need(std::span<const std::uint8_t> in, std::size_t pos, std::size_t n) {
    if (pos > in.size() || in.size() - pos < n) {
        throw DecodeError("truncated input: need " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos) + ", have " +
                          std::to_string(pos > in.size() ? 0 : in.size() - pos));
    }
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t& pos) {
    need(in, pos, sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        u |= static_cast<std::make_unsigned_t<T>>(in[pos + i]) << (8 * i);
    }
    pos += sizeof(T);
    return static_cast<T>(u);
}

inline double get_f64(std::span<const std::uint8_t> in, std::size_t& pos) {
    return std::bit_cast<double>(get<std::uint64_t>(in, pos));
}

inline std::string get_string(std::span<const std::uint8_t> in, std::size_t& pos) {
    auto n = get<std::uint64_t>(in, pos);
    need(in, pos, n);
    std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
    pos += n;
    return s;
}

}  // namespace miniflow::le
