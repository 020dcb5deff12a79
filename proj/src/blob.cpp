#include "miniflow/blob.hpp"

#include <algorithm>
#include <bit>

#include "miniflow/bytes.hpp"
#include "miniflow/errors.hpp"

namespace miniflow {

std::size_t elem_size(ElemType t) noexcept {
    switch (t) {
        case ElemType::None:
        case ElemType::U8: return 1;
        case ElemType::I32: return 4;
        case ElemType::I64:
        case ElemType::F64: return 8;
    }
    return 1;
}

std::string_view elem_type_name(ElemType t) noexcept {
    switch (t) {
        case ElemType::None: return "none";
        case ElemType::U8: return "u8";
        case ElemType::I32: return "i32";
        case ElemType::I64: return "i64";
        case ElemType::F64: return "f64";
    }
    return "?";
}

namespace {

void check_tags(std::size_t length, ElemType elem, const std::vector<std::uint64_t>& shape) {
    const std::size_t esize = elem_size(elem);
    if (elem != ElemType::None && length % esize != 0) {
        throw BlobError("blob of " + std::to_string(length) + " bytes is not a multiple of " +
                        std::string(elem_type_name(elem)) + " size " + std::to_string(esize));
    }
    if (shape.empty()) return;
    if (elem == ElemType::None) {
        throw BlobError("blob shape requires an element type");
    }
    // Checked product; any overflow is necessarily inconsistent with length.
    std::uint64_t expected = esize;
    bool overflow = false;
    for (auto d : shape) {
        if (d != 0 && expected > UINT64_MAX / d) {
            overflow = true;
            break;
        }
        expected *= d;
    }
    if (overflow || expected != length) {
        throw BlobError("blob shape mismatch: expected " +
                        (overflow ? std::string("overflowing") : std::to_string(expected)) +
                        " bytes, actual " + std::to_string(length));
    }
}

const auto kEmpty = std::make_shared<const std::vector<std::uint8_t>>();

template <typename T>
Blob encode_numbers(std::span<const T> values, ElemType elem) {
    std::vector<std::uint8_t> out;
    out.reserve(values.size() * sizeof(T));
    for (T v : values) {
        if constexpr (std::is_same_v<T, double>) {
            le::put_f64(out, v);
        } else {
            le::put(out, v);
        }
    }
    return Blob(std::move(out), elem);
}

template <typename T>
std::vector<T> decode_numbers(const Blob& b, ElemType want) {
    if (b.elem_type() != ElemType::None && b.elem_type() != ElemType::U8 &&
        b.elem_type() != want) {
        throw BlobError("blob is tagged " + std::string(elem_type_name(b.elem_type())) +
                        ", not " + std::string(elem_type_name(want)));
    }
    if (b.size() % sizeof(T) != 0) {
        throw BlobError("cannot reinterpret " + std::to_string(b.size()) + " bytes as " +
                        std::string(elem_type_name(want)) + ": length not divisible by " +
                        std::to_string(sizeof(T)));
    }
    std::vector<T> out;
    out.reserve(b.size() / sizeof(T));
    std::size_t pos = 0;
    while (pos < b.size()) {
        if constexpr (std::is_same_v<T, double>) {
            out.push_back(le::get_f64(b.bytes(), pos));
        } else {
            out.push_back(le::get<T>(b.bytes(), pos));
        }
    }
    return out;
}

}  // namespace

Blob::Blob() : bytes_(kEmpty) {}

Blob::Blob(std::vector<std::uint8_t> bytes, ElemType elem, std::vector<std::uint64_t> shape)
    : bytes_(std::make_shared<const std::vector<std::uint8_t>>(std::move(bytes))),
      elem_(elem),
      shape_(std::move(shape)) {
    check_tags(bytes_->size(), elem_, shape_);
}

bool operator==(const Blob& a, const Blob& b) {
    return a.elem_ == b.elem_ && a.shape_ == b.shape_ &&
           (a.bytes_ == b.bytes_ || *a.bytes_ == *b.bytes_);
}

Blob blob_of_string(std::string_view s) {
    return Blob(std::vector<std::uint8_t>(s.begin(), s.end()));
}

std::string string_of_blob(const Blob& b) {
    if (!valid_utf8(b.bytes())) {
        throw BlobError("blob payload is not valid UTF-8");
    }
    return std::string(b.bytes().begin(), b.bytes().end());
}

Blob blob_of_f64s(std::span<const double> values) { return encode_numbers(values, ElemType::F64); }
std::vector<double> f64s_of_blob(const Blob& b) { return decode_numbers<double>(b, ElemType::F64); }
Blob blob_of_i64s(std::span<const std::int64_t> values) {
    return encode_numbers(values, ElemType::I64);
}
std::vector<std::int64_t> i64s_of_blob(const Blob& b) {
    return decode_numbers<std::int64_t>(b, ElemType::I64);
}
Blob blob_of_i32s(std::span<const std::int32_t> values) {
    return encode_numbers(values, ElemType::I32);
}
std::vector<std::int32_t> i32s_of_blob(const Blob& b) {
    return decode_numbers<std::int32_t>(b, ElemType::I32);
}

Blob reinterpret(const Blob& b, ElemType elem, std::vector<std::uint64_t> shape) {
    check_tags(b.size(), elem, shape);
    Blob out;
    out.bytes_ = b.bytes_;
    out.elem_ = elem;
    out.shape_ = std::move(shape);
    return out;
}

Blob transpose2d(const Blob& b) {
    if (b.shape().size() != 2) {
        throw BlobError("transpose2d needs a rank-2 blob, got rank " +
                        std::to_string(b.shape().size()));
    }
    const std::size_t rows = b.shape()[0];
    const std::size_t cols = b.shape()[1];
    const std::size_t es = elem_size(b.elem_type());
    std::vector<std::uint8_t> out(b.size());
    auto in = b.bytes();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((r * cols + c) * es), es,
                        out.begin() + static_cast<std::ptrdiff_t>((c * rows + r) * es));
        }
    }
    return Blob(std::move(out), b.elem_type(), {cols, rows});
}

double f64_at(const Blob& b, std::size_t i) {
    if (b.elem_type() != ElemType::F64) {
        throw BlobError("blob is tagged " + std::string(elem_type_name(b.elem_type())) +
                        ", not f64");
    }
    if (i >= b.size() / 8) {
        throw BlobError("f64 index " + std::to_string(i) + " out of range for " +
                        std::to_string(b.size() / 8) + " elements");
    }
    std::size_t pos = i * 8;
    return le::get_f64(b.bytes(), pos);
}

std::uint8_t byte_at(const Blob& b, std::size_t i) {
    if (i >= b.size()) {
        throw BlobError("byte index " + std::to_string(i) + " out of range for " +
                        std::to_string(b.size()) + " bytes");
    }
    return b.bytes()[i];
}

bool valid_utf8(std::span<const std::uint8_t> s) noexcept {
    std::size_t i = 0;
    while (i < s.size()) {
        const std::uint8_t c = s[i];
        std::size_t n = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            n = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            n = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            n = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + n >= s.size()) return false;
        for (std::size_t k = 1; k <= n; ++k) {
            if ((s[i + k] & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (s[i + k] & 0x3F);
        }
        // Overlong forms, surrogates, out of range.
        if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000) ||
            cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += n + 1;
    }
    return true;
}

void encode_blob(const Blob& b, std::vector<std::uint8_t>& out) {
    le::put<std::uint64_t>(out, b.size());
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(b.elem_type()));
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(b.shape().size()));
    for (auto d : b.shape()) le::put<std::uint64_t>(out, d);
    le::put_bytes(out, b.bytes());
}

Blob decode_blob(std::span<const std::uint8_t> in, std::size_t& pos) {
    const auto length = le::get<std::uint64_t>(in, pos);
    const auto tag = le::get<std::uint8_t>(in, pos);
    if (tag > static_cast<std::uint8_t>(ElemType::F64)) {
        throw DecodeError("unknown blob element tag " + std::to_string(tag));
    }
    const auto rank = le::get<std::uint8_t>(in, pos);
    std::vector<std::uint64_t> shape;
    shape.reserve(rank);
    for (std::uint8_t r = 0; r < rank; ++r) shape.push_back(le::get<std::uint64_t>(in, pos));
    le::need(in, pos, length);
    std::vector<std::uint8_t> bytes(in.begin() + static_cast<std::ptrdiff_t>(pos),
                                    in.begin() + static_cast<std::ptrdiff_t>(pos + length));
    pos += length;
    try {
        return Blob(std::move(bytes), static_cast<ElemType>(tag), std::move(shape));
    } catch (const BlobError& e) {
        throw DecodeError(std::string("inconsistent blob tags: ") + e.what());
    }
}

}  // namespace miniflow
