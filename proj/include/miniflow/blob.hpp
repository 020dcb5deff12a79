#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace miniflow {

enum class ElemType : std::uint8_t { None = 0, U8 = 1, I32 = 2, I64 = 3, F64 = 4 };

std::size_t elem_size(ElemType t) noexcept;
std::string_view elem_type_name(ElemType t) noexcept;

/// Immutable byte buffer with optional element-type and row-major shape tags.
///
/// Copies share the underlying bytes; retagging never touches the payload.
/// An empty shape means "no shape". When a shape is present an element type
/// must be present too, and product(shape) * elem_size == size().
class Blob {
public:
    Blob();
    explicit Blob(std::vector<std::uint8_t> bytes, ElemType elem = ElemType::None,
                  std::vector<std::uint64_t> shape = {});

    std::span<const std::uint8_t> bytes() const noexcept { return *bytes_; }
    std::size_t size() const noexcept { return bytes_->size(); }
    ElemType elem_type() const noexcept { return elem_; }
    const std::vector<std::uint64_t>& shape() const noexcept { return shape_; }

    /// True when both views share one buffer.
    bool shares_buffer_with(const Blob& other) const noexcept { return bytes_ == other.bytes_; }

    friend bool operator==(const Blob& a, const Blob& b);

private:
    friend Blob reinterpret(const Blob&, ElemType, std::vector<std::uint64_t>);

    std::shared_ptr<const std::vector<std::uint8_t>> bytes_;
    ElemType elem_ = ElemType::None;
    std::vector<std::uint64_t> shape_;
};

Blob blob_of_string(std::string_view s);
/// Throws BlobError when the payload is not valid UTF-8.
std::string string_of_blob(const Blob& b);

Blob blob_of_f64s(std::span<const double> values);
std::vector<double> f64s_of_blob(const Blob& b);
Blob blob_of_i64s(std::span<const std::int64_t> values);
std::vector<std::int64_t> i64s_of_blob(const Blob& b);
Blob blob_of_i32s(std::span<const std::int32_t> values);
std::vector<std::int32_t> i32s_of_blob(const Blob& b);

/// Same bytes, new tags. Throws BlobError on inconsistent length/shape.
Blob reinterpret(const Blob& b, ElemType elem, std::vector<std::uint64_t> shape = {});

/// Row-major <-> column-major for a rank-2 blob; returns a new buffer with the
/// shape reversed.
Blob transpose2d(const Blob& b);

/// f64 element i, little-endian. Throws BlobError when out of range.
double f64_at(const Blob& b, std::size_t i);
std::uint8_t byte_at(const Blob& b, std::size_t i);

bool valid_utf8(std::span<const std::uint8_t> bytes) noexcept;

// Wire encoding: u64 length, u8 elem tag, u8 rank, rank x u64 dims, payload.
void encode_blob(const Blob& b, std::vector<std::uint8_t>& out);
/// Decodes one blob starting at `pos`, advancing it. Throws DecodeError.
Blob decode_blob(std::span<const std::uint8_t> in, std::size_t& pos);

}  // namespace miniflow
