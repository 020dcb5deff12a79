#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "miniflow/blob.hpp"
#include "miniflow/errors.hpp"

using namespace miniflow;

namespace {

std::vector<std::uint8_t> le_bytes(std::uint64_t bits, int n) {
    std::vector<std::uint8_t> out;
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    return out;
}

std::vector<std::uint8_t> to_vec(std::span<const std::uint8_t> s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    return v;
}

std::size_t oracle_size(ElemType t) {
    switch (t) {
        case ElemType::None: return 0;
        case ElemType::U8: return 1;
        case ElemType::I32: return 4;
        case ElemType::I64: return 8;
        case ElemType::F64: return 8;
    }
    return 0;
}

bool oracle_valid(std::size_t len, ElemType t, const std::vector<std::uint64_t>& shape) {
    if (t == ElemType::None) return shape.empty();
    if (len % oracle_size(t) != 0) return false;
    if (shape.empty()) return true;
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n * oracle_size(t) == len;
}

}  // namespace

TEST_CASE("string blobs") {
    auto b = blob_of_string("abc");
    CHECK(to_vec(b.bytes()) == std::vector<std::uint8_t>{0x61, 0x62, 0x63});
    CHECK(string_of_blob(b) == "abc");
    CHECK(blob_of_string("").size() == 0);
    CHECK(string_of_blob(blob_of_string("")).empty());
    CHECK_THROWS_AS(string_of_blob(Blob({0xFF})), BlobError);
    CHECK_THROWS_AS(string_of_blob(Blob({0xC3})), BlobError);
    CHECK(string_of_blob(Blob({0xC3, 0xA9})) == "\xC3\xA9");
    std::string nul("a\0b", 3);
    CHECK(string_of_blob(blob_of_string(nul)) == nul);
}

TEST_CASE("f64 blobs") {
    auto e = blob_of_f64s({});
    CHECK(e.size() == 0);
    CHECK(e.elem_type() == ElemType::F64);

    const double one = 1.0;
    auto b = blob_of_f64s(std::span<const double>(&one, 1));
    CHECK(to_vec(b.bytes()) == le_bytes(std::bit_cast<std::uint64_t>(1.0), 8));
    CHECK(to_vec(b.bytes()) == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0xF0, 0x3F});

    CHECK_THROWS_AS(f64s_of_blob(Blob(std::vector<std::uint8_t>(12))), BlobError);
    CHECK(f64s_of_blob(Blob(std::vector<std::uint8_t>(16))).size() == 2);
    CHECK(f64_at(b, 0) == 1.0);
    CHECK_THROWS_AS(f64_at(b, 1), BlobError);
}

TEST_CASE("reinterpret examples") {
    Blob b(std::vector<std::uint8_t>(24, 7));
    auto r = reinterpret(b, ElemType::F64, {3});
    CHECK(r.shape() == std::vector<std::uint64_t>{3});
    CHECK(r.shares_buffer_with(b));
    try {
        reinterpret(b, ElemType::F64, {2, 2});
        FAIL("no error");
    } catch (const BlobError& e) {
        CHECK(std::string(e.what()).find("32") != std::string::npos);
        CHECK(std::string(e.what()).find("24") != std::string::npos);
    }
    CHECK_NOTHROW(reinterpret(b, ElemType::U8, {24}));
}

TEST_CASE("reinterpret is exhaustively checked for lengths up to 64") {
    const ElemType types[] = {ElemType::None, ElemType::U8, ElemType::I32, ElemType::I64, ElemType::F64};
    std::vector<std::vector<std::uint64_t>> shapes{{}};
    for (std::uint64_t a = 0; a <= 64; ++a) {
        shapes.push_back({a});
        for (std::uint64_t c = 0; c <= 16; ++c) shapes.push_back({a, c});
    }
    for (std::uint64_t a = 1; a <= 8; ++a)
        for (std::uint64_t c = 1; c <= 8; ++c)
            for (std::uint64_t d = 1; d <= 8; ++d) shapes.push_back({a, c, d});

    std::mt19937_64 rng(5);
    std::size_t accepted = 0, rejected = 0;
    for (std::size_t len = 0; len <= 64; ++len) {
        Blob src(random_bytes(rng, len));
        const auto before = to_vec(src.bytes());
        for (auto t : types) {
            for (const auto& shape : shapes) {
                const bool want = oracle_valid(len, t, shape);
                bool got = true;
                try {
                    auto r = reinterpret(src, t, shape);
                    CHECK(to_vec(r.bytes()) == before);
                    CHECK(r.elem_type() == t);
                    CHECK(r.shape() == shape);
                } catch (const BlobError&) {
                    got = false;
                }
                if (got != want) {
                    CAPTURE(len);
                    CAPTURE(static_cast<int>(t));
                    CAPTURE(shape.size());
                    CHECK(got == want);
                }
                (want ? accepted : rejected)++;
            }
        }
        CHECK(to_vec(src.bytes()) == before);
    }
    CHECK(accepted > 0);
    CHECK(rejected > 0);
    CHECK_THROWS_AS(Blob(std::vector<std::uint8_t>(8), ElemType::None, {8}), BlobError);
    CHECK_THROWS_AS(Blob(std::vector<std::uint8_t>(9), ElemType::I64), BlobError);
}

TEST_CASE("numeric round trips are bit-exact") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 1000; ++round) {
        const std::size_t n = rng() % 32;
        std::vector<double> d(n);
        std::vector<std::int64_t> i(n);
        std::vector<std::int32_t> j(n);
        for (std::size_t k = 0; k < n; ++k) {
            std::uint64_t bits = rng();
            if (k % 4 == 0) bits |= 0x7FF0000000000000ULL;  // NaN and infinity patterns
            if (k % 4 == 0 && (bits & 0xFFFFFFFFFFFFFULL) == 0) bits |= 1;
            d[k] = std::bit_cast<double>(bits);
            i[k] = static_cast<std::int64_t>(rng());
            j[k] = static_cast<std::int32_t>(rng());
        }
        auto bd = blob_of_f64s(d);
        auto rd = f64s_of_blob(bd);
        REQUIRE(rd.size() == n);
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(std::bit_cast<std::uint64_t>(rd[k]) == std::bit_cast<std::uint64_t>(d[k]));
            const auto bits = std::bit_cast<std::uint64_t>(d[k]);
            CHECK(std::vector<std::uint8_t>(bd.bytes().begin() + 8 * k, bd.bytes().begin() + 8 * k + 8) ==
                  le_bytes(bits, 8));
        }
        CHECK(i64s_of_blob(blob_of_i64s(i)) == i);
        CHECK(i32s_of_blob(blob_of_i32s(j)) == j);

        std::string s;
        const std::size_t len = rng() % 40;
        for (std::size_t k = 0; k < len; ++k) {
            const auto c = static_cast<char>(rng() % 0x7F + 1);
            s.push_back(c);
            if (rng() % 5 == 0) s += "\xE2\x82\xAC";
        }
        CHECK(string_of_blob(blob_of_string(s)) == s);
    }
}

TEST_CASE("wire encoding") {
    std::mt19937_64 rng(3);
    Blob b(std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16}, ElemType::F64, {2});
    std::vector<std::uint8_t> out;
    encode_blob(b, out);
    std::vector<std::uint8_t> want = le_bytes(16, 8);
    want.push_back(static_cast<std::uint8_t>(ElemType::F64));
    want.push_back(1);
    auto dim = le_bytes(2, 8);
    want.insert(want.end(), dim.begin(), dim.end());
    want.insert(want.end(), b.bytes().begin(), b.bytes().end());
    CHECK(out == want);

    std::size_t pos = 0;
    auto back = decode_blob(out, pos);
    CHECK(pos == out.size());
    CHECK(back == b);
    for (std::size_t cut = 0; cut < out.size(); ++cut) {
        std::size_t p = 0;
        CHECK_THROWS_AS(decode_blob(std::span(out).first(cut), p), DecodeError);
    }

    for (int round = 0; round < 1000; ++round) {
        Blob r(random_bytes(rng, rng() % 100));
        std::vector<std::uint8_t> enc{0xAA};
        encode_blob(r, enc);
        std::size_t p = 1;
        CHECK(decode_blob(enc, p) == r);
        CHECK(p == enc.size());
    }
}

TEST_CASE("transpose") {
    std::vector<double> v{1, 2, 3, 4, 5, 6};
    auto b = reinterpret(blob_of_f64s(v), ElemType::F64, {2, 3});
    auto t = transpose2d(b);
    CHECK(t.shape() == std::vector<std::uint64_t>{3, 2});
    CHECK(f64s_of_blob(t) == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK(transpose2d(t) == b);
    CHECK(f64s_of_blob(b) == v);
}
