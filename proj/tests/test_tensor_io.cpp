#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <random>
#include <sstream>

#include "lq/half.hpp"
#include "lq/quant.hpp"
#include "lq/tensor.hpp"

using namespace lq;

namespace {

std::string serialize(const DenseTensor& t) {
    std::ostringstream os(std::ios::binary);
    write_tensor(t, os);
    return os.str();
}

DenseTensor deserialize(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return read_tensor(is);
}

}  // namespace

TEST_CASE("scalar f32 zero tensor serializes to header plus four zero bytes") {
    const float zero = 0.0f;
    const DenseTensor t = tensor_from_f32({1}, std::span<const float>(&zero, 1));
    const std::string bytes = serialize(t);
    // magic(4) + version(2) + dtype(1) + ndim(1) + one u64 dim(8) = 16,
    // then the 4-byte payload.
    CHECK(bytes.size() == 20);
    CHECK(bytes.substr(0, 4) == "LQTN");
    CHECK(bytes.substr(16, 4) == std::string(4, '\0'));
    const DenseTensor back = deserialize(bytes);
    CHECK(back.dtype == DType::F32);
    CHECK(back.dims == std::vector<std::uint64_t>{1});
    CHECK(back.f32_at(0) == 0.0f);
}

TEST_CASE("u4p payload packs two elements per byte, low nibble first") {
    DenseTensor t = DenseTensor::zeros(DType::U4P, {5});
    const std::uint8_t vals[5] = {1, 2, 3, 4, 5};
    for (int i = 0; i < 5; ++i) t.set_u4(i, vals[i]);
    CHECK(t.data.size() == 3);
    CHECK(t.data[0] == 0x21);
    CHECK(t.data[1] == 0x43);
    CHECK(t.data[2] == 0x05);
    for (int i = 0; i < 5; ++i) CHECK(t.u4_at(i) == vals[i]);
    const DenseTensor back = deserialize(serialize(t));
    CHECK(back.data == t.data);
}

TEST_CASE("round trip preserves bytes for every dtype") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> extent(1, 9);
    const DType dtypes[] = {DType::F32, DType::F16, DType::I8,
                            DType::U8,  DType::U4P, DType::I32};
    for (int iter = 0; iter < 200; ++iter) {
        DenseTensor t;
        t.dtype = dtypes[iter % 6];
        const int nd = 1 + iter % 3;
        std::uint64_t count = 1;
        for (int d = 0; d < nd; ++d) {
            t.dims.push_back(std::uint64_t(extent(rng)));
            count *= t.dims.back();
        }
        t.data.resize(payload_bytes(t.dtype, count));
        for (auto& b : t.data) b = std::uint8_t(byte(rng));
        if (t.dtype == DType::U4P && count % 2 == 1) t.data.back() &= 0x0F;
        if (t.dtype == DType::F32 || t.dtype == DType::F16) {
            // keep float payloads finite so value-level checks stay simple
            for (std::size_t i = 0; i + 3 < t.data.size(); i += 4) t.data[i + 3] &= 0x7E;
        }
        const std::string bytes = serialize(t);
        const DenseTensor back = deserialize(bytes);
        CHECK(back.dtype == t.dtype);
        CHECK(back.dims == t.dims);
        CHECK(back.data == t.data);
        CHECK(serialize(back) == bytes);
    }
}

TEST_CASE("f16 widening matches known bit patterns") {
    CHECK(f16_to_f32(0x3C00) == 1.0f);
    CHECK(f16_to_f32(0xC000) == -2.0f);
    CHECK(f16_to_f32(0x7BFF) == 65504.0f);
    CHECK(f16_to_f32(0x0001) == doctest::Approx(5.9604645e-8).epsilon(1e-12));
    CHECK(f32_to_f16(1.0f) == 0x3C00);
    CHECK(f32_to_f16(-2.0f) == 0xC000);
    CHECK(f32_to_f16(65504.0f) == 0x7BFF);
}

TEST_CASE("f16 narrow-widen is the identity on every non-nan code") {
    for (std::uint32_t h = 0; h <= 0xFFFF; ++h) {
        const bool is_nan = (h & 0x7C00) == 0x7C00 && (h & 0x03FF) != 0;
        if (is_nan) continue;
        CHECK(f32_to_f16(f16_to_f32(std::uint16_t(h))) == std::uint16_t(h));
    }
}

TEST_CASE("f16 tensors widen to f32 for computation") {
    DenseTensor t = DenseTensor::zeros(DType::F16, {3});
    const std::uint16_t halves[3] = {0x3C00, 0xC000, 0x3800};  // 1, -2, 0.5
    std::memcpy(t.data.data(), halves, 6);
    const auto f = tensor_to_f32(t);
    CHECK(f == std::vector<float>{1.0f, -2.0f, 0.5f});
}

TEST_CASE("malformed tensor streams are rejected with the right category") {
    const float one = 1.0f;
    const DenseTensor t = tensor_from_f32({2, 2}, std::vector<float>{1, 2, 3, 4});
    std::string good = serialize(t);
    (void)one;

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        CHECK_THROWS_AS(deserialize(bad), ValidationError);
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[4] = 9;
        CHECK_THROWS_AS(deserialize(bad), ValidationError);
    }
    SUBCASE("unknown dtype code") {
        std::string bad = good;
        bad[6] = 42;
        CHECK_THROWS_AS(deserialize(bad), ValidationError);
    }
    SUBCASE("zero extent") {
        std::string bad = good;
        for (int i = 0; i < 8; ++i) bad[8 + i] = 0;
        CHECK_THROWS_AS(deserialize(bad), ValidationError);
    }
    SUBCASE("truncated payload") {
        CHECK_THROWS_AS(deserialize(good.substr(0, good.size() - 3)), IoError);
    }
    SUBCASE("truncated header") {
        CHECK_THROWS_AS(deserialize(good.substr(0, 9)), IoError);
    }
    SUBCASE("trailing garbage") {
        CHECK_THROWS_AS(deserialize(good + "x"), ValidationError);
    }
}

TEST_CASE("write failure surfaces as IoError with an offset") {
    const DenseTensor t = tensor_from_f32({1}, std::vector<float>{1.0f});
    std::ostringstream os;
    os.setstate(std::ios::badbit);
    CHECK_THROWS_AS(write_tensor(t, os), IoError);
    try {
        std::ostringstream os2;
        os2.setstate(std::ios::badbit);
        write_tensor(t, os2);
    } catch (const IoError& e) {
        CHECK(e.byte_offset == 0);
    }
}

TEST_CASE("validate catches dimension and payload mismatches") {
    DenseTensor t = DenseTensor::zeros(DType::I8, {4});
    t.data.resize(3);
    CHECK_THROWS_AS(t.validate(), ValidationError);
    DenseTensor empty;
    CHECK_THROWS_AS(empty.validate(), ValidationError);
}

// --- bundle format ----------------------------------------------------------

namespace {

QuantizedWeightBundle small_bundle(WeightLayout layout) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    std::vector<float> w(std::size_t(64) * 128);
    for (auto& v : w) v = u(rng);
    return build_bundle(w, 64, 128, 64, layout);
}

std::string serialize(const QuantizedWeightBundle& b) {
    std::ostringstream os(std::ios::binary);
    write_bundle(b, os);
    return os.str();
}

}  // namespace

TEST_CASE("bundle round trip is byte-stable for both layouts") {
    for (WeightLayout layout : {WeightLayout::PlainRowMajor, WeightLayout::DualMmaPacked}) {
        const QuantizedWeightBundle b = small_bundle(layout);
        const std::string bytes = serialize(b);
        std::istringstream is(bytes, std::ios::binary);
        const QuantizedWeightBundle back = read_bundle(is);
        CHECK(back.n == b.n);
        CHECK(back.k == b.k);
        CHECK(back.layout == b.layout);
        CHECK(back.packed_weights == b.packed_weights);
        CHECK(back.group_scales == b.group_scales);
        CHECK(back.group_offsets == b.group_offsets);
        CHECK(back.channel_scales == b.channel_scales);
        CHECK(serialize(back) == bytes);
    }
}

TEST_CASE("bundle validation names the offending group") {
    QuantizedWeightBundle b = small_bundle(WeightLayout::PlainRowMajor);
    // Header is 19 bytes for the plain layout; weights follow, then scales.
    std::string bytes = serialize(b);
    const std::size_t scales_at = 19 + b.packed_weights.size();

    SUBCASE("scale of zero") {
        bytes[scales_at + 3] = 0;  // flat index 3 = row 1, group 1 (2 groups/row)
        std::istringstream is(bytes, std::ios::binary);
        try {
            read_bundle(is);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("row 1 group 1") != std::string::npos);
        }
    }
    SUBCASE("offset out of range") {
        const std::size_t offsets_at = scales_at + b.group_scales.size();
        bytes[offsets_at + 2 * b.groups_per_row() + 1] = char(std::uint8_t(251));
        std::istringstream is(bytes, std::ios::binary);
        try {
            read_bundle(is);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("row 2 group 1") != std::string::npos);
        }
    }
    SUBCASE("truncation") {
        std::istringstream is(bytes.substr(0, bytes.size() - 2), std::ios::binary);
        CHECK_THROWS_AS(read_bundle(is), IoError);
    }
    SUBCASE("trailing garbage") {
        std::istringstream is(bytes + "zz", std::ios::binary);
        CHECK_THROWS_AS(read_bundle(is), ValidationError);
    }
}

TEST_CASE("layout conversions preserve logical codes and parameters") {
    const QuantizedWeightBundle plain = small_bundle(WeightLayout::PlainRowMajor);
    const QuantizedWeightBundle dual = to_dual_mma(plain);
    CHECK(dual.layout == WeightLayout::DualMmaPacked);
    CHECK(logical_codes(dual) == logical_codes(plain));
    CHECK(dual.group_scales == plain.group_scales);
    const QuantizedWeightBundle back = to_plain(dual);
    CHECK(back.packed_weights == plain.packed_weights);
    CHECK(serialize(back) == serialize(plain));
}

TEST_CASE("code_at agrees with logical_codes for both layouts") {
    for (WeightLayout layout : {WeightLayout::PlainRowMajor, WeightLayout::DualMmaPacked}) {
        const QuantizedWeightBundle b = small_bundle(layout);
        const auto codes = logical_codes(b);
        std::mt19937 rng(3);
        std::uniform_int_distribution<std::uint32_t> row(0, b.n - 1), col(0, b.k - 1);
        for (int i = 0; i < 500; ++i) {
            const std::uint32_t r = row(rng), c = col(rng);
            CHECK(b.code_at(r, c) == codes[std::size_t(r) * b.k + c]);
        }
    }
}
