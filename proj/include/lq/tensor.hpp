#pragma once
// Dense n-dimensional tensor container plus the LQTN on-disk format.
//
// LQTN layout, all integers little-endian:
//   magic   "LQTN" (4 bytes)
//   version u16    (currently 1)
//   dtype   u8     (DType enum value)
//   ndim    u8
//   dims    ndim x u64
//   payload raw element bytes, row-major, no padding
//
// U4P payloads hold two elements per byte: logical element 2j sits in the low
// nibble of byte j, element 2j+1 in the high nibble. An odd element count
// leaves the final high nibble zero.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lq/errors.hpp"

namespace lq {

enum class DType : std::uint8_t {
    F32 = 0,
    F16 = 1,
    I8 = 2,
    U8 = 3,
    U4P = 4,
    I32 = 5,
};

const char* dtype_name(DType dt);
bool dtype_valid(std::uint8_t code);

// Bytes needed for `count` elements of `dt` (U4P rounds up).
std::uint64_t payload_bytes(DType dt, std::uint64_t count);

struct DenseTensor {
    DType dtype = DType::F32;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> data;

    std::uint64_t element_count() const;

    // Checks dims nonempty, every extent >= 1, and data size consistent with
    // dtype/dims. Throws ValidationError.
    void validate() const;

    static DenseTensor zeros(DType dt, std::vector<std::uint64_t> dims);

    template <class T>
    std::span<const T> as() const {
        return {reinterpret_cast<const T*>(data.data()), data.size() / sizeof(T)};
    }
    template <class T>
    std::span<T> as() {
        return {reinterpret_cast<T*>(data.data()), data.size() / sizeof(T)};
    }

    // U4P element access by logical index.
    std::uint8_t u4_at(std::uint64_t i) const;
    void set_u4(std::uint64_t i, std::uint8_t v);

    // Reads element i as float. Supports F32 and F16 tensors.
    float f32_at(std::uint64_t i) const;
};

// Convenience constructors used all over the tests and the CLI.
DenseTensor tensor_from_f32(std::vector<std::uint64_t> dims, std::span<const float> values);
DenseTensor tensor_from_i8(std::vector<std::uint64_t> dims, std::span<const std::int8_t> values);

// Widens an F32/F16 tensor into a flat float vector.
std::vector<float> tensor_to_f32(const DenseTensor& t);

// Stream serialization. read_tensor consumes the entire stream and rejects
// trailing bytes; both throw IoError on stream failure (with byte offset),
// ValidationError on malformed contents.
void write_tensor(const DenseTensor& t, std::ostream& out);
DenseTensor read_tensor(std::istream& in);

// File helpers.
void save_tensor(const DenseTensor& t, const std::string& path);
DenseTensor load_tensor(const std::string& path);

}  // namespace lq
