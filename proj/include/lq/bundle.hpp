#pragma once
// Quantized weight bundle: everything needed to reconstruct INT8 weights and
// run the W4A8 GEMM, plus the LQWB on-disk format.
//
// LQWB layout, all integers little-endian:
//   magic        "LQWB" (4 bytes)
//   version      u16 (currently 1)
//   n            u32   output channels (weight rows)
//   k            u32   reduction depth (weight columns)
//   group_size   u32
//   layout       u8    0 = PlainRowMajor, 1 = DualMmaPacked
//   descriptor   10 bytes, only when layout = DualMmaPacked:
//                warps u8, threads u8, mma_m u16, mma_k u16,
//                elements_per_thread_per_mma u16, dual_k_span u16
//   packed_weights n*k/2 bytes of UINT4 codes
//                  PlainRowMajor: row-major, element 2j in low nibble of byte j
//                  DualMmaPacked: 64-row bands in row order, each band a
//                  record stream (see layout.hpp)
//   group_scales   n*(k/group_size) bytes, row-major group order, each in [1,16]
//   group_offsets  n*(k/group_size) bytes, same order, each in [9,247]
//   channel_scales n x f32, positive finite
//
// Group g of row r lives at index r*(k/group_size) + g. The group minimum is
// not stored; it is offset - 128 by construction.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lq/errors.hpp"
#include "lq/layout.hpp"

namespace lq {

enum class WeightLayout : std::uint8_t {
    PlainRowMajor = 0,
    DualMmaPacked = 1,
};

struct QuantizedWeightBundle {
    std::uint32_t n = 0;
    std::uint32_t k = 0;
    std::uint32_t group_size = 64;
    WeightLayout layout = WeightLayout::PlainRowMajor;
    FragmentDescriptor fragment;  // meaningful only for DualMmaPacked

    std::vector<std::uint8_t> packed_weights;
    std::vector<std::uint8_t> group_scales;
    std::vector<std::uint8_t> group_offsets;
    std::vector<float> channel_scales;

    std::uint32_t groups_per_row() const { return k / group_size; }
    std::uint8_t scale_of(std::uint32_t row, std::uint32_t group) const {
        return group_scales[std::size_t(row) * groups_per_row() + group];
    }
    std::uint8_t offset_of(std::uint32_t row, std::uint32_t group) const {
        return group_offsets[std::size_t(row) * groups_per_row() + group];
    }

    // Logical UINT4 code at (row, col) regardless of layout. Plain layout
    // reads the nibble directly; packed layout is O(1) via the record
    // address computation. Intended for tests and spot checks, not the GEMM
    // inner loop.
    std::uint8_t code_at(std::uint32_t row, std::uint32_t col) const;

    // Structural and range validation; names the offending group or channel.
    void validate() const;
};

void write_bundle(const QuantizedWeightBundle& b, std::ostream& out);
QuantizedWeightBundle read_bundle(std::istream& in);

void save_bundle(const QuantizedWeightBundle& b, const std::string& path);
QuantizedWeightBundle load_bundle(const std::string& path);

// Layout conversions. Both preserve scales/offsets/channel scales untouched
// and only rewrite the code payload.
QuantizedWeightBundle to_dual_mma(const QuantizedWeightBundle& plain,
                                  const FragmentDescriptor& d = {});
QuantizedWeightBundle to_plain(const QuantizedWeightBundle& packed);

// All n*k logical codes, row-major, one per byte.
std::vector<std::uint8_t> logical_codes(const QuantizedWeightBundle& b);

}  // namespace lq
