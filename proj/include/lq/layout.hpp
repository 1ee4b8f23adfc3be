#pragma once
// Weight layout for the dual-MMA register fragment scheme.
//
// A weight tile of 64 rows is consumed by a 4-warp group. Each 32x64-element
// MMA slab (mma_m=64 rows x mma_k=32 columns) assigns 16 elements to each of
// the 128 threads; consecutive MMA slabs are paired so one 16-byte load per
// thread covers two of them (dual_k_span = 64 columns). Per thread the record
// holds 32 UINT4 codes in four interleaved 32-bit words:
//
//   word 0: even slab, row offset 0    word 2: odd slab, row offset 0
//   word 1: even slab, row offset 8    word 3: odd slab, row offset 8
//
// Words 0/2 therefore share one weight row and words 1/3 share another, so
// each word pair sees a single quantization group whenever the group size is
// a multiple of 64 and spans are group-aligned. Within a word, elements
// follow the nibble-interleaved convention of packed.hpp.
//
// Records are laid out thread-major within a warp, warp-major within the
// group, pair-major along k. A warp's 32 records occupy 512 consecutive
// bytes; thread t reads the 16 bytes at offset 16*t, which in a 32-bank,
// 4-byte-bank memory hits banks 4t..4t+3 (mod 32). Each 8-thread access
// phase covers all 32 banks exactly once: conflict-free by construction,
// and check_bank_conflicts verifies it rather than assumes it.

#include <cstdint>
#include <string>
#include <vector>

#include "lq/errors.hpp"

namespace lq {

struct FragmentDescriptor {
    std::uint8_t warps_per_group = 4;
    std::uint8_t threads_per_warp = 32;
    std::uint16_t mma_m = 64;                       // rows per MMA slab
    std::uint16_t mma_k = 32;                       // columns per MMA slab
    std::uint16_t elements_per_thread_per_mma = 16;
    std::uint16_t dual_k_span = 64;                 // columns covered by one record

    // mma_m * mma_k must equal warps * threads * elements_per_thread_per_mma,
    // and dual_k_span must equal 2 * mma_k. Throws ValidationError.
    void validate() const;

    bool operator==(const FragmentDescriptor&) const = default;
};

struct Coord {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    bool operator==(const Coord&) const = default;
};

// The 16 (row, col) positions owned by (warp, thread) in MMA slab mma_index:
//   row = 16*warp + 8*r + thread/4          r in {0,1}
//   col = 32*mma_index + 16*b + 4*(thread%4) + j   b in {0,1}, j in 0..3
// Returned in record element order: r-major, then b, then j; four contiguous
// columns per (r, b) quartet.
std::vector<Coord> fragment_coords(std::uint32_t warp, std::uint32_t thread,
                                   std::uint32_t mma_index, const FragmentDescriptor& d);

struct PackedTile {
    FragmentDescriptor descriptor;
    std::uint32_t k_t = 0;           // tile depth in elements
    std::vector<std::uint8_t> bytes; // rows*k_t/2 bytes of records

    std::uint32_t pair_count() const { return k_t / descriptor.dual_k_span; }
};

// Packs a logical 64 x k_t tile of UINT4 codes (row-major, one code per byte)
// into the record stream. k_t must be a multiple of dual_k_span.
PackedTile pack_dual_mma(const std::vector<std::uint8_t>& codes, std::uint32_t k_t,
                         const FragmentDescriptor& d);

// Exact inverse of pack_dual_mma.
std::vector<std::uint8_t> unpack_dual_mma(const PackedTile& tile);

// --- shared-memory bank conflict model --------------------------------------

struct PhaseStats {
    std::uint32_t distinct_banks = 0;
    std::uint32_t max_accesses_per_bank = 0;  // 1 = conflict-free
};

struct ConflictReport {
    std::vector<PhaseStats> phases;
    std::uint32_t worst_way = 0;  // max over phases of max_accesses_per_bank
    bool conflict_free() const { return worst_way <= 1; }
};

// Models one warp-wide 16-byte-per-thread load: thread t touches the four
// banks covering bytes [offsets[t], offsets[t]+bytes_per_access). Threads
// are issued in phases of phase_size; accesses within a phase conflict when
// they hit the same bank.
ConflictReport check_bank_conflicts(const std::vector<std::uint32_t>& thread_offsets,
                                    std::uint32_t banks = 32, std::uint32_t bank_width = 4,
                                    std::uint32_t phase_size = 8,
                                    std::uint32_t bytes_per_access = 16);

// The access pattern the packed tile induces (identical for every warp and
// pair): thread t reads offset 16*t within its warp's record block.
ConflictReport check_bank_conflicts(const PackedTile& tile);

}  // namespace lq
