#pragma once
// Bit-exact emulation of the register-level 4-bit weight dequantization
// sequence: SIMD-within-a-register on 32-bit words holding four UINT8 lanes.
//
// A 32-bit word packs eight 4-bit weights interleaved so that a single
// AND/SHR/AND triple splits it into two words of four byte lanes each:
// logical element j sits in the low nibble of byte j, element j+4 in the
// high nibble (j = 0..3). Packing [1..8] that way yields 0x84736251, which
// unpacks to lo = 0x04030201 and hi = 0x08070605.
//
// After the split, one 32-bit integer multiply-add computes q*s + a in all
// four lanes at once. This is only lane-safe because q*s + a <= 255 holds
// for every parameter combination the quantizer can emit (see
// verify_overflow_free in quant.hpp); Checked mode traps any violation.
// A final XOR with 0x80808080 flips each lane's sign bit, reinterpreting
// the biased UINT8 values as INT8 two's complement.
//
// Instruction budget: each input word costs 1 AND + 1 SHR + 1 AND to unpack
// and 1 IMAD + 1 XOR per output word, i.e. 7 instructions per 8 elements.
// Every operation increments an InstructionCounter so tests can pin the
// budget exactly.

#include <array>
#include <cstdint>
#include <span>
#include <utility>

#include "lq/errors.hpp"

namespace lq {

// One 32-bit register: four UINT8 lanes, lane i = byte i (little-endian).
struct RegisterWord {
    std::uint32_t value = 0;

    std::uint8_t lane(int i) const { return static_cast<std::uint8_t>(value >> (8 * i)); }

    static RegisterWord from_lanes(std::uint8_t b0, std::uint8_t b1, std::uint8_t b2,
                                   std::uint8_t b3) {
        return {std::uint32_t(b0) | std::uint32_t(b1) << 8 | std::uint32_t(b2) << 16 |
                std::uint32_t(b3) << 24};
    }
    static RegisterWord splat(std::uint8_t b) { return from_lanes(b, b, b, b); }

    bool operator==(const RegisterWord&) const = default;
};

struct InstructionCounter {
    std::uint64_t and_ops = 0;
    std::uint64_t shr_ops = 0;
    std::uint64_t imad_ops = 0;
    std::uint64_t xor_ops = 0;

    std::uint64_t total() const { return and_ops + shr_ops + imad_ops + xor_ops; }
    InstructionCounter& operator+=(const InstructionCounter& o) {
        and_ops += o.and_ops;
        shr_ops += o.shr_ops;
        imad_ops += o.imad_ops;
        xor_ops += o.xor_ops;
        return *this;
    }
    bool operator==(const InstructionCounter&) const = default;
};

// Release mode reproduces raw register behavior (unsigned 32-bit wraparound);
// Checked mode additionally verifies the per-lane no-carry precondition and
// throws VerificationError naming the offending lane.
enum class LaneCheck { Release, Checked };

// Packs eight 4-bit values (logical order) into one interleaved word.
RegisterWord pack_interleaved(std::span<const std::uint8_t, 8> elems);

// Logical order back out of an unpacked (lo, hi) pair.
std::array<std::uint8_t, 8> unpack_to_elements(RegisterWord lo, RegisterWord hi);

// w -> (lo, hi): lo = w & 0x0F0F0F0F, hi = (w >> 4) & 0x0F0F0F0F.
// Costs 2 AND + 1 SHR.
std::pair<RegisterWord, RegisterWord> unpack_nibbles(RegisterWord w, InstructionCounter& c);

// One 32-bit multiply-add: w * s + a_word, all four lanes at once. Costs
// 1 IMAD. Preconditions (Checked enforces): every lane of w <= 15, s <= 16,
// and lane(w)*s + lane(a_word) <= 255 so no carry crosses a lane boundary.
RegisterWord lane_madd(RegisterWord w, std::uint8_t s, RegisterWord a_word,
                       InstructionCounter& c, LaneCheck check = LaneCheck::Release);

// Flips each lane's sign bit: w ^ 0x80808080. Costs 1 XOR.
RegisterWord lane_xor_msb(RegisterWord w, InstructionCounter& c);

// Full dequant of one interleaved word under a single (s, a) group parameter
// pair: unpack, then madd+xor each half. Returns (lo_out, hi_out) holding
// INT8 bit patterns for logical elements 0..3 and 4..7. Costs exactly
// 2 AND + 1 SHR + 2 IMAD + 2 XOR = 7 instructions.
std::pair<RegisterWord, RegisterWord> dequant_word(RegisterWord w, std::uint8_t s,
                                                   std::uint8_t a, InstructionCounter& c,
                                                   LaneCheck check = LaneCheck::Release);

struct DequantPackedResult {
    std::array<RegisterWord, 8> words;  // word i unpacks to output words 2i, 2i+1
    InstructionCounter counter;
};

// Dequantizes a four-word fragment (32 UINT4 elements) sharing one (s, a)
// pair. Exactly 28 instructions: AND 8, SHR 4, IMAD 8, XOR 8.
DequantPackedResult dequant_packed(const std::array<RegisterWord, 4>& frag, std::uint8_t s,
                                   std::uint8_t a, LaneCheck check = LaneCheck::Release);

}  // namespace lq
