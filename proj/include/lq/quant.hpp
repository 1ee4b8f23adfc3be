#pragma once
// Two-level weight quantization with overflow-safe UINT8 dequantization.
//
// Level 1 (FP32 -> INT8, per output channel): s = max|row| / 119, codes
// clamped to [-119, 119]. The deliberately narrowed range is what buys the
// no-carry guarantee below; symmetric, all-zero rows get s = 1.
//
// Level 2 (INT8 -> UINT4, per group of `group_size` along k): shift by the
// group minimum into unsigned space, divide by an integer scale
//   s_u8 = max(1, round(max(q - min) / 15))  in [1, 16],
// clamp codes to [0, 15], and record the biased zero point a = 128 + min.
// Because level 1 bounds |q| by 119, a always lands in [9, 247].
//
// Dequantization never leaves unsigned 8-bit arithmetic:
//   q_u4 * s_u8 + a  <=  max(q) + 8 + 128  <=  255,
// so the multiply-add cannot carry, and XOR 0x80 flips the bias into INT8
// two's complement. dequantize_scalar is the wide-arithmetic ground truth;
// dequantize_lane is the 8-bit path that must match it bit for bit.
// verify_overflow_free proves the no-carry bound over every parameter
// combination the quantizer can emit.
//
// All rounding here is round-half-away-from-zero.

#include <cstdint>
#include <span>
#include <vector>

#include "lq/bundle.hpp"
#include "lq/errors.hpp"

namespace lq {

inline int round_half_away(double v) {
    return int(v < 0 ? v - 0.5 : v + 0.5);
}

// --- level 1 ----------------------------------------------------------------

struct FirstLevelResult {
    std::uint32_t n = 0, k = 0;
    std::vector<std::int8_t> q;       // n*k codes in [-119, 119]
    std::vector<float> channel_scales;
};

FirstLevelResult quantize_first_level(std::span<const float> w, std::uint32_t n,
                                      std::uint32_t k);

// --- level 2 ----------------------------------------------------------------

struct GroupQuantParams {
    std::uint8_t scale = 1;    // s_u8 in [1, 16]
    std::uint8_t offset = 128; // a = 128 + group_min, in [9, 247]
    std::int8_t group_min = 0; // redundant with offset, kept for audit

    bool operator==(const GroupQuantParams&) const = default;
};

struct SecondLevelResult {
    std::uint32_t n = 0, k = 0, group_size = 64;
    std::vector<std::uint8_t> codes;      // n*k UINT4 values, one per byte
    std::vector<GroupQuantParams> groups; // n*(k/group_size), row-major

    const GroupQuantParams& group_of(std::uint32_t row, std::uint32_t col) const {
        return groups[std::size_t(row) * (k / group_size) + col / group_size];
    }
};

SecondLevelResult quantize_second_level(std::span<const std::int8_t> q, std::uint32_t n,
                                        std::uint32_t k, std::uint32_t group_size);

// --- dequantization ---------------------------------------------------------

// Ground truth: wide signed arithmetic, result narrowed to INT8 (the narrow
// is exact for every reachable parameter combination).
std::int8_t dequantize_scalar(std::uint8_t code, const GroupQuantParams& p);

// 8-bit path: (code * s + a) XOR 0x80, computed entirely in UINT8 with
// natural mod-256 wraparound. Checked mode throws VerificationError if the
// multiply-add exceeds 255, which no quantizer-emitted parameters can cause.
enum class LaneMode { Release, Checked };
std::uint8_t dequantize_lane(std::uint8_t code, std::uint8_t s, std::uint8_t a,
                             LaneMode mode = LaneMode::Release);

// True when code*s + a would carry out of 8 bits.
bool lane_overflows(std::uint8_t code, std::uint8_t s, std::uint8_t a);

// Final output scaling: accumulator * channel_scale * token_scale.
float epilogue_dequantize(std::int64_t acc, float channel_scale, float token_scale);

// --- overflow verification --------------------------------------------------

struct OverflowViolation {
    std::uint8_t code = 0, scale = 0, offset = 0;
    int value = 0;  // the widened multiply-add result
};

struct OverflowReport {
    // Reachable set: every distinct (code, s_u8, a) the quantizer can emit,
    // enumerated over all group (min, max) ranges in [-119, 119]^2.
    std::uint64_t group_ranges_checked = 0;
    std::uint64_t reachable_triples = 0;
    std::uint64_t chain_bound_failures = 0;  // max(q)+8+128 > 255 events
    std::vector<OverflowViolation> violations;  // reachable triples that carry

    // Raw 16 x 16 x 239 box sweep (exhaustive mode only). Box points that
    // carry are counted, not violations: they are unreachable by
    // construction and exist to show the bound is not vacuous.
    std::uint64_t box_points_checked = 0;
    std::uint64_t box_points_overflowing = 0;

    bool ok() const { return violations.empty() && chain_bound_failures == 0; }
};

OverflowReport verify_overflow_free(bool exhaustive);

// Independent reachable-set counter for cross-checking the report: pushes
// every value of every possible group range through the actual quantizer
// and counts distinct (code, scale, offset) triples.
std::uint64_t brute_force_reachable_triples();

// --- end-to-end helpers -----------------------------------------------------

// FP32 weights -> bundle (level 1 + level 2 + requested layout).
QuantizedWeightBundle build_bundle(std::span<const float> w, std::uint32_t n, std::uint32_t k,
                                   std::uint32_t group_size, WeightLayout layout,
                                   const FragmentDescriptor& d = {});

// Reconstructed INT8 weights (the GEMM-side view of the bundle).
std::vector<std::int8_t> reconstruct_int8(const QuantizedWeightBundle& b);

}  // namespace lq
