#include "lq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace lq {

namespace {
constexpr int kL1Range = 119;  // level-1 protective clamp
}

FirstLevelResult quantize_first_level(std::span<const float> w, std::uint32_t n,
                                      std::uint32_t k) {
    if (n < 1 || k < 1) throw ValidationError("weight matrix dimensions must be >= 1");
    if (w.size() != std::size_t(n) * k)
        throw ValidationError("weight buffer size does not match n*k");

    FirstLevelResult r;
    r.n = n;
    r.k = k;
    r.q.resize(w.size());
    r.channel_scales.resize(n);

    for (std::uint32_t i = 0; i < n; ++i) {
        float amax = 0.0f;
        for (std::uint32_t j = 0; j < k; ++j) {
            const float v = w[std::size_t(i) * k + j];
            if (!std::isfinite(v))
                throw ValidationError("non-finite weight at (" + std::to_string(i) + ", " +
                                      std::to_string(j) + ")");
            amax = std::max(amax, std::fabs(v));
        }
        const float s = amax == 0.0f ? 1.0f : amax / kL1Range;
        r.channel_scales[i] = s;
        for (std::uint32_t j = 0; j < k; ++j) {
            const int q = round_half_away(double(w[std::size_t(i) * k + j]) / s);
            r.q[std::size_t(i) * k + j] =
                std::int8_t(std::clamp(q, -kL1Range, kL1Range));
        }
    }
    return r;
}

namespace {

GroupQuantParams group_params(int mn, int mx) {
    const int span = mx - mn;
    const int s = std::max(1, round_half_away(double(span) / 15.0));
    GroupQuantParams p;
    p.scale = std::uint8_t(s);
    p.group_min = std::int8_t(mn);
    p.offset = std::uint8_t(128 + mn);
    return p;
}

std::uint8_t encode(int v, int mn, int s) {
    return std::uint8_t(std::clamp(round_half_away(double(v - mn) / s), 0, 15));
}

}  // namespace

SecondLevelResult quantize_second_level(std::span<const std::int8_t> q, std::uint32_t n,
                                        std::uint32_t k, std::uint32_t group_size) {
    if (n < 1 || k < 1) throw ValidationError("matrix dimensions must be >= 1");
    if (group_size < 1) throw ValidationError("group_size must be >= 1");
    if (k % group_size != 0)
        throw ValidationError("k = " + std::to_string(k) + " not divisible by group_size = " +
                              std::to_string(group_size));
    if (q.size() != std::size_t(n) * k)
        throw ValidationError("code buffer size does not match n*k");

    SecondLevelResult r;
    r.n = n;
    r.k = k;
    r.group_size = group_size;
    r.codes.resize(q.size());
    const std::uint32_t gpr = k / group_size;
    r.groups.resize(std::size_t(n) * gpr);

    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t g = 0; g < gpr; ++g) {
            const std::size_t base = std::size_t(i) * k + std::size_t(g) * group_size;
            int mn = q[base], mx = q[base];
            for (std::uint32_t j = 1; j < group_size; ++j) {
                const int v = q[base + j];
                if (v < -kL1Range || v > kL1Range)
                    throw ValidationError("level-1 code " + std::to_string(v) +
                                          " outside [-119,119] at row " + std::to_string(i));
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            if (q[base] < -kL1Range || q[base] > kL1Range)
                throw ValidationError("level-1 code outside [-119,119] at row " +
                                      std::to_string(i));
            const GroupQuantParams p = group_params(mn, mx);
            r.groups[std::size_t(i) * gpr + g] = p;
            for (std::uint32_t j = 0; j < group_size; ++j)
                r.codes[base + j] = encode(q[base + j], mn, p.scale);
        }
    }
    return r;
}

std::int8_t dequantize_scalar(std::uint8_t code, const GroupQuantParams& p) {
    const int v = int(code) * int(p.scale) + int(p.group_min);
    return std::int8_t(v);  // exact for reachable params; mod-256 otherwise
}

std::uint8_t dequantize_lane(std::uint8_t code, std::uint8_t s, std::uint8_t a,
                             LaneMode mode) {
    if (mode == LaneMode::Checked && lane_overflows(code, s, a))
        throw VerificationError("lane overflow: " + std::to_string(int(code)) + "*" +
                                std::to_string(int(s)) + "+" + std::to_string(int(a)) +
                                " > 255");
    const std::uint8_t biased = std::uint8_t(std::uint8_t(code * s) + a);
    return std::uint8_t(biased ^ 0x80u);
}

bool lane_overflows(std::uint8_t code, std::uint8_t s, std::uint8_t a) {
    return int(code) * int(s) + int(a) > 255;
}

float epilogue_dequantize(std::int64_t acc, float channel_scale, float token_scale) {
    return float(double(acc) * double(channel_scale) * double(token_scale));
}

// --- overflow verification --------------------------------------------------

namespace {

// Highest code the encoder can emit for a group spanning [mn, mx]: realized
// at v = mx, before the [0,15] clamp.
int max_code_for_range(int mn, int mx, int s) {
    return std::min(15, round_half_away(double(mx - mn) / s));
}

}  // namespace

OverflowReport verify_overflow_free(bool exhaustive) {
    OverflowReport rep;

    for (int mn = -kL1Range; mn <= kL1Range; ++mn) {
        // For this offset, the largest code each scale can pair with, over
        // all spans mx - mn the range allows. Distinct ranges often share
        // (scale, offset), so the reachable count must deduplicate.
        int max_code_per_scale[17];
        std::fill(std::begin(max_code_per_scale), std::end(max_code_per_scale), -1);

        for (int mx = mn; mx <= kL1Range; ++mx) {
            rep.group_ranges_checked++;
            const GroupQuantParams p = group_params(mn, mx);
            // Chain bound: worst biased value is bounded by max(q) + 8 + 128.
            const int qmax = max_code_for_range(mn, mx, p.scale);
            const int worst = qmax * int(p.scale) + int(p.offset);
            if (mx + 8 + 128 > 255 || worst > mx + 8 + 128) rep.chain_bound_failures++;
            max_code_per_scale[p.scale] = std::max(max_code_per_scale[p.scale], qmax);
        }

        const std::uint8_t offset = group_params(mn, mn).offset;
        for (int s = 1; s <= 16; ++s) {
            if (max_code_per_scale[s] < 0) continue;
            // Every code in [0, max] is realizable: (v - mn)/s steps by
            // 1/s <= 1 as v walks the range, so rounded codes skip nothing.
            rep.reachable_triples += std::uint64_t(max_code_per_scale[s]) + 1;
            for (int c = 0; c <= max_code_per_scale[s]; ++c) {
                const int v = c * s + int(offset);
                if (v > 255)
                    rep.violations.push_back({std::uint8_t(c), std::uint8_t(s), offset, v});
            }
        }
    }

    if (exhaustive) {
        for (int c = 0; c <= 15; ++c)
            for (int s = 1; s <= 16; ++s)
                for (int a = 9; a <= 247; ++a) {
                    rep.box_points_checked++;
                    if (c * s + a > 255) rep.box_points_overflowing++;
                }
    }
    return rep;
}

std::uint64_t brute_force_reachable_triples() {
    // Count distinct (code, scale, offset) triples by actually quantizing
    // every integer value of every possible group range. Distinctness is per
    // (scale, offset, code); ranges sharing parameters collapse.
    std::set<std::tuple<int, int, int>> seen;
    for (int mn = -kL1Range; mn <= kL1Range; ++mn) {
        for (int mx = mn; mx <= kL1Range; ++mx) {
            const GroupQuantParams p = group_params(mn, mx);
            for (int v = mn; v <= mx; ++v)
                seen.insert({encode(v, mn, p.scale), p.scale, p.offset});
        }
    }
    return seen.size();
}

// --- end-to-end helpers -----------------------------------------------------

QuantizedWeightBundle build_bundle(std::span<const float> w, std::uint32_t n, std::uint32_t k,
                                   std::uint32_t group_size, WeightLayout layout,
                                   const FragmentDescriptor& d) {
    const FirstLevelResult l1 = quantize_first_level(w, n, k);
    const SecondLevelResult l2 = quantize_second_level(l1.q, n, k, group_size);

    QuantizedWeightBundle b;
    b.n = n;
    b.k = k;
    b.group_size = group_size;
    b.layout = WeightLayout::PlainRowMajor;
    b.channel_scales = l1.channel_scales;
    const std::uint32_t gpr = k / group_size;
    b.group_scales.resize(std::size_t(n) * gpr);
    b.group_offsets.resize(std::size_t(n) * gpr);
    for (std::size_t i = 0; i < l2.groups.size(); ++i) {
        b.group_scales[i] = l2.groups[i].scale;
        b.group_offsets[i] = l2.groups[i].offset;
    }
    b.packed_weights.assign((l2.codes.size() + 1) / 2, 0);
    for (std::uint64_t i = 0; i < l2.codes.size(); ++i) {
        if (i % 2 == 0)
            b.packed_weights[i / 2] |= l2.codes[i] & 0x0F;
        else
            b.packed_weights[i / 2] |= std::uint8_t(l2.codes[i] << 4);
    }
    b.validate();
    if (layout == WeightLayout::DualMmaPacked) return to_dual_mma(b, d);
    return b;
}

std::vector<std::int8_t> reconstruct_int8(const QuantizedWeightBundle& b) {
    b.validate();
    const auto codes = logical_codes(b);
    std::vector<std::int8_t> out(codes.size());
    const std::uint32_t gpr = b.groups_per_row();
    for (std::uint32_t i = 0; i < b.n; ++i) {
        for (std::uint32_t g = 0; g < gpr; ++g) {
            GroupQuantParams p;
            p.scale = b.scale_of(i, g);
            p.offset = b.offset_of(i, g);
            p.group_min = std::int8_t(int(p.offset) - 128);
            const std::size_t base = std::size_t(i) * b.k + std::size_t(g) * b.group_size;
            for (std::uint32_t j = 0; j < b.group_size; ++j)
                out[base + j] = dequantize_scalar(codes[base + j], p);
        }
    }
    return out;
}

}  // namespace lq
