#pragma once
// IEEE 754 binary16 <-> binary32 conversion. Storage-only: tensors may carry
// F16 payloads, but all arithmetic in this codebase happens in F32, so the
// only operations we need are bit-level widen and narrow (round-to-nearest-
// even on the way down).

#include <bit>
#include <cstdint>

namespace lq {

inline float f16_to_f32(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    const std::uint32_t man = h & 0x3FFu;

    std::uint32_t bits;
    if (exp == 0) {
        if (man == 0) {
            bits = sign;  // signed zero
        } else {
            // Subnormal: renormalize the mantissa.
            int e = -1;
            std::uint32_t m = man;
            do {
                ++e;
                m <<= 1;
            } while ((m & 0x400u) == 0);
            bits = sign | ((127 - 15 - e) << 23) | ((m & 0x3FFu) << 13);
        }
    } else if (exp == 0x1F) {
        bits = sign | 0x7F800000u | (man << 13);  // inf / nan
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (man << 13);
    }
    return std::bit_cast<float>(bits);
}

inline std::uint16_t f32_to_f16(float f) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
    const std::int32_t exp = static_cast<std::int32_t>((bits >> 23) & 0xFFu) - 127 + 15;
    std::uint32_t man = bits & 0x7FFFFFu;

    if (((bits >> 23) & 0xFFu) == 0xFFu) {
        // inf / nan; keep a nonzero mantissa bit for nan.
        return static_cast<std::uint16_t>(sign | 0x7C00u | (man ? 0x200u : 0));
    }
    if (exp >= 0x1F) return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow -> inf
    if (exp <= 0) {
        if (exp < -10) return sign;  // underflows to zero
        // Subnormal result: shift mantissa (with hidden bit) into place.
        man |= 0x800000u;
        const int shift = 14 - exp;
        std::uint32_t v = man >> shift;
        const std::uint32_t rem = man & ((1u << shift) - 1);
        const std::uint32_t half = 1u << (shift - 1);
        if (rem > half || (rem == half && (v & 1))) ++v;
        return static_cast<std::uint16_t>(sign | v);
    }
    // Normal result, round mantissa to nearest even on the 13 dropped bits.
    std::uint32_t v = (static_cast<std::uint32_t>(exp) << 10) | (man >> 13);
    const std::uint32_t rem = man & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (v & 1))) ++v;  // may carry into exp: correct
    return static_cast<std::uint16_t>(sign | v);
}

}  // namespace lq
