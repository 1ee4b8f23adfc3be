#include "lq/packed.hpp"

#include <string>

namespace lq {

namespace {
constexpr std::uint32_t kNibbleMask = 0x0F0F0F0F;
constexpr std::uint32_t kSignMask = 0x80808080;
}  // namespace

RegisterWord pack_interleaved(std::span<const std::uint8_t, 8> elems) {
    std::uint32_t v = 0;
    for (int j = 0; j < 4; ++j) {
        const std::uint32_t byte = (elems[j] & 0x0Fu) | ((elems[j + 4] & 0x0Fu) << 4);
        v |= byte << (8 * j);
    }
    return {v};
}

std::array<std::uint8_t, 8> unpack_to_elements(RegisterWord lo, RegisterWord hi) {
    std::array<std::uint8_t, 8> e{};
    for (int j = 0; j < 4; ++j) {
        e[j] = lo.lane(j);
        e[j + 4] = hi.lane(j);
    }
    return e;
}

std::pair<RegisterWord, RegisterWord> unpack_nibbles(RegisterWord w, InstructionCounter& c) {
    const RegisterWord lo{w.value & kNibbleMask};
    c.and_ops++;
    const std::uint32_t shifted = w.value >> 4;
    c.shr_ops++;
    const RegisterWord hi{shifted & kNibbleMask};
    c.and_ops++;
    return {lo, hi};
}

RegisterWord lane_madd(RegisterWord w, std::uint8_t s, RegisterWord a_word,
                       InstructionCounter& c, LaneCheck check) {
    if (check == LaneCheck::Checked) {
        for (int i = 0; i < 4; ++i) {
            const unsigned v = unsigned(w.lane(i)) * s + a_word.lane(i);
            if (v > 255)
                throw VerificationError("lane " + std::to_string(i) + " overflow: " +
                                        std::to_string(int(w.lane(i))) + "*" + std::to_string(int(s)) +
                                        "+" + std::to_string(int(a_word.lane(i))) + " = " +
                                        std::to_string(v) + " > 255");
        }
    }
    // The real instruction: one 32-bit integer multiply-add, carries and all.
    const RegisterWord r{w.value * std::uint32_t(s) + a_word.value};
    c.imad_ops++;
    return r;
}

RegisterWord lane_xor_msb(RegisterWord w, InstructionCounter& c) {
    c.xor_ops++;
    return {w.value ^ kSignMask};
}

std::pair<RegisterWord, RegisterWord> dequant_word(RegisterWord w, std::uint8_t s,
                                                   std::uint8_t a, InstructionCounter& c,
                                                   LaneCheck check) {
    const auto [lo, hi] = unpack_nibbles(w, c);
    const RegisterWord a_word = RegisterWord::splat(a);
    const RegisterWord lo_out = lane_xor_msb(lane_madd(lo, s, a_word, c, check), c);
    const RegisterWord hi_out = lane_xor_msb(lane_madd(hi, s, a_word, c, check), c);
    return {lo_out, hi_out};
}

DequantPackedResult dequant_packed(const std::array<RegisterWord, 4>& frag, std::uint8_t s,
                                   std::uint8_t a, LaneCheck check) {
    DequantPackedResult r;
    for (int i = 0; i < 4; ++i) {
        const auto [lo, hi] = dequant_word(frag[i], s, a, r.counter, check);
        r.words[2 * i] = lo;
        r.words[2 * i + 1] = hi;
    }
    return r;
}

}  // namespace lq
