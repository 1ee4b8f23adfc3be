#include "lq/layout.hpp"

#include <array>
#include <span>

#include "lq/packed.hpp"

namespace lq {

void FragmentDescriptor::validate() const {
    const std::uint32_t slab = std::uint32_t(mma_m) * mma_k;
    const std::uint32_t per_group =
        std::uint32_t(warps_per_group) * threads_per_warp * elements_per_thread_per_mma;
    if (slab != per_group)
        throw ValidationError("fragment descriptor mismatch: mma_m*mma_k = " +
                              std::to_string(slab) + " but group covers " +
                              std::to_string(per_group) + " elements");
    if (dual_k_span != 2 * mma_k)
        throw ValidationError("dual_k_span must be 2*mma_k");
    if (warps_per_group == 0 || threads_per_warp == 0 || mma_m == 0 || mma_k == 0)
        throw ValidationError("fragment descriptor has a zero field");
}

std::vector<Coord> fragment_coords(std::uint32_t warp, std::uint32_t thread,
                                   std::uint32_t mma_index, const FragmentDescriptor& d) {
    d.validate();
    if (warp >= d.warps_per_group) throw ValidationError("warp index out of range");
    if (thread >= d.threads_per_warp) throw ValidationError("thread index out of range");
    std::vector<Coord> out;
    out.reserve(d.elements_per_thread_per_mma);
    for (std::uint32_t r = 0; r < 2; ++r)
        for (std::uint32_t b = 0; b < 2; ++b)
            for (std::uint32_t j = 0; j < 4; ++j)
                out.push_back({16 * warp + 8 * r + thread / 4,
                               d.mma_k * mma_index + 16 * b + 4 * (thread % 4) + j});
    return out;
}

PackedTile pack_dual_mma(const std::vector<std::uint8_t>& codes, std::uint32_t k_t,
                         const FragmentDescriptor& d) {
    d.validate();
    if (k_t == 0 || k_t % d.dual_k_span != 0)
        throw ValidationError("tile depth " + std::to_string(k_t) +
                              " is not a multiple of dual_k_span");
    if (codes.size() != std::size_t(d.mma_m) * k_t)
        throw ValidationError("code buffer size does not match 64 x k_t tile");

    PackedTile tile;
    tile.descriptor = d;
    tile.k_t = k_t;
    tile.bytes.reserve(std::size_t(d.mma_m) * k_t / 2);

    const std::uint32_t pairs = k_t / d.dual_k_span;
    for (std::uint32_t p = 0; p < pairs; ++p) {
        for (std::uint32_t w = 0; w < d.warps_per_group; ++w) {
            for (std::uint32_t t = 0; t < d.threads_per_warp; ++t) {
                // One record: 4 words = [even slab r0, even r1, odd r0, odd r1].
                for (std::uint32_t half = 0; half < 2; ++half) {
                    const auto coords = fragment_coords(w, t, 2 * p + half, d);
                    for (std::uint32_t r = 0; r < 2; ++r) {
                        std::array<std::uint8_t, 8> elems{};
                        for (std::uint32_t e = 0; e < 8; ++e) {
                            const Coord c = coords[8 * r + e];
                            elems[e] = codes[std::size_t(c.row) * k_t + c.col];
                        }
                        const RegisterWord word = pack_interleaved(elems);
                        for (int b = 0; b < 4; ++b)
                            tile.bytes.push_back(word.lane(b));
                    }
                }
            }
        }
    }
    return tile;
}

std::vector<std::uint8_t> unpack_dual_mma(const PackedTile& tile) {
    const FragmentDescriptor& d = tile.descriptor;
    d.validate();
    if (tile.k_t == 0 || tile.k_t % d.dual_k_span != 0)
        throw ValidationError("packed tile depth is not a multiple of dual_k_span");
    if (tile.bytes.size() != std::size_t(d.mma_m) * tile.k_t / 2)
        throw ValidationError("packed tile byte count does not match k_t");

    std::vector<std::uint8_t> codes(std::size_t(d.mma_m) * tile.k_t, 0);
    std::size_t off = 0;
    const std::uint32_t pairs = tile.k_t / d.dual_k_span;
    for (std::uint32_t p = 0; p < pairs; ++p) {
        for (std::uint32_t w = 0; w < d.warps_per_group; ++w) {
            for (std::uint32_t t = 0; t < d.threads_per_warp; ++t) {
                for (std::uint32_t half = 0; half < 2; ++half) {
                    const auto coords = fragment_coords(w, t, 2 * p + half, d);
                    for (std::uint32_t r = 0; r < 2; ++r) {
                        RegisterWord word{std::uint32_t(tile.bytes[off]) |
                                          std::uint32_t(tile.bytes[off + 1]) << 8 |
                                          std::uint32_t(tile.bytes[off + 2]) << 16 |
                                          std::uint32_t(tile.bytes[off + 3]) << 24};
                        off += 4;
                        InstructionCounter scratch;
                        const auto [lo, hi] = unpack_nibbles(word, scratch);
                        const auto elems = unpack_to_elements(lo, hi);
                        for (std::uint32_t e = 0; e < 8; ++e) {
                            const Coord c = coords[8 * r + e];
                            codes[std::size_t(c.row) * tile.k_t + c.col] = elems[e];
                        }
                    }
                }
            }
        }
    }
    return codes;
}

ConflictReport check_bank_conflicts(const std::vector<std::uint32_t>& thread_offsets,
                                    std::uint32_t banks, std::uint32_t bank_width,
                                    std::uint32_t phase_size, std::uint32_t bytes_per_access) {
    if (banks == 0 || bank_width == 0 || phase_size == 0)
        throw ValidationError("bank model parameters must be nonzero");
    ConflictReport report;
    for (std::size_t base = 0; base < thread_offsets.size(); base += phase_size) {
        std::vector<std::uint32_t> hits(banks, 0);
        const std::size_t end = std::min(base + phase_size, thread_offsets.size());
        for (std::size_t t = base; t < end; ++t) {
            const std::uint32_t first_bank = thread_offsets[t] / bank_width;
            const std::uint32_t touched = (bytes_per_access + bank_width - 1) / bank_width;
            for (std::uint32_t i = 0; i < touched; ++i)
                hits[(first_bank + i) % banks]++;
        }
        PhaseStats ps;
        for (std::uint32_t b = 0; b < banks; ++b) {
            if (hits[b] > 0) ps.distinct_banks++;
            ps.max_accesses_per_bank = std::max(ps.max_accesses_per_bank, hits[b]);
        }
        report.worst_way = std::max(report.worst_way, ps.max_accesses_per_bank);
        report.phases.push_back(ps);
    }
    return report;
}

ConflictReport check_bank_conflicts(const PackedTile& tile) {
    const std::uint32_t record_bytes =
        2u * tile.descriptor.elements_per_thread_per_mma / 2;  // 32 codes -> 16 bytes
    std::vector<std::uint32_t> offsets(tile.descriptor.threads_per_warp);
    for (std::uint32_t t = 0; t < offsets.size(); ++t) offsets[t] = record_bytes * t;
    return check_bank_conflicts(offsets);
}

}  // namespace lq
