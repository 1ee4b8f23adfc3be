#include "lq/bundle.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace lq {

namespace {

constexpr char kMagic[4] = {'L', 'Q', 'W', 'B'};
constexpr std::uint16_t kVersion = 1;

void write_u16(std::ostream& o, std::uint16_t v, std::uint64_t& off) {
    std::uint8_t b[2] = {std::uint8_t(v & 0xFF), std::uint8_t(v >> 8)};
    o.write(reinterpret_cast<char*>(b), 2);
    if (!o) throw IoError("write failed", off);
    off += 2;
}

void write_u32(std::ostream& o, std::uint32_t v, std::uint64_t& off) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = std::uint8_t(v >> (8 * i));
    o.write(reinterpret_cast<char*>(b), 4);
    if (!o) throw IoError("write failed", off);
    off += 4;
}

void write_raw(std::ostream& o, const void* p, std::size_t n, std::uint64_t& off) {
    o.write(static_cast<const char*>(p), std::streamsize(n));
    if (!o) throw IoError("write failed", off);
    off += n;
}

void read_raw(std::istream& i, void* p, std::size_t n, std::uint64_t& off) {
    i.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(i.gcount()) != n) throw IoError("unexpected end of stream", off);
    off += n;
}

std::uint16_t read_u16(std::istream& i, std::uint64_t& off) {
    std::uint8_t b[2];
    read_raw(i, b, 2, off);
    return std::uint16_t(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& i, std::uint64_t& off) {
    std::uint8_t b[4];
    read_raw(i, b, 4, off);
    std::uint32_t v = 0;
    for (int j = 0; j < 4; ++j) v |= std::uint32_t(b[j]) << (8 * j);
    return v;
}

}  // namespace

std::uint8_t QuantizedWeightBundle::code_at(std::uint32_t row, std::uint32_t col) const {
    if (layout == WeightLayout::PlainRowMajor) {
        const std::uint64_t idx = std::uint64_t(row) * k + col;
        const std::uint8_t byte = packed_weights[idx / 2];
        return (idx % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
    }
    // Dual-MMA: invert the record addressing.
    const FragmentDescriptor& d = fragment;
    const std::uint32_t band = row / d.mma_m;
    const std::uint32_t r_in = row % d.mma_m;
    const std::uint32_t warp = r_in / 16;
    const std::uint32_t r = (r_in % 16) / 8;
    const std::uint32_t row_quarter = r_in % 8;  // = thread / 4
    const std::uint32_t pair = col / d.dual_k_span;
    const std::uint32_t col_in = col % d.dual_k_span;
    const std::uint32_t half = col_in / d.mma_k;
    const std::uint32_t c32 = col_in % d.mma_k;
    const std::uint32_t b = c32 / 16;
    const std::uint32_t thread = 4 * row_quarter + (c32 % 16) / 4;
    const std::uint32_t j = c32 % 4;

    const std::uint64_t band_bytes = std::uint64_t(d.mma_m) * k / 2;
    const std::uint64_t record =
        (std::uint64_t(pair) * d.warps_per_group + warp) * d.threads_per_warp + thread;
    const std::uint64_t byte_idx =
        band * band_bytes + record * 16 + (2 * half + r) * 4 + j;
    const std::uint8_t byte = packed_weights[byte_idx];
    return b == 0 ? (byte & 0x0F) : (byte >> 4);
}

void QuantizedWeightBundle::validate() const {
    if (n < 1 || k < 1) throw ValidationError("bundle dimensions must be >= 1");
    if (group_size < 1) throw ValidationError("group_size must be >= 1");
    if (k % group_size != 0)
        throw ValidationError("k = " + std::to_string(k) + " not divisible by group_size = " +
                              std::to_string(group_size));
    if (layout == WeightLayout::DualMmaPacked) {
        fragment.validate();
        if (n % fragment.mma_m != 0)
            throw ValidationError("dual-MMA layout needs n divisible by " +
                                  std::to_string(fragment.mma_m));
        if (k % fragment.dual_k_span != 0)
            throw ValidationError("dual-MMA layout needs k divisible by " +
                                  std::to_string(fragment.dual_k_span));
        if (group_size % fragment.dual_k_span != 0)
            throw ValidationError("dual-MMA layout needs group_size divisible by " +
                                  std::to_string(fragment.dual_k_span) +
                                  " so each record word pair stays within one group");
    }

    const std::uint64_t nk = std::uint64_t(n) * k;
    if (packed_weights.size() != (nk + 1) / 2)
        throw ValidationError("packed weight payload has wrong size");
    const std::uint64_t ng = std::uint64_t(n) * groups_per_row();
    if (group_scales.size() != ng || group_offsets.size() != ng)
        throw ValidationError("group parameter arrays have wrong size");
    if (channel_scales.size() != n) throw ValidationError("channel scale array has wrong size");

    for (std::uint64_t i = 0; i < ng; ++i) {
        const std::uint32_t row = std::uint32_t(i / groups_per_row());
        const std::uint32_t g = std::uint32_t(i % groups_per_row());
        if (group_scales[i] < 1 || group_scales[i] > 16)
            throw ValidationError("group scale " + std::to_string(int(group_scales[i])) +
                                  " out of [1,16] at row " + std::to_string(row) + " group " +
                                  std::to_string(g));
        if (group_offsets[i] < 9 || group_offsets[i] > 247)
            throw ValidationError("group offset " + std::to_string(int(group_offsets[i])) +
                                  " out of [9,247] at row " + std::to_string(row) + " group " +
                                  std::to_string(g));
    }
    for (std::uint32_t r = 0; r < n; ++r) {
        const float s = channel_scales[r];
        if (!(s > 0.0f) || !std::isfinite(s))
            throw ValidationError("channel scale at row " + std::to_string(r) +
                                  " must be positive and finite");
    }
}

void write_bundle(const QuantizedWeightBundle& b, std::ostream& out) {
    b.validate();
    std::uint64_t off = 0;
    write_raw(out, kMagic, 4, off);
    write_u16(out, kVersion, off);
    write_u32(out, b.n, off);
    write_u32(out, b.k, off);
    write_u32(out, b.group_size, off);
    const std::uint8_t layout = std::uint8_t(b.layout);
    write_raw(out, &layout, 1, off);
    if (b.layout == WeightLayout::DualMmaPacked) {
        write_raw(out, &b.fragment.warps_per_group, 1, off);
        write_raw(out, &b.fragment.threads_per_warp, 1, off);
        write_u16(out, b.fragment.mma_m, off);
        write_u16(out, b.fragment.mma_k, off);
        write_u16(out, b.fragment.elements_per_thread_per_mma, off);
        write_u16(out, b.fragment.dual_k_span, off);
    }
    write_raw(out, b.packed_weights.data(), b.packed_weights.size(), off);
    write_raw(out, b.group_scales.data(), b.group_scales.size(), off);
    write_raw(out, b.group_offsets.data(), b.group_offsets.size(), off);
    for (float s : b.channel_scales) {
        std::uint32_t bits;
        std::memcpy(&bits, &s, 4);
        write_u32(out, bits, off);
    }
    out.flush();
    if (!out) throw IoError("flush failed", off);
}

QuantizedWeightBundle read_bundle(std::istream& in) {
    std::uint64_t off = 0;
    char magic[4];
    read_raw(in, magic, 4, off);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw ValidationError("bad magic (not an LQWB file)");
    const std::uint16_t ver = read_u16(in, off);
    if (ver != kVersion) throw ValidationError("unsupported version " + std::to_string(ver));

    QuantizedWeightBundle b;
    b.n = read_u32(in, off);
    b.k = read_u32(in, off);
    b.group_size = read_u32(in, off);
    std::uint8_t layout;
    read_raw(in, &layout, 1, off);
    if (layout > 1) throw ValidationError("unknown layout flag " + std::to_string(layout));
    b.layout = WeightLayout(layout);
    if (b.layout == WeightLayout::DualMmaPacked) {
        read_raw(in, &b.fragment.warps_per_group, 1, off);
        read_raw(in, &b.fragment.threads_per_warp, 1, off);
        b.fragment.mma_m = read_u16(in, off);
        b.fragment.mma_k = read_u16(in, off);
        b.fragment.elements_per_thread_per_mma = read_u16(in, off);
        b.fragment.dual_k_span = read_u16(in, off);
    }
    if (b.n < 1 || b.k < 1) throw ValidationError("bundle dimensions must be >= 1");
    if (b.group_size < 1 || b.k % b.group_size != 0)
        throw ValidationError("k not divisible by group_size");

    const std::uint64_t nk = std::uint64_t(b.n) * b.k;
    b.packed_weights.resize((nk + 1) / 2);
    read_raw(in, b.packed_weights.data(), b.packed_weights.size(), off);
    const std::uint64_t ng = std::uint64_t(b.n) * b.groups_per_row();
    b.group_scales.resize(ng);
    read_raw(in, b.group_scales.data(), ng, off);
    b.group_offsets.resize(ng);
    read_raw(in, b.group_offsets.data(), ng, off);
    b.channel_scales.resize(b.n);
    for (std::uint32_t i = 0; i < b.n; ++i) {
        const std::uint32_t bits = read_u32(in, off);
        std::memcpy(&b.channel_scales[i], &bits, 4);
    }
    in.peek();
    if (!in.eof()) throw ValidationError("trailing bytes after payload");
    b.validate();
    return b;
}

void save_bundle(const QuantizedWeightBundle& b, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing", 0);
    write_bundle(b, f);
}

QuantizedWeightBundle load_bundle(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path, 0);
    return read_bundle(f);
}

std::vector<std::uint8_t> logical_codes(const QuantizedWeightBundle& b) {
    std::vector<std::uint8_t> codes(std::uint64_t(b.n) * b.k);
    if (b.layout == WeightLayout::PlainRowMajor) {
        for (std::uint64_t i = 0; i < codes.size(); ++i) {
            const std::uint8_t byte = b.packed_weights[i / 2];
            codes[i] = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
        }
        return codes;
    }
    const std::uint32_t band_rows = b.fragment.mma_m;
    const std::uint64_t band_bytes = std::uint64_t(band_rows) * b.k / 2;
    for (std::uint32_t band = 0; band < b.n / band_rows; ++band) {
        PackedTile tile;
        tile.descriptor = b.fragment;
        tile.k_t = b.k;
        tile.bytes.assign(b.packed_weights.begin() + band * band_bytes,
                          b.packed_weights.begin() + (band + 1) * band_bytes);
        const auto band_codes = unpack_dual_mma(tile);
        std::memcpy(codes.data() + std::uint64_t(band) * band_rows * b.k, band_codes.data(),
                    band_codes.size());
    }
    return codes;
}

QuantizedWeightBundle to_dual_mma(const QuantizedWeightBundle& plain,
                                  const FragmentDescriptor& d) {
    plain.validate();
    if (plain.layout == WeightLayout::DualMmaPacked) return plain;
    QuantizedWeightBundle out = plain;
    out.layout = WeightLayout::DualMmaPacked;
    out.fragment = d;
    const auto codes = logical_codes(plain);
    out.packed_weights.clear();
    out.packed_weights.reserve(codes.size() / 2);
    const std::uint32_t band_rows = d.mma_m;
    if (plain.n % band_rows != 0)
        throw ValidationError("dual-MMA layout needs n divisible by " + std::to_string(band_rows));
    for (std::uint32_t band = 0; band < plain.n / band_rows; ++band) {
        std::vector<std::uint8_t> band_codes(
            codes.begin() + std::uint64_t(band) * band_rows * plain.k,
            codes.begin() + std::uint64_t(band + 1) * band_rows * plain.k);
        const PackedTile tile = pack_dual_mma(band_codes, plain.k, d);
        out.packed_weights.insert(out.packed_weights.end(), tile.bytes.begin(),
                                  tile.bytes.end());
    }
    out.validate();
    return out;
}

QuantizedWeightBundle to_plain(const QuantizedWeightBundle& packed) {
    packed.validate();
    if (packed.layout == WeightLayout::PlainRowMajor) return packed;
    QuantizedWeightBundle out = packed;
    out.layout = WeightLayout::PlainRowMajor;
    out.fragment = FragmentDescriptor{};
    const auto codes = logical_codes(packed);
    out.packed_weights.assign((codes.size() + 1) / 2, 0);
    for (std::uint64_t i = 0; i < codes.size(); ++i) {
        if (i % 2 == 0)
            out.packed_weights[i / 2] |= codes[i] & 0x0F;
        else
            out.packed_weights[i / 2] |= std::uint8_t(codes[i] << 4);
    }
    out.validate();
    return out;
}

}  // namespace lq
