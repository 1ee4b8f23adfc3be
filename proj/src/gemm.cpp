#include "lq/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lq/packed.hpp"

namespace lq {

void TileConfig::validate(const QuantizedWeightBundle& b) const {
    if (m_t < 1 || n_t < 1 || k_t < 1) throw ValidationError("tile extents must be >= 1");
    if (b.layout == WeightLayout::DualMmaPacked && k_t % b.fragment.dual_k_span != 0)
        throw ValidationError("k_t must be a multiple of " +
                              std::to_string(b.fragment.dual_k_span) +
                              " when consuming the dual-MMA layout");
}

ActivationQuant quantize_activations_per_token(std::span<const float> x, std::uint32_t m,
                                               std::uint32_t k) {
    if (m < 1 || k < 1) throw ValidationError("activation dimensions must be >= 1");
    if (x.size() != std::size_t(m) * k)
        throw ValidationError("activation buffer size does not match m*k");

    ActivationQuant a;
    a.m = m;
    a.k = k;
    a.values.resize(x.size());
    a.token_scales.resize(m);
    for (std::uint32_t i = 0; i < m; ++i) {
        float amax = 0.0f;
        for (std::uint32_t l = 0; l < k; ++l) {
            const float v = x[std::size_t(i) * k + l];
            if (!std::isfinite(v))
                throw ValidationError("non-finite activation at (" + std::to_string(i) + ", " +
                                      std::to_string(l) + ")");
            amax = std::max(amax, std::fabs(v));
        }
        const float s = amax == 0.0f ? 1.0f : amax / 127.0f;
        a.token_scales[i] = s;
        for (std::uint32_t l = 0; l < k; ++l) {
            const int q = round_half_away(double(x[std::size_t(i) * k + l]) / s);
            a.values[std::size_t(i) * k + l] = std::int8_t(std::clamp(q, -127, 127));
        }
    }
    return a;
}

namespace {

// Worst-case |partial sum| is k * 127 * 127 regardless of summation order,
// so this single check covers every tile configuration.
void check_accumulator_range(std::uint32_t k) {
    if (std::int64_t(k) * 127 * 127 >= (std::int64_t(1) << 31))
        throw ValidationError("k = " + std::to_string(k) +
                              " risks 32-bit accumulator overflow (k*127*127 >= 2^31)");
}

struct GroupParamView {
    const QuantizedWeightBundle& b;
    GroupQuantParams at(std::uint32_t row, std::uint32_t col) const {
        GroupQuantParams p;
        p.scale = b.scale_of(row, col / b.group_size);
        p.offset = b.offset_of(row, col / b.group_size);
        p.group_min = std::int8_t(int(p.offset) - 128);
        return p;
    }
};

// Scalar route: wide-arithmetic dequant of the requested weight region into
// the row-major scratch (rows x cols at origin (row0, col0)).
void decode_region_scalar(const std::vector<std::uint8_t>& codes, const GroupParamView& params,
                          std::uint32_t k, std::uint32_t row0, std::uint32_t rows,
                          std::uint32_t col0, std::uint32_t cols, std::int8_t* out) {
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c)
            out[std::size_t(r) * cols + c] =
                dequantize_scalar(codes[std::size_t(row0 + r) * k + col0 + c],
                                  params.at(row0 + r, col0 + c));
}

// Packed route: walk the record stream of every 64-row band intersecting the
// region and run the register-level dequant sequence. The region must be
// band-aligned in rows and pair-aligned in columns; callers arrange that.
void decode_region_packed(const QuantizedWeightBundle& dual, const GroupParamView& params,
                          std::uint32_t band0, std::uint32_t bands, std::uint32_t col0,
                          std::uint32_t cols, std::int8_t* out) {
    const FragmentDescriptor& d = dual.fragment;
    const std::uint32_t span = d.dual_k_span;
    const std::uint64_t band_bytes = std::uint64_t(d.mma_m) * dual.k / 2;
    const std::uint32_t pair0 = col0 / span;
    const std::uint32_t pairs = cols / span;

    for (std::uint32_t bi = 0; bi < bands; ++bi) {
        const std::uint32_t band = band0 + bi;
        const std::uint8_t* stream = dual.packed_weights.data() + band * band_bytes;
        for (std::uint32_t p = pair0; p < pair0 + pairs; ++p) {
            for (std::uint32_t w = 0; w < d.warps_per_group; ++w) {
                for (std::uint32_t t = 0; t < d.threads_per_warp; ++t) {
                    const std::uint8_t* rec =
                        stream + ((std::uint64_t(p) * d.warps_per_group + w) * d.threads_per_warp +
                                  t) * 16;
                    const std::uint32_t row_a = band * d.mma_m + 16 * w + t / 4;
                    const std::uint32_t row_b = row_a + 8;
                    const std::uint32_t col_base = p * span + 4 * (t % 4);
                    const GroupQuantParams pa = params.at(row_a, p * span);
                    const GroupQuantParams pb = params.at(row_b, p * span);

                    InstructionCounter c;
                    for (std::uint32_t word_i = 0; word_i < 4; ++word_i) {
                        RegisterWord word{std::uint32_t(rec[4 * word_i]) |
                                          std::uint32_t(rec[4 * word_i + 1]) << 8 |
                                          std::uint32_t(rec[4 * word_i + 2]) << 16 |
                                          std::uint32_t(rec[4 * word_i + 3]) << 24};
                        const bool odd_slab = word_i >= 2;
                        const bool upper_row = word_i % 2 == 1;
                        const GroupQuantParams& gp = upper_row ? pb : pa;
                        const auto [lo, hi] = dequant_word(word, gp.scale, gp.offset, c);
                        const std::uint32_t row = upper_row ? row_b : row_a;
                        const std::uint32_t col =
                            col_base + (odd_slab ? d.mma_k : 0);
                        const std::uint32_t out_row = row - band0 * d.mma_m;
                        for (int j = 0; j < 4; ++j) {
                            out[std::size_t(out_row) * cols + (col + j - col0)] =
                                std::int8_t(lo.lane(j));
                            out[std::size_t(out_row) * cols + (col + 16 + j - col0)] =
                                std::int8_t(hi.lane(j));
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

std::vector<std::int32_t> gemm_w4a8_accum(const ActivationQuant& act,
                                          const QuantizedWeightBundle& weights,
                                          const TileConfig& tile, Engine engine) {
    weights.validate();
    tile.validate(weights);
    if (act.k != weights.k)
        throw ValidationError("activation depth " + std::to_string(act.k) +
                              " does not match weight depth " + std::to_string(weights.k));
    check_accumulator_range(act.k);

    const std::uint32_t m = act.m, n = weights.n, k = weights.k;

    // Engine-specific weight view, prepared once.
    const QuantizedWeightBundle* source = &weights;
    QuantizedWeightBundle dual_storage;
    std::vector<std::uint8_t> codes;
    if (engine == Engine::Packed) {
        if (weights.layout != WeightLayout::DualMmaPacked) {
            dual_storage = to_dual_mma(weights);
            source = &dual_storage;
        }
        if (tile.k_t % source->fragment.dual_k_span != 0)
            throw ValidationError("k_t must be a multiple of " +
                                  std::to_string(source->fragment.dual_k_span) +
                                  " for the packed engine");
    } else {
        codes = logical_codes(weights);
    }
    const GroupParamView params{*source};

    std::vector<std::int32_t> acc(std::size_t(m) * n, 0);
    std::vector<std::int8_t> what;  // decoded weight scratch, per (j, k) tile

    for (std::uint32_t k0 = 0; k0 < k; k0 += tile.k_t) {
        const std::uint32_t kt = std::min(tile.k_t, k - k0);
        for (std::uint32_t j0 = 0; j0 < n; j0 += tile.n_t) {
            const std::uint32_t nt = std::min(tile.n_t, n - j0);

            if (engine == Engine::Scalar) {
                what.resize(std::size_t(nt) * kt);
                decode_region_scalar(codes, params, k, j0, nt, k0, kt, what.data());
            } else {
                // Decode the covering 64-row bands, then view the j-range.
                const std::uint32_t band_rows = source->fragment.mma_m;
                const std::uint32_t band0 = j0 / band_rows;
                const std::uint32_t band1 = (j0 + nt - 1) / band_rows;
                what.resize(std::size_t(band1 - band0 + 1) * band_rows * kt);
                decode_region_packed(*source, params, band0, band1 - band0 + 1, k0, kt,
                                     what.data());
            }

            // Row j0+j lives at scratch row j (scalar) or at its offset from
            // the first decoded band (packed).
            const std::uint32_t scratch_row0 =
                engine == Engine::Scalar ? 0 : j0 % source->fragment.mma_m;

            for (std::uint32_t i0 = 0; i0 < m; i0 += tile.m_t) {
                const std::uint32_t mt = std::min(tile.m_t, m - i0);
                for (std::uint32_t i = 0; i < mt; ++i) {
                    const std::int8_t* xrow = act.values.data() + std::size_t(i0 + i) * k + k0;
                    for (std::uint32_t j = 0; j < nt; ++j) {
                        const std::int8_t* wrow =
                            what.data() + std::size_t(scratch_row0 + j) * kt;
                        std::int32_t sum = 0;
                        for (std::uint32_t l = 0; l < kt; ++l)
                            sum += std::int32_t(xrow[l]) * std::int32_t(wrow[l]);
                        acc[std::size_t(i0 + i) * n + (j0 + j)] += sum;
                    }
                }
            }
        }
    }
    return acc;
}

std::vector<float> gemm_w4a8(const ActivationQuant& act, const QuantizedWeightBundle& weights,
                             const TileConfig& tile, Engine engine) {
    const auto acc = gemm_w4a8_accum(act, weights, tile, engine);
    std::vector<float> y(acc.size());
    for (std::uint32_t i = 0; i < act.m; ++i)
        for (std::uint32_t j = 0; j < weights.n; ++j)
            y[std::size_t(i) * weights.n + j] =
                epilogue_dequantize(acc[std::size_t(i) * weights.n + j],
                                    weights.channel_scales[j], act.token_scales[i]);
    return y;
}

OracleResult gemm_oracle(const ActivationQuant& act, std::span<const std::int8_t> w_i8,
                         std::span<const float> channel_scales, std::uint32_t n) {
    if (w_i8.size() != std::size_t(n) * act.k)
        throw ValidationError("oracle weight buffer size does not match n*k");
    OracleResult r;
    r.accum.assign(std::size_t(act.m) * n, 0);
    r.y.resize(r.accum.size());
    for (std::uint32_t i = 0; i < act.m; ++i)
        for (std::uint32_t j = 0; j < n; ++j) {
            std::int64_t acc = 0;
            for (std::uint32_t l = 0; l < act.k; ++l)
                acc += std::int64_t(act.values[std::size_t(i) * act.k + l]) *
                       std::int64_t(w_i8[std::size_t(j) * act.k + l]);
            r.accum[std::size_t(i) * n + j] = acc;
            r.y[std::size_t(i) * n + j] =
                epilogue_dequantize(acc, channel_scales[j], act.token_scales[i]);
        }
    return r;
}

}  // namespace lq
