#pragma once
// Deterministic tiled W4A8 GEMM reference.
//
//   Y[i][j] = (sum_l X_i8[i][l] * What_i8[j][l]) * channel_scale[j] * token_scale[i]
//
// Activations are quantized per token (symmetric, scale max|x|/127); weights
// arrive as a quantized bundle and are dequantized to INT8 inside the main
// loop, either through the wide scalar path or through the packed register
// path. Accumulation is exact 32-bit integer in a fixed order: ascending l
// within a k-tile, k-tiles ascending. Both engines therefore produce
// bit-identical accumulators, and results do not depend on tile shape.
//
// Not a performance kernel. This is the semantic reference the real kernels
// are validated against, so clarity and exactness win over speed.

#include <cstdint>
#include <span>
#include <vector>

#include "lq/bundle.hpp"
#include "lq/quant.hpp"

namespace lq {

struct GemmShape {
    std::uint32_t m = 0, n = 0, k = 0;
};

struct TileConfig {
    std::uint32_t m_t = 64, n_t = 64, k_t = 64;

    void validate(const QuantizedWeightBundle& b) const;
};

struct ActivationQuant {
    std::uint32_t m = 0, k = 0;
    std::vector<std::int8_t> values;   // m*k codes in [-127, 127]
    std::vector<float> token_scales;   // one per row
};

ActivationQuant quantize_activations_per_token(std::span<const float> x, std::uint32_t m,
                                               std::uint32_t k);

enum class Engine { Scalar, Packed };

// Integer accumulators, row-major m x n. Throws ValidationError when shapes
// disagree or when k * 127 * 127 >= 2^31 (worst-case partial sums would no
// longer fit 32 bits).
std::vector<std::int32_t> gemm_w4a8_accum(const ActivationQuant& act,
                                          const QuantizedWeightBundle& weights,
                                          const TileConfig& tile, Engine engine);

// Accumulators plus the scaling epilogue.
std::vector<float> gemm_w4a8(const ActivationQuant& act, const QuantizedWeightBundle& weights,
                             const TileConfig& tile, Engine engine);

// Independent oracle: naive triple loop over already-dequantized INT8
// weights, 64-bit accumulation, no tiling. Shares nothing with the engine
// above except the epilogue formula.
struct OracleResult {
    std::vector<std::int64_t> accum;
    std::vector<float> y;
};

OracleResult gemm_oracle(const ActivationQuant& act, std::span<const std::int8_t> w_i8,
                         std::span<const float> channel_scales, std::uint32_t n);

}  // namespace lq
