#pragma once
// Analytic latency model for weight-quantized GEMM on a GPU-like machine.
//
// A weight tile of N_t x K_t elements at x bits each is loaded at the
// bandwidth-derived rate phi_bd(x) = bytes_per_s * 8 / x (elements/s), then
// dequantized on the scalar pipe (alpha ops per element) and multiplied on
// the tensor pipe (2 * min(M_t, M) ops per element; below the transition
// batch the MMA is issue-limited, not FLOP-limited). Per-iteration times use
// per-block rates (device rate / (num_sms * max_blocks_per_sm)); device
// totals use device rates with the batch dimension folded in:
//
//   T = ceil(M / M_t) * max( N*K / PHI_bd(x),
//                            alpha * N*K / PHI_cuda + 2*min(M_t,M)*N*K / PHI_tc )
//
// The max() captures a perfectly software-pipelined kernel: steady state
// hides the shorter of load and compute behind the longer. MemoryBound means
// the load term binds.
//
// Two closed-form diagnostics fall out:
//   transition batch  M* = PHI_tc * (x/8) / (2 * BW_bytes)   (regime flip)
//   alpha thresholds  alpha*_mem  = PHI_cuda / PHI_bd(x)
//                     alpha*_comp = PHI_cuda * 2*min(M_t,M) / PHI_tc
// i.e. how much dequant arithmetic per element the pipes can absorb before
// dequantization itself becomes the bottleneck.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lq/errors.hpp"
#include "lq/gemm.hpp"

namespace lq {

struct HardwareProfile {
    std::string name;
    double mem_bw_bytes_per_s = 0;
    double cuda_ops_per_s = 0;     // scalar pipe, device total
    double tc_int8_ops_per_s = 0;  // tensor pipe, INT8 accumulate
    double tc_fp16_ops_per_s = 0;  // tensor pipe, FP16 accumulate
    double num_sms = 0;
    double max_blocks_per_sm = 0;

    void validate() const;
    double mem_elements_per_s(int weight_bits) const {
        return mem_bw_bytes_per_s * 8.0 / weight_bits;
    }
    double tc_ops_per_s(int act_bits) const {
        return act_bits == 16 ? tc_fp16_ops_per_s : tc_int8_ops_per_s;
    }
    double blocks() const { return num_sms * max_blocks_per_sm; }
};

// key = value text, '#' comments, keys exactly: mem_bw_bytes_per_s,
// cuda_ops_per_s, tc_int8_ops_per_s, tc_fp16_ops_per_s, num_sms,
// max_blocks_per_sm, plus optional name. Unknown or missing keys are errors.
HardwareProfile parse_profile(std::istream& in);
HardwareProfile load_profile(const std::string& path);

struct CostQuery {
    std::uint64_t n = 0, k = 0;    // weight shape
    TileConfig tile;
    int weight_bits = 4;           // 4, 8 or 16
    int act_bits = 8;              // 8 or 16; selects the tensor pipe rate
    double alpha = 0;              // dequant scalar ops per weight element
    std::uint64_t batch = 1;       // M

    void validate() const;
};

enum class Regime { MemoryBound, ComputeBound };
const char* regime_name(Regime r);

// Single-iteration times at block-level rates (one tile step of the main
// loop). t_total folds in the software pipeline across k iterations:
// first iteration exposed, k-1 steady-state steps at max(load, compute).
double iter_load_time(const CostQuery& q, const HardwareProfile& p);
struct IterCompute {
    double t_dq = 0, t_mma = 0;
};
IterCompute iter_compute_time(const CostQuery& q, const HardwareProfile& p);
double iter_total_time(const CostQuery& q, const HardwareProfile& p);

struct CostBreakdown {
    double t_ld = 0, t_dq = 0, t_mma = 0;  // device-level, one batch band
    double total = 0;                      // ceil(M/M_t) bands
    Regime regime = Regime::MemoryBound;
};

CostBreakdown total_time(const CostQuery& q, const HardwareProfile& p);

// Batch size where load time equals MMA time (regime flip ignoring alpha).
double transition_batch(const HardwareProfile& p, int weight_bits, int act_bits);

// Largest alpha the memory-bound regime can hide.
double alpha_threshold_memory(const HardwareProfile& p, int weight_bits);
// Largest alpha the compute-bound regime can hide at effective batch
// min(M_t, M).
double alpha_threshold_compute(const HardwareProfile& p, int act_bits, double effective_m);

struct SweepRow {
    std::uint64_t m = 0;
    CostBreakdown cost;
};

std::vector<SweepRow> sweep_batch(CostQuery q, const HardwareProfile& p, std::uint64_t m_lo,
                                  std::uint64_t m_hi, std::uint64_t m_step = 1);

// CSV with header M,t_ld,t_dq,t_mma,total,regime.
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace lq
