#pragma once
// Deterministic discrete-event simulation of two software pipeline
// organizations for a dequantize-then-multiply main loop. Three unit-capacity
// resources model the hardware: the async copy engine, the scalar (CUDA
// core) pipe and the tensor core pipe. k_iters weight tiles flow through
// smem_stages staging buffers.
//
// ExCP (explicit cross-warpgroup pipeline): three specialized warp groups.
//   Load WG:    stage acquire -> copy unit for t_ld
//   Dequant WG: scalar unit for t_dq + roundtrip_cost (the dequantized tile
//               takes a round trip through shared memory), then a barrier
//               costing sync_cost before the MMA WG may start
//   MMA WG:     tensor unit for t_mma; the stage frees only here
//
// ImFP (implicit fused pipeline): one Load WG plus num_compute_wgs identical
// compute WGs. Each loaded tile splits into tasks_per_tile tasks on a FIFO
// queue; a compute WG pops a task, dequantizes (scalar unit, t_dq /
// tasks_per_tile) straight into registers and immediately runs its MMA slice
// (tensor unit, t_mma / tasks_per_tile). No round trip, no barrier; the
// stage frees once the tile's last task finishes its dequant phase, since
// after that the weights live in register files.
//
// Everything is exactly deterministic: FIFO everywhere, ties broken by WG
// index. Optional jitter scales each tile's durations by a seeded uniform
// factor to exercise robustness, off by default.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lq/errors.hpp"

namespace lq {

struct SimConfig {
    std::uint64_t k_iters = 1;
    double t_ld = 1.0;
    double t_dq = 1.0;
    double t_mma = 1.0;
    int num_compute_wgs = 2;   // ImFP only
    int smem_stages = 3;
    double sync_cost = 0.0;       // ExCP only
    double roundtrip_cost = 0.0;  // ExCP only
    int tasks_per_tile = 2;       // ImFP only
    std::uint64_t seed = 0;
    double jitter = 0.0;          // 0 disables; else relative half-width

    void validate() const;
};

enum class SimUnit { Copy = 0, Scalar = 1, Tensor = 2 };
const char* unit_name(SimUnit u);

struct TraceEvent {
    double time = 0;
    SimUnit unit = SimUnit::Copy;
    std::string wg;      // "load", "dequant", "mma", "compute0", ...
    std::string event;   // e.g. "load_start", "dequant_end", "barrier"
    std::uint64_t tile = 0;
    int task = -1;       // ImFP task index within tile, -1 otherwise
};

struct UnitStats {
    double busy = 0;
    double bubble = 0;  // makespan - busy
};

struct WaitStats {
    double on_input = 0;    // upstream data not ready
    double on_buffer = 0;   // no free staging buffer
    double on_barrier = 0;  // ExCP sync_cost intervals
    double on_unit = 0;     // ready but the unit was busy (ImFP contention)
};

struct SimReport {
    std::string pipeline;  // "excp" or "imfp"
    double makespan = 0;
    UnitStats units[3];    // indexed by SimUnit
    WaitStats waits;       // summed over WGs
    int max_stages_in_use = 0;
    std::vector<TraceEvent> trace;
};

SimReport simulate_excp(const SimConfig& cfg);
SimReport simulate_imfp(const SimConfig& cfg);

struct CompareSummary {
    SimReport excp;
    SimReport imfp;
    double makespan_ratio = 0;  // excp / imfp
};

CompareSummary compare_pipelines(const SimConfig& cfg);

// key = value text in the same style as hardware profiles; unknown keys are
// errors, missing keys keep their defaults.
SimConfig parse_sim_config(std::istream& in);
SimConfig load_sim_config(const std::string& path);

void write_trace_csv(const SimReport& r, std::ostream& out);

}  // namespace lq
