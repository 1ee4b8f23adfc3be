#include "lq/pipeline_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace lq {

void SimConfig::validate() const {
    if (k_iters < 1) throw ValidationError("k_iters must be >= 1");
    auto nonneg = [](double v, const char* what) {
        if (v < 0 || !std::isfinite(v))
            throw ValidationError(std::string(what) + " must be >= 0 and finite");
    };
    nonneg(t_ld, "t_ld");
    nonneg(t_dq, "t_dq");
    nonneg(t_mma, "t_mma");
    nonneg(sync_cost, "sync_cost");
    nonneg(roundtrip_cost, "roundtrip_cost");
    if (num_compute_wgs < 1) throw ValidationError("num_compute_wgs must be >= 1");
    if (smem_stages < 1) throw ValidationError("smem_stages must be >= 1");
    if (tasks_per_tile < 1) throw ValidationError("tasks_per_tile must be >= 1");
    if (jitter < 0 || jitter >= 1) throw ValidationError("jitter must be in [0, 1)");
}

const char* unit_name(SimUnit u) {
    switch (u) {
        case SimUnit::Copy: return "copy";
        case SimUnit::Scalar: return "scalar";
        case SimUnit::Tensor: return "tensor";
    }
    return "?";
}

namespace {

struct TileDurations {
    std::vector<double> ld, dq, mma;  // per tile, jitter already applied
};

TileDurations roll_durations(const SimConfig& cfg) {
    TileDurations d;
    d.ld.resize(cfg.k_iters, cfg.t_ld);
    d.dq.resize(cfg.k_iters, cfg.t_dq);
    d.mma.resize(cfg.k_iters, cfg.t_mma);
    if (cfg.jitter > 0) {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> u(1.0 - cfg.jitter, 1.0 + cfg.jitter);
        for (std::uint64_t i = 0; i < cfg.k_iters; ++i) {
            d.ld[i] *= u(rng);
            d.dq[i] *= u(rng);
            d.mma[i] *= u(rng);
        }
    }
    return d;
}

// Maximum simultaneous stage occupancy over [acquire, release) intervals.
int max_overlap(const std::vector<double>& acquire, const std::vector<double>& release) {
    std::vector<std::pair<double, int>> ev;
    ev.reserve(acquire.size() * 2);
    for (std::size_t i = 0; i < acquire.size(); ++i) {
        ev.push_back({acquire[i], +1});
        ev.push_back({release[i], -1});
    }
    // Release before acquire at equal times: a freed stage is immediately
    // reusable, matching how the recurrences hand a stage over.
    std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    int cur = 0, best = 0;
    for (const auto& [t, delta] : ev) {
        cur += delta;
        best = std::max(best, cur);
    }
    return best;
}

}  // namespace

SimReport simulate_excp(const SimConfig& cfg) {
    cfg.validate();
    const TileDurations dur = roll_durations(cfg);
    const std::uint64_t k = cfg.k_iters;
    const int S = cfg.smem_stages;

    std::vector<double> load_start(k), load_end(k), dq_start(k), dq_end(k), signal(k),
        mma_start(k), mma_end(k);

    for (std::uint64_t i = 0; i < k; ++i) {
        const double wg_free = i ? load_end[i - 1] : 0.0;
        const double stage_ready = (i < std::uint64_t(S)) ? 0.0 : mma_end[i - S];
        load_start[i] = std::max(wg_free, stage_ready);
        load_end[i] = load_start[i] + dur.ld[i];

        const double dq_free = i ? signal[i - 1] : 0.0;  // the dequant WG sits in the barrier too
        dq_start[i] = std::max(load_end[i], dq_free);
        dq_end[i] = dq_start[i] + dur.dq[i] + cfg.roundtrip_cost;
        signal[i] = dq_end[i] + cfg.sync_cost;

        const double mma_free = i ? mma_end[i - 1] : 0.0;
        mma_start[i] = std::max(signal[i], mma_free);
        mma_end[i] = mma_start[i] + dur.mma[i];
    }

    SimReport r;
    r.pipeline = "excp";
    r.makespan = mma_end[k - 1];
    for (std::uint64_t i = 0; i < k; ++i) {
        r.units[0].busy += dur.ld[i];
        r.units[1].busy += dur.dq[i] + cfg.roundtrip_cost;
        r.units[2].busy += dur.mma[i];
        r.waits.on_buffer += load_start[i] - (i ? load_end[i - 1] : 0.0);
        r.waits.on_input += dq_start[i] - std::max(i ? signal[i - 1] : 0.0, 0.0);
        r.waits.on_barrier += cfg.sync_cost;
        r.waits.on_input += mma_start[i] - (i ? mma_end[i - 1] : 0.0);
    }
    for (auto& u : r.units) u.bubble = r.makespan - u.busy;
    r.max_stages_in_use = max_overlap(load_start, mma_end);

    for (std::uint64_t i = 0; i < k; ++i) {
        r.trace.push_back({load_start[i], SimUnit::Copy, "load", "load_start", i, -1});
        r.trace.push_back({load_end[i], SimUnit::Copy, "load", "load_end", i, -1});
        r.trace.push_back({dq_start[i], SimUnit::Scalar, "dequant", "dequant_start", i, -1});
        r.trace.push_back({dq_end[i], SimUnit::Scalar, "dequant", "dequant_end", i, -1});
        r.trace.push_back({signal[i], SimUnit::Scalar, "dequant", "barrier_signal", i, -1});
        r.trace.push_back({mma_start[i], SimUnit::Tensor, "mma", "mma_start", i, -1});
        r.trace.push_back({mma_end[i], SimUnit::Tensor, "mma", "mma_end", i, -1});
    }
    std::stable_sort(r.trace.begin(), r.trace.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.time < b.time; });
    return r;
}

SimReport simulate_imfp(const SimConfig& cfg) {
    cfg.validate();
    const TileDurations dur = roll_durations(cfg);
    const std::uint64_t k = cfg.k_iters;
    const int S = cfg.smem_stages;
    const int tpt = cfg.tasks_per_tile;
    const int C = cfg.num_compute_wgs;

    std::vector<double> load_start(k), load_end(k), dq_done(k);
    std::vector<double> wg_free(C, 0.0);
    double scalar_free = 0.0, tensor_free = 0.0;

    SimReport r;
    r.pipeline = "imfp";

    for (std::uint64_t i = 0; i < k; ++i) {
        // Load of tile i can only be blocked by the previous load and by
        // stage availability; tile i-S's dequants are already scheduled
        // because tasks are granted in FIFO order.
        const double prev = i ? load_end[i - 1] : 0.0;
        const double stage_ready = (i < std::uint64_t(S)) ? 0.0 : dq_done[i - S];
        load_start[i] = std::max(prev, stage_ready);
        load_end[i] = load_start[i] + dur.ld[i];
        r.waits.on_buffer += load_start[i] - prev;
        r.trace.push_back({load_start[i], SimUnit::Copy, "load", "load_start", i, -1});
        r.trace.push_back({load_end[i], SimUnit::Copy, "load", "load_end", i, -1});

        for (int task = 0; task < tpt; ++task) {
            // FIFO queue: the longest-waiting compute WG (earliest free time,
            // ties by index) takes the next task.
            int j = 0;
            for (int c = 1; c < C; ++c)
                if (wg_free[c] < wg_free[j]) j = c;
            const double grant = std::max(load_end[i], wg_free[j]);
            r.waits.on_input += grant - wg_free[j];

            const double dq_t = dur.dq[i] / tpt;
            const double mma_t = dur.mma[i] / tpt;
            const double s_start = std::max(grant, scalar_free);
            const double s_end = s_start + dq_t;
            scalar_free = s_end;
            const double t_start = std::max(s_end, tensor_free);
            const double t_end = t_start + mma_t;
            tensor_free = t_end;
            r.waits.on_unit += (s_start - grant) + (t_start - s_end);
            wg_free[j] = t_end;

            const std::string wg = "compute" + std::to_string(j);
            r.trace.push_back({s_start, SimUnit::Scalar, wg, "dequant_start", i, task});
            r.trace.push_back({s_end, SimUnit::Scalar, wg, "dequant_end", i, task});
            r.trace.push_back({t_start, SimUnit::Tensor, wg, "mma_start", i, task});
            r.trace.push_back({t_end, SimUnit::Tensor, wg, "mma_end", i, task});

            r.units[1].busy += dq_t;
            r.units[2].busy += mma_t;
            if (task == tpt - 1) dq_done[i] = s_end;  // weights now in registers
        }
        r.units[0].busy += dur.ld[i];
    }

    r.makespan = *std::max_element(wg_free.begin(), wg_free.end());
    r.makespan = std::max(r.makespan, load_end[k - 1]);
    for (auto& u : r.units) u.bubble = r.makespan - u.busy;
    r.max_stages_in_use = max_overlap(load_start, dq_done);
    std::stable_sort(r.trace.begin(), r.trace.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.time < b.time; });
    return r;
}

CompareSummary compare_pipelines(const SimConfig& cfg) {
    CompareSummary s;
    s.excp = simulate_excp(cfg);
    s.imfp = simulate_imfp(cfg);
    s.makespan_ratio = s.imfp.makespan > 0 ? s.excp.makespan / s.imfp.makespan : 1.0;
    return s;
}

SimConfig parse_sim_config(std::istream& in) {
    SimConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("sim config line " + std::to_string(lineno) +
                                  ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        double v;
        try {
            std::size_t pos = 0;
            v = std::stod(val, &pos);
            if (pos != val.size()) throw std::invalid_argument(val);
        } catch (const std::exception&) {
            throw ValidationError("sim config line " + std::to_string(lineno) +
                                  ": cannot parse value '" + val + "'");
        }
        if (key == "k_iters") cfg.k_iters = std::uint64_t(v);
        else if (key == "t_ld") cfg.t_ld = v;
        else if (key == "t_dq") cfg.t_dq = v;
        else if (key == "t_mma") cfg.t_mma = v;
        else if (key == "num_compute_wgs") cfg.num_compute_wgs = int(v);
        else if (key == "smem_stages") cfg.smem_stages = int(v);
        else if (key == "sync_cost") cfg.sync_cost = v;
        else if (key == "roundtrip_cost") cfg.roundtrip_cost = v;
        else if (key == "tasks_per_tile") cfg.tasks_per_tile = int(v);
        else if (key == "seed") cfg.seed = std::uint64_t(v);
        else if (key == "jitter") cfg.jitter = v;
        else
            throw ValidationError("sim config line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

SimConfig load_sim_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path, 0);
    return parse_sim_config(f);
}

void write_trace_csv(const SimReport& r, std::ostream& out) {
    out << "time,unit,wg,event,tile,task\n";
    std::ostringstream line;
    line.precision(12);
    for (const TraceEvent& e : r.trace) {
        line.str("");
        line << e.time << ',' << unit_name(e.unit) << ',' << e.wg << ',' << e.event << ','
             << e.tile << ',' << e.task << '\n';
        out << line.str();
    }
}

}  // namespace lq
