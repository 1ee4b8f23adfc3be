#include "lq/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace lq {

void HardwareProfile::validate() const {
    auto positive = [](double v, const char* what) {
        if (!(v > 0) || !std::isfinite(v))
            throw ValidationError(std::string(what) + " must be positive and finite");
    };
    positive(mem_bw_bytes_per_s, "mem_bw_bytes_per_s");
    positive(cuda_ops_per_s, "cuda_ops_per_s");
    positive(tc_int8_ops_per_s, "tc_int8_ops_per_s");
    positive(tc_fp16_ops_per_s, "tc_fp16_ops_per_s");
    positive(num_sms, "num_sms");
    positive(max_blocks_per_sm, "max_blocks_per_sm");
}

HardwareProfile parse_profile(std::istream& in) {
    std::map<std::string, double> values;
    std::string name;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("profile line " + std::to_string(lineno) +
                                  ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "name") {
            name = val;
            continue;
        }
        static const char* known[] = {"mem_bw_bytes_per_s", "cuda_ops_per_s",
                                      "tc_int8_ops_per_s",  "tc_fp16_ops_per_s",
                                      "num_sms",            "max_blocks_per_sm"};
        if (std::find_if(std::begin(known), std::end(known),
                         [&](const char* k) { return key == k; }) == std::end(known))
            throw ValidationError("profile line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
        try {
            std::size_t pos = 0;
            const double v = std::stod(val, &pos);
            if (pos != val.size()) throw std::invalid_argument(val);
            values[key] = v;
        } catch (const std::exception&) {
            throw ValidationError("profile line " + std::to_string(lineno) +
                                  ": cannot parse value '" + val + "'");
        }
    }
    for (const char* k : {"mem_bw_bytes_per_s", "cuda_ops_per_s", "tc_int8_ops_per_s",
                          "tc_fp16_ops_per_s", "num_sms", "max_blocks_per_sm"})
        if (!values.count(k)) throw ValidationError(std::string("profile missing key '") + k + "'");

    HardwareProfile p;
    p.name = name;
    p.mem_bw_bytes_per_s = values["mem_bw_bytes_per_s"];
    p.cuda_ops_per_s = values["cuda_ops_per_s"];
    p.tc_int8_ops_per_s = values["tc_int8_ops_per_s"];
    p.tc_fp16_ops_per_s = values["tc_fp16_ops_per_s"];
    p.num_sms = values["num_sms"];
    p.max_blocks_per_sm = values["max_blocks_per_sm"];
    p.validate();
    return p;
}

HardwareProfile load_profile(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path, 0);
    return parse_profile(f);
}

void CostQuery::validate() const {
    if (n < 1 || k < 1) throw ValidationError("shape extents must be >= 1");
    if (batch < 1) throw ValidationError("batch must be >= 1");
    if (tile.m_t < 1 || tile.n_t < 1 || tile.k_t < 1)
        throw ValidationError("tile extents must be >= 1");
    if (weight_bits != 4 && weight_bits != 8 && weight_bits != 16)
        throw ValidationError("weight_bits must be 4, 8 or 16");
    if (act_bits != 8 && act_bits != 16) throw ValidationError("act_bits must be 8 or 16");
    if (alpha < 0 || !std::isfinite(alpha)) throw ValidationError("alpha must be >= 0");
}

const char* regime_name(Regime r) {
    return r == Regime::MemoryBound ? "memory" : "compute";
}

double iter_load_time(const CostQuery& q, const HardwareProfile& p) {
    q.validate();
    p.validate();
    const double elems = double(q.tile.n_t) * double(q.tile.k_t);
    return elems / (p.mem_elements_per_s(q.weight_bits) / p.blocks());
}

IterCompute iter_compute_time(const CostQuery& q, const HardwareProfile& p) {
    q.validate();
    p.validate();
    const double elems = double(q.tile.n_t) * double(q.tile.k_t);
    const double eff_m = double(std::min<std::uint64_t>(q.tile.m_t, q.batch));
    IterCompute c;
    c.t_dq = q.alpha * elems / (p.cuda_ops_per_s / p.blocks());
    c.t_mma = 2.0 * eff_m * elems / (p.tc_ops_per_s(q.act_bits) / p.blocks());
    return c;
}

double iter_total_time(const CostQuery& q, const HardwareProfile& p) {
    const double t_ld = iter_load_time(q, p);
    const IterCompute c = iter_compute_time(q, p);
    const double t_comp = c.t_dq + c.t_mma;
    const double k_iters = std::ceil(double(q.k) / double(q.tile.k_t));
    // First iteration exposed, the rest pipelined.
    return t_ld + t_comp + (k_iters - 1.0) * std::max(t_ld, t_comp);
}

CostBreakdown total_time(const CostQuery& q, const HardwareProfile& p) {
    q.validate();
    p.validate();
    const double elems = double(q.n) * double(q.k);
    const double eff_m = double(std::min<std::uint64_t>(q.tile.m_t, q.batch));
    CostBreakdown b;
    b.t_ld = elems / p.mem_elements_per_s(q.weight_bits);
    b.t_dq = q.alpha * elems / p.cuda_ops_per_s;
    b.t_mma = 2.0 * eff_m * elems / p.tc_ops_per_s(q.act_bits);
    const double bands = std::ceil(double(q.batch) / double(q.tile.m_t));
    const double compute = b.t_dq + b.t_mma;
    b.total = bands * std::max(b.t_ld, compute);
    b.regime = b.t_ld >= compute ? Regime::MemoryBound : Regime::ComputeBound;
    return b;
}

double transition_batch(const HardwareProfile& p, int weight_bits, int act_bits) {
    p.validate();
    return p.tc_ops_per_s(act_bits) * (double(weight_bits) / 8.0) /
           (2.0 * p.mem_bw_bytes_per_s);
}

double alpha_threshold_memory(const HardwareProfile& p, int weight_bits) {
    p.validate();
    return p.cuda_ops_per_s / p.mem_elements_per_s(weight_bits);
}

double alpha_threshold_compute(const HardwareProfile& p, int act_bits, double effective_m) {
    p.validate();
    if (!(effective_m > 0)) throw ValidationError("effective_m must be positive");
    return p.cuda_ops_per_s * 2.0 * effective_m / p.tc_ops_per_s(act_bits);
}

std::vector<SweepRow> sweep_batch(CostQuery q, const HardwareProfile& p, std::uint64_t m_lo,
                                  std::uint64_t m_hi, std::uint64_t m_step) {
    if (m_lo < 1 || m_hi < m_lo) throw ValidationError("bad batch range");
    if (m_step < 1) throw ValidationError("batch step must be >= 1");
    std::vector<SweepRow> rows;
    for (std::uint64_t m = m_lo; m <= m_hi; m += m_step) {
        q.batch = m;
        rows.push_back({m, total_time(q, p)});
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
    out << "M,t_ld,t_dq,t_mma,total,regime\n";
    std::ostringstream line;
    line.precision(9);
    for (const SweepRow& r : rows) {
        line.str("");
        line << r.m << ',' << r.cost.t_ld << ',' << r.cost.t_dq << ',' << r.cost.t_mma << ','
             << r.cost.total << ',' << regime_name(r.cost.regime) << '\n';
        out << line.str();
    }
}

}  // namespace lq
