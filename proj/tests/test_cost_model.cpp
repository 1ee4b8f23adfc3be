#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "lq/cost_model.hpp"

using namespace lq;

namespace {

// Round-number machine so every expectation below is hand-checkable:
// phi_bd(4) = 2e12 elem/s, M*(w4a8) = 25, alpha*_mem(4) = 5,
// alpha*_comp(a8, 25) = 5, 200 blocks.
HardwareProfile toy() {
    HardwareProfile p;
    p.name = "toy";
    p.mem_bw_bytes_per_s = 1e12;
    p.cuda_ops_per_s = 1e13;
    p.tc_int8_ops_per_s = 1e14;
    p.tc_fp16_ops_per_s = 5e13;
    p.num_sms = 100;
    p.max_blocks_per_sm = 2;
    return p;
}

std::string profile_path(const char* file) {
    return std::string(LQLAB_PROFILE_DIR) + "/" + file;
}

}  // namespace

// --- hand-computed times ------------------------------------------------------

TEST_CASE("per-iteration times match hand calculations on a round-number machine") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 256;
    q.k = 256;
    q.tile = {64, 64, 64};
    q.weight_bits = 4;
    q.act_bits = 8;
    q.alpha = 2.0;
    q.batch = 8;

    // 4096 elements; block rates are device rates / 200.
    CHECK(iter_load_time(q, p) == doctest::Approx(4.096e-7).epsilon(1e-12));
    const IterCompute c = iter_compute_time(q, p);
    CHECK(c.t_dq == doctest::Approx(1.6384e-7).epsilon(1e-12));
    CHECK(c.t_mma == doctest::Approx(1.31072e-7).epsilon(1e-12));  // eff_m = 8

    // 4 k-iterations: first exposed, 3 pipelined behind the larger term.
    const double t_ld = 4.096e-7, t_comp = 1.6384e-7 + 1.31072e-7;
    CHECK(iter_total_time(q, p) ==
          doctest::Approx(t_ld + t_comp + 3.0 * t_ld).epsilon(1e-12));
}

TEST_CASE("device totals match hand calculations and pick the right regime") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 256;
    q.k = 512;  // 131072 elements
    q.tile = {64, 64, 64};
    q.weight_bits = 4;
    q.act_bits = 8;
    q.alpha = 5.0;  // exactly alpha*_mem
    q.batch = 50;

    const CostBreakdown b = total_time(q, p);
    CHECK(b.t_ld == doctest::Approx(6.5536e-8).epsilon(1e-12));
    CHECK(b.t_dq == b.t_ld);  // alpha at the memory threshold: identical times
    CHECK(b.t_mma == doctest::Approx(1.31072e-7).epsilon(1e-12));
    CHECK(b.regime == Regime::ComputeBound);  // dq alone ties, mma tips it
    CHECK(b.total == doctest::Approx(b.t_dq + b.t_mma).epsilon(1e-12));
}

TEST_CASE("alpha zero removes the dequant term entirely") {
    CostQuery q;
    q.n = 128;
    q.k = 128;
    q.batch = 10;
    const CostBreakdown b = total_time(q, toy());
    CHECK(b.t_dq == 0.0);
    CHECK(iter_compute_time(q, toy()).t_dq == 0.0);
}

// --- closed-form diagnostics --------------------------------------------------

TEST_CASE("transition batch and alpha thresholds have their closed forms") {
    const HardwareProfile p = toy();
    CHECK(transition_batch(p, 4, 8) == 25.0);
    CHECK(transition_batch(p, 8, 8) == 50.0);
    CHECK(transition_batch(p, 4, 16) == 12.5);
    CHECK(alpha_threshold_memory(p, 4) == 5.0);
    CHECK(alpha_threshold_memory(p, 8) == 10.0);
    CHECK(alpha_threshold_compute(p, 8, 25.0) == 5.0);
    CHECK(alpha_threshold_compute(p, 16, 25.0) == 10.0);
    CHECK_THROWS_AS(alpha_threshold_compute(p, 8, 0.0), ValidationError);
}

TEST_CASE("regime flips exactly at the transition batch") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 512;
    q.k = 512;
    q.tile = {64, 64, 64};
    q.alpha = 0.0;

    q.batch = 25;  // == M*: load and MMA times tie, load wins the tie
    CHECK(total_time(q, p).regime == Regime::MemoryBound);
    CHECK(total_time(q, p).t_ld == total_time(q, p).t_mma);
    q.batch = 24;
    CHECK(total_time(q, p).regime == Regime::MemoryBound);
    q.batch = 26;
    CHECK(total_time(q, p).regime == Regime::ComputeBound);
}

// --- structural properties ----------------------------------------------------

TEST_CASE("total time is exactly linear in the weight element count") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 128;
    q.k = 256;
    q.alpha = 3.0;
    q.batch = 40;
    const CostBreakdown b1 = total_time(q, p);
    q.k = 512;
    const CostBreakdown b2 = total_time(q, p);
    CHECK(b2.t_ld == 2.0 * b1.t_ld);
    CHECK(b2.t_dq == 2.0 * b1.t_dq);
    CHECK(b2.t_mma == 2.0 * b1.t_mma);
    CHECK(b2.total == 2.0 * b1.total);
}

TEST_CASE("total time never decreases with batch size") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 256;
    q.k = 256;
    q.tile = {64, 64, 64};
    q.alpha = 5.07;
    double prev = 0.0;
    for (std::uint64_t m = 1; m <= 200; ++m) {
        q.batch = m;
        const double t = total_time(q, p).total;
        CHECK(t >= prev);
        prev = t;
    }
}

TEST_CASE("MMA time saturates once the batch exceeds the tile height") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 256;
    q.k = 256;
    q.tile = {64, 64, 64};
    q.batch = 64;
    const CostBreakdown base = total_time(q, p);
    q.batch = 1024;  // eff_m still 64; 16 bands instead of 1
    const CostBreakdown big = total_time(q, p);
    CHECK(big.t_mma == base.t_mma);
    CHECK(big.total == 16.0 * base.total);
}

TEST_CASE("weight width scales the load term only") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 256;
    q.k = 256;
    q.batch = 8;
    q.weight_bits = 4;
    const CostBreakdown w4 = total_time(q, p);
    q.weight_bits = 8;
    const CostBreakdown w8 = total_time(q, p);
    CHECK(w8.t_ld == 2.0 * w4.t_ld);
    CHECK(w8.t_mma == w4.t_mma);
}

// --- profile parsing ----------------------------------------------------------

TEST_CASE("profile parser accepts comments, blank lines and a name") {
    std::istringstream in(
        "# a machine\n"
        "name = box\n"
        "\n"
        "mem_bw_bytes_per_s = 1e12   # datasheet\n"
        "cuda_ops_per_s = 1e13\n"
        "tc_int8_ops_per_s = 1e14\n"
        "tc_fp16_ops_per_s = 5e13\n"
        "num_sms = 100\n"
        "max_blocks_per_sm = 2\n");
    const HardwareProfile p = parse_profile(in);
    CHECK(p.name == "box");
    CHECK(p.mem_bw_bytes_per_s == 1e12);
    CHECK(p.blocks() == 200.0);
}

TEST_CASE("profile parser rejects malformed input") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_profile(in);
    };
    const std::string ok =
        "mem_bw_bytes_per_s = 1e12\ncuda_ops_per_s = 1e13\ntc_int8_ops_per_s = 1e14\n"
        "tc_fp16_ops_per_s = 5e13\nnum_sms = 100\nmax_blocks_per_sm = 2\n";

    CHECK_NOTHROW(parse(ok));
    CHECK_THROWS_WITH_AS(parse(ok + "voltage = 12\n"), doctest::Contains("unknown key"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse("mem_bw_bytes_per_s = 1e12\n"),
                         doctest::Contains("missing key"), ValidationError);
    CHECK_THROWS_WITH_AS(parse("mem_bw_bytes_per_s 1e12\n"),
                         doctest::Contains("key = value"), ValidationError);
    CHECK_THROWS_WITH_AS(parse("mem_bw_bytes_per_s = twelve\n" + ok.substr(ok.find('\n') + 1)),
                         doctest::Contains("cannot parse"), ValidationError);
    CHECK_THROWS_WITH_AS(parse("mem_bw_bytes_per_s = -1e12\n" + ok.substr(ok.find('\n') + 1)),
                         doctest::Contains("positive"), ValidationError);
}

TEST_CASE("query validation rejects unsupported widths") {
    CostQuery q;
    q.n = 1;
    q.k = 1;
    q.weight_bits = 3;
    CHECK_THROWS_AS(q.validate(), ValidationError);
    q.weight_bits = 4;
    q.act_bits = 12;
    CHECK_THROWS_AS(q.validate(), ValidationError);
    q.act_bits = 8;
    q.alpha = -1.0;
    CHECK_THROWS_AS(q.validate(), ValidationError);
}

// --- shipped profiles ---------------------------------------------------------

TEST_CASE("shipped device profiles reproduce their calibration targets") {
    const HardwareProfile h100 = load_profile(profile_path("h100.profile"));
    CHECK(alpha_threshold_memory(h100, 4) == doctest::Approx(5.07).epsilon(0.02 / 5.07));
    CHECK(alpha_threshold_compute(h100, 8, 150.0) ==
          doctest::Approx(5.05).epsilon(0.02 / 5.05));
    CHECK(transition_batch(h100, 4, 8) == doctest::Approx(150.0).epsilon(0.05));
    CHECK(transition_batch(h100, 8, 8) == doctest::Approx(300.0).epsilon(0.05));

    const HardwareProfile a100 = load_profile(profile_path("a100.profile"));
    CHECK(transition_batch(a100, 8, 8) == doctest::Approx(156.0).epsilon(0.05));
}

// --- sweep + CSV --------------------------------------------------------------

TEST_CASE("batch sweep emits one row per step with the documented header") {
    const HardwareProfile p = toy();
    CostQuery q;
    q.n = 256;
    q.k = 256;
    q.tile = {64, 64, 64};
    const auto rows = sweep_batch(q, p, 1, 61, 20);
    REQUIRE(rows.size() == 4);  // 1, 21, 41, 61
    CHECK(rows[0].m == 1);
    CHECK(rows[3].m == 61);
    CHECK(rows[0].cost.regime == Regime::MemoryBound);   // far below M* = 25
    CHECK(rows[3].cost.regime == Regime::ComputeBound);  // above it

    std::ostringstream out;
    write_sweep_csv(rows, out);
    std::istringstream lines(out.str());
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line == "M,t_ld,t_dq,t_mma,total,regime");
    int count = 0;
    while (std::getline(lines, line)) {
        ++count;
        CHECK(line.find(',') != std::string::npos);
    }
    CHECK(count == 4);
    CHECK(out.str().find("memory") != std::string::npos);
    CHECK(out.str().find("compute") != std::string::npos);

    CHECK_THROWS_AS(sweep_batch(q, p, 5, 4), ValidationError);
    CHECK_THROWS_AS(sweep_batch(q, p, 1, 10, 0), ValidationError);
}
