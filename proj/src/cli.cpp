#include "lq/cli.hpp"

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "lq/bundle.hpp"
#include "lq/cost_model.hpp"
#include "lq/gemm.hpp"
#include "lq/packed.hpp"
#include "lq/pipeline_sim.hpp"
#include "lq/quant.hpp"
#include "lq/tensor.hpp"

namespace lq {

namespace {

using nlohmann::json;

TileConfig parse_tile(const std::string& s) {
    TileConfig t;
    char x1, x2;
    std::istringstream is(s);
    if (!(is >> t.m_t >> x1 >> t.n_t >> x2 >> t.k_t) || x1 != 'x' || x2 != 'x' || !is.eof())
        throw ValidationError("cannot parse tile '" + s + "' (expected MxNxK)");
    return t;
}

void parse_shape(const std::string& s, std::uint64_t& n, std::uint64_t& k) {
    char x;
    std::istringstream is(s);
    if (!(is >> n >> x >> k) || x != 'x' || !is.eof())
        throw ValidationError("cannot parse shape '" + s + "' (expected NxK)");
}

void parse_batch_range(const std::string& s, std::uint64_t& lo, std::uint64_t& hi,
                       std::uint64_t& step) {
    step = 1;
    std::string range = s;
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        step = std::stoull(s.substr(colon + 1));
        range = s.substr(0, colon);
    }
    const auto dots = range.find("..");
    if (dots == std::string::npos) {
        lo = hi = std::stoull(range);
        return;
    }
    lo = std::stoull(range.substr(0, dots));
    hi = std::stoull(range.substr(dots + 2));
}

// Resolves "-" to stdout, else opens the file.
std::ostream& open_sink(const std::string& path, std::ofstream& file, std::ostream& fallback) {
    if (path.empty() || path == "-") return fallback;
    file.open(path);
    if (!file) throw IoError("cannot open " + path + " for writing", 0);
    return file;
}

json unit_stats_json(const SimReport& r) {
    json u;
    for (int i = 0; i < 3; ++i) {
        u[unit_name(SimUnit(i))] = {{"busy", r.units[i].busy},
                                    {"bubble", r.units[i].bubble},
                                    {"utilization",
                                     r.makespan > 0 ? r.units[i].busy / r.makespan : 0.0}};
    }
    return u;
}

json report_json(const SimReport& r) {
    return {{"pipeline", r.pipeline},
            {"makespan", r.makespan},
            {"units", unit_stats_json(r)},
            {"waits",
             {{"on_input", r.waits.on_input},
              {"on_buffer", r.waits.on_buffer},
              {"on_barrier", r.waits.on_barrier},
              {"on_unit", r.waits.on_unit}}},
            {"max_stages_in_use", r.max_stages_in_use}};
}

// --- subcommand bodies ------------------------------------------------------

int cmd_quantize(const std::string& input, const std::string& output, std::uint32_t group_size,
                 const std::string& layout) {
    const DenseTensor t = load_tensor(input);
    if (t.dims.size() != 2) throw ValidationError("quantize expects a 2-d weight tensor");
    const auto w = tensor_to_f32(t);
    const WeightLayout wl =
        layout == "dual-mma" ? WeightLayout::DualMmaPacked : WeightLayout::PlainRowMajor;
    const QuantizedWeightBundle b = build_bundle(
        w, std::uint32_t(t.dims[0]), std::uint32_t(t.dims[1]), group_size, wl);
    save_bundle(b, output);
    return 0;
}

int cmd_dequantize(const std::string& input, const std::string& output) {
    const QuantizedWeightBundle b = load_bundle(input);
    const auto w = reconstruct_int8(b);
    save_tensor(tensor_from_i8({b.n, b.k}, w), output);
    return 0;
}

int cmd_pack_layout(const std::string& input, const std::string& output, bool unpack) {
    const QuantizedWeightBundle b = load_bundle(input);
    save_bundle(unpack ? to_plain(b) : to_dual_mma(b), output);
    return 0;
}

int cmd_gemm(const std::string& activations, const std::string& weights,
             const std::string& engine_name, const std::string& tile_s,
             const std::string& out_path) {
    const DenseTensor xt = load_tensor(activations);
    if (xt.dims.size() != 2) throw ValidationError("gemm expects a 2-d activation tensor");
    const auto x = tensor_to_f32(xt);
    const QuantizedWeightBundle b = load_bundle(weights);
    const ActivationQuant act = quantize_activations_per_token(
        x, std::uint32_t(xt.dims[0]), std::uint32_t(xt.dims[1]));
    const Engine engine = engine_name == "packed" ? Engine::Packed : Engine::Scalar;
    const TileConfig tile = parse_tile(tile_s);
    const auto y = gemm_w4a8(act, b, tile, engine);
    save_tensor(tensor_from_f32({act.m, b.n}, y), out_path);
    return 0;
}

int cmd_cost_model(const std::string& profile_path, const std::string& shape_s,
                   const std::string& tile_s, double alpha, int wbits, int abits,
                   const std::string& batch_s, const std::string& out_path,
                   std::ostream& out) {
    const HardwareProfile p = load_profile(profile_path);
    CostQuery q;
    parse_shape(shape_s, q.n, q.k);
    q.tile = parse_tile(tile_s);
    q.alpha = alpha;
    q.weight_bits = wbits;
    q.act_bits = abits;
    std::uint64_t lo, hi, step;
    parse_batch_range(batch_s, lo, hi, step);
    const auto rows = sweep_batch(q, p, lo, hi, step);
    std::ofstream file;
    write_sweep_csv(rows, open_sink(out_path, file, out));
    return 0;
}

int cmd_simulate(const std::string& pipeline, const std::string& config_path,
                 const std::string& trace_path, const std::string& out_path,
                 std::ostream& out) {
    const SimConfig cfg = load_sim_config(config_path);
    json doc;
    SimReport for_trace;
    bool have_trace = false;
    if (pipeline == "excp" || pipeline == "both") {
        const SimReport r = simulate_excp(cfg);
        doc["excp"] = report_json(r);
        for_trace = r;
        have_trace = true;
    }
    if (pipeline == "imfp" || pipeline == "both") {
        const SimReport r = simulate_imfp(cfg);
        doc["imfp"] = report_json(r);
        if (!have_trace) {
            for_trace = r;
            have_trace = true;
        }
    }
    if (!have_trace) throw ValidationError("pipeline must be excp, imfp or both");
    if (doc.contains("excp") && doc.contains("imfp")) {
        const double imfp = doc["imfp"]["makespan"].get<double>();
        doc["makespan_ratio"] = imfp > 0 ? doc["excp"]["makespan"].get<double>() / imfp : 1.0;
    }
    if (!trace_path.empty()) {
        std::ofstream tf(trace_path);
        if (!tf) throw IoError("cannot open " + trace_path + " for writing", 0);
        write_trace_csv(for_trace, tf);
    }
    std::ofstream file;
    open_sink(out_path, file, out) << doc.dump(2) << "\n";
    return 0;
}

int cmd_verify(std::uint64_t fragments, std::uint64_t tiles, std::uint64_t seed,
               const std::string& out_path, std::ostream& out) {
    json doc;
    bool pass = true;

    // Overflow freedom of the quantizer's parameter space.
    const OverflowReport rep = verify_overflow_free(true);
    const std::uint64_t brute = brute_force_reachable_triples();
    doc["overflow"] = {{"group_ranges_checked", rep.group_ranges_checked},
                       {"reachable_triples", rep.reachable_triples},
                       {"brute_force_triples", brute},
                       {"chain_bound_failures", rep.chain_bound_failures},
                       {"violations", rep.violations.size()},
                       {"box_points_checked", rep.box_points_checked},
                       {"box_points_overflowing", rep.box_points_overflowing}};
    pass = pass && rep.ok() && rep.reachable_triples == brute;

    // Exhaustive scalar lane equivalence over the parameter box.
    std::uint64_t lane_points = 0, lane_mismatches = 0;
    for (int c = 0; c <= 15; ++c)
        for (int s = 1; s <= 16; ++s)
            for (int a = 9; a <= 247; ++a) {
                ++lane_points;
                GroupQuantParams p;
                p.scale = std::uint8_t(s);
                p.offset = std::uint8_t(a);
                p.group_min = std::int8_t(a - 128);
                const std::uint8_t lane =
                    dequantize_lane(std::uint8_t(c), std::uint8_t(s), std::uint8_t(a));
                const std::int8_t wide = dequantize_scalar(std::uint8_t(c), p);
                if (lane != std::uint8_t(wide)) ++lane_mismatches;
            }
    doc["lane_equivalence"] = {{"points", lane_points}, {"mismatches", lane_mismatches}};
    pass = pass && lane_mismatches == 0;

    // Randomized packed-vs-scalar fragment equivalence with instruction
    // accounting.
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> val(-119, 119);
    std::uint64_t frag_mismatches = 0;
    InstructionCounter totals;
    bool budget_ok = true;
    for (std::uint64_t f = 0; f < fragments; ++f) {
        std::array<std::int8_t, 64> group;
        for (auto& v : group) v = std::int8_t(val(rng));
        const SecondLevelResult l2 = quantize_second_level(
            std::span<const std::int8_t>(group.data(), group.size()), 1, 64, 64);
        const GroupQuantParams p = l2.groups[0];
        std::array<std::uint8_t, 32> codes;
        for (int i = 0; i < 32; ++i) codes[i] = l2.codes[2 * i];
        std::array<RegisterWord, 4> frag;
        for (int w = 0; w < 4; ++w)
            frag[w] = pack_interleaved(
                std::span<const std::uint8_t, 8>(codes.data() + 8 * w, 8));
        const DequantPackedResult res = dequant_packed(frag, p.scale, p.offset);
        totals += res.counter;
        if (res.counter.total() != 28 ||
            res.counter != InstructionCounter{8, 4, 8, 8})
            budget_ok = false;
        for (int w = 0; w < 4; ++w) {
            const auto elems =
                unpack_to_elements(res.words[2 * w], res.words[2 * w + 1]);
            for (int e = 0; e < 8; ++e)
                if (std::int8_t(elems[e]) != dequantize_scalar(codes[8 * w + e], p))
                    ++frag_mismatches;
        }
    }
    doc["packed_equivalence"] = {
        {"fragments", fragments},
        {"mismatches", frag_mismatches},
        {"instruction_budget_ok", budget_ok},
        {"instructions",
         {{"and", totals.and_ops},
          {"shr", totals.shr_ops},
          {"imad", totals.imad_ops},
          {"xor", totals.xor_ops},
          {"total", totals.total()},
          {"per_8_elements", fragments ? double(totals.total()) / (4.0 * fragments) : 0.0}}}};
    pass = pass && frag_mismatches == 0 && budget_ok;

    // Layout bijection on random tiles.
    std::uint64_t bijection_failures = 0;
    const FragmentDescriptor d;
    const std::uint32_t depths[3] = {64, 128, 256};
    std::uniform_int_distribution<int> nib(0, 15);
    for (std::uint64_t t = 0; t < tiles; ++t) {
        const std::uint32_t k_t = depths[t % 3];
        std::vector<std::uint8_t> codes(std::size_t(64) * k_t);
        for (auto& c : codes) c = std::uint8_t(nib(rng));
        const PackedTile tile = pack_dual_mma(codes, k_t, d);
        if (unpack_dual_mma(tile) != codes) ++bijection_failures;
    }
    doc["layout_bijection"] = {{"tiles", tiles}, {"failures", bijection_failures}};
    pass = pass && bijection_failures == 0;

    doc["pass"] = pass;
    std::ofstream file;
    open_sink(out_path, file, out) << doc.dump(2) << "\n";
    if (!pass) throw VerificationError("verification suite reported failures");
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-level 4-bit weight quantization workbench: quantize, pack, "
                 "run the reference W4A8 GEMM, and analyze kernel cost and "
                 "pipeline behavior."};
    app.require_subcommand(1);

    // quantize
    auto* quantize = app.add_subcommand("quantize", "FP32/F16 weights -> quantized bundle");
    std::string q_in, q_out, q_layout = "plain";
    std::uint32_t q_group = 64;
    quantize->add_option("--input", q_in, "weight tensor (LQTN, n x k)")->required();
    quantize->add_option("--output", q_out, "bundle path (LQWB)")->required();
    quantize->add_option("--group-size", q_group, "second-level group size");
    quantize->add_option("--layout", q_layout, "plain | dual-mma")
        ->check(CLI::IsMember({"plain", "dual-mma"}));

    // dequantize
    auto* dequantize = app.add_subcommand("dequantize", "bundle -> reconstructed INT8 tensor");
    std::string d_in, d_out;
    dequantize->add_option("--input", d_in, "bundle path")->required();
    dequantize->add_option("--output", d_out, "output tensor path")->required();

    // pack-layout / unpack-layout
    auto* pack = app.add_subcommand("pack-layout", "bundle -> dual-MMA record layout");
    std::string p_in, p_out;
    pack->add_option("--input", p_in, "bundle path")->required();
    pack->add_option("--output", p_out, "output bundle path")->required();
    auto* unpack = app.add_subcommand("unpack-layout", "bundle -> plain row-major layout");
    std::string u_in, u_out;
    unpack->add_option("--input", u_in, "bundle path")->required();
    unpack->add_option("--output", u_out, "output bundle path")->required();

    // gemm
    auto* gemm = app.add_subcommand("gemm", "reference W4A8 GEMM");
    std::string g_act, g_w, g_engine = "scalar", g_tile = "64x64x64", g_out;
    gemm->add_option("--activations", g_act, "activation tensor (m x k)")->required();
    gemm->add_option("--weights", g_w, "quantized bundle")->required();
    gemm->add_option("--engine", g_engine, "scalar | packed")
        ->check(CLI::IsMember({"scalar", "packed"}));
    gemm->add_option("--tile", g_tile, "tile config MxNxK");
    gemm->add_option("--out", g_out, "output tensor path")->required();

    // cost-model
    auto* cost = app.add_subcommand("cost-model", "analytic batch sweep (CSV)");
    std::string c_profile, c_shape, c_tile = "64x64x64", c_batch = "1..512", c_out;
    double c_alpha = 0;
    int c_wbits = 4, c_abits = 8;
    cost->add_option("--profile", c_profile, "hardware profile file")->required();
    cost->add_option("--shape", c_shape, "weight shape NxK")->required();
    cost->add_option("--tile", c_tile, "tile config MxNxK");
    cost->add_option("--alpha", c_alpha, "dequant ops per weight element");
    cost->add_option("--wbits", c_wbits, "weight bits: 4, 8 or 16")
        ->check(CLI::IsMember({4, 8, 16}));
    cost->add_option("--abits", c_abits, "activation bits: 8 or 16")
        ->check(CLI::IsMember({8, 16}));
    cost->add_option("--batch", c_batch, "batch range lo..hi[:step]");
    cost->add_option("--out", c_out, "CSV path (default stdout)");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "pipeline simulation (JSON report)");
    std::string s_pipeline = "both", s_config, s_trace, s_out;
    simulate->add_option("--pipeline", s_pipeline, "excp | imfp | both")
        ->check(CLI::IsMember({"excp", "imfp", "both"}));
    simulate->add_option("--config", s_config, "sim config file")->required();
    simulate->add_option("--trace", s_trace, "event trace CSV path");
    simulate->add_option("--out", s_out, "JSON path (default stdout)");

    // verify
    auto* verify = app.add_subcommand("verify", "self-check suite (JSON report)");
    std::uint64_t v_fragments = 100000, v_tiles = 60, v_seed = 20240817;
    std::string v_out;
    verify->add_option("--fragments", v_fragments, "random packed fragments to check");
    verify->add_option("--tiles", v_tiles, "random layout tiles to round-trip");
    verify->add_option("--seed", v_seed, "RNG seed");
    verify->add_option("--out", v_out, "JSON path (default stdout)");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);  // CLI11 takes reversed args
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (quantize->parsed()) return cmd_quantize(q_in, q_out, q_group, q_layout);
        if (dequantize->parsed()) return cmd_dequantize(d_in, d_out);
        if (pack->parsed()) return cmd_pack_layout(p_in, p_out, false);
        if (unpack->parsed()) return cmd_pack_layout(u_in, u_out, true);
        if (gemm->parsed()) return cmd_gemm(g_act, g_w, g_engine, g_tile, g_out);
        if (cost->parsed())
            return cmd_cost_model(c_profile, c_shape, c_tile, c_alpha, c_wbits, c_abits,
                                  c_batch, c_out, out);
        if (simulate->parsed()) return cmd_simulate(s_pipeline, s_config, s_trace, s_out, out);
        if (verify->parsed()) return cmd_verify(v_fragments, v_tiles, v_seed, v_out, out);
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return 3;
    } catch (const VerificationError& e) {
        err << "verification failure: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no subcommand\n";
    return 1;
}

}  // namespace lq
