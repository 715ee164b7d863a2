//===- bench_kernels.cpp - serial vs OpenMP kernel comparison --------------===//
//
// Builds a synthetic module, then times the two data-parallel stages
// (per-seed taint runs, per-sink backward tracking) in the serial reference
// mode and the OpenMP mode, checking that both produce identical reports.
//
//===----------------------------------------------------------------------===//

#include <chrono>
#include <iostream>

#include "enclave_taint/generator.hpp"
#include "enclave_taint/pipeline.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct StageTimes {
    double sinks = 0, track = 0;
    std::string report_json;
};

StageTimes run_mode(const etaint::SirModule& m, const etaint::EdlInterface& iface,
                    const etaint::PointsToResult& pts, const etaint::CallGraph& cg,
                    const etaint::ValueFlowGraph& vfg, etaint::ExecMode mode) {
    using namespace etaint;
    StageTimes t;
    auto tuples = extract_key_parameters(iface);
    auto start = Clock::now();
    auto sinks = find_sinks(tuples, iface, m, cg, vfg, pts, mode);
    t.sinks = seconds_since(start);

    BarrierConfig cfg = BarrierConfig::defaults();
    auto high = tag_high_risk(m, cg, vfg, pts, cfg);
    start = Clock::now();
    LeakReport report =
        back_track(sinks, m, vfg, pts, InsensitiveDataTable{}, cfg, high, {}, mode);
    t.track = seconds_since(start);
    t.report_json = emit_report_json(m, vfg, report);
    return t;
}

} // namespace

int main(int argc, char** argv) {
    size_t instructions = 40000, entries = 200;
    if (argc > 1) instructions = std::stoul(argv[1]);
    if (argc > 2) entries = std::stoul(argv[2]);

    etaint::GeneratedProgram prog =
        etaint::make_scaled_program(instructions, entries);
    etaint::EdlInterface iface = etaint::parse_edl(prog.edl_text);
    etaint::SirModule m = etaint::parse_sir(prog.sir_text);
    etaint::PointsToResult pts = etaint::solve_points_to(m, &iface);
    etaint::CallGraph cg = etaint::build_call_graph(m, pts);
    etaint::ValueFlowGraph vfg = etaint::build_vfg(m, cg, pts);

    std::cout << "workload: " << instructions << " instructions, " << entries
              << " entry points, " << vfg.nodes.size() << " VFG nodes\n";
#ifdef _OPENMP
    std::cout << "threads:  " << omp_get_max_threads() << "\n";
#else
    std::cout << "threads:  OpenMP not enabled\n";
#endif

    StageTimes serial = run_mode(m, iface, pts, cg, vfg, etaint::ExecMode::Serial);
    StageTimes parallel =
        run_mode(m, iface, pts, cg, vfg, etaint::ExecMode::Parallel);

    auto row = [](const char* name, double s, double p) {
        std::printf("%-14s serial %8.3fs   parallel %8.3fs   speedup %.2fx\n",
                    name, s, p, p > 0 ? s / p : 0.0);
    };
    row("find_sinks", serial.sinks, parallel.sinks);
    row("back_track", serial.track, parallel.track);
    if (serial.report_json != parallel.report_json) {
        std::cerr << "MISMATCH: serial and parallel reports differ\n";
        return 1;
    }
    std::cout << "reports:      byte-identical\n";
    return 0;
}
