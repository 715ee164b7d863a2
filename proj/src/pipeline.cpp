//===- pipeline.cpp - stage wiring, CLI backend, corpus runner -------------===//

#include "enclave_taint/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace etaint {

std::string VerifyError::join(const Diagnostics& d) {
    std::string s = "module verification failed:";
    for (const auto& m : d) s += "\n  " + m;
    return s;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

AnalysisArtifacts analyze_texts(const std::string& edl_text,
                                const std::string& sir_text,
                                const BarrierConfig& cfg,
                                const TrackerLimits& limits, ExecMode mode) {
    AnalysisArtifacts a;
    a.iface = parse_edl(edl_text);
    a.module = parse_sir(sir_text);
    Diagnostics verify = verify_module(a.module);
    if (!verify.empty()) throw VerifyError(std::move(verify));

    Diagnostics diags;
    a.table = collect_insensitive(a.module, &diags);
    a.pts = solve_points_to(a.module, &a.iface);
    for (const auto& d : a.pts.diagnostics) diags.push_back(d);
    a.cg = build_call_graph(a.module, a.pts);
    a.vfg = build_vfg(a.module, a.cg, a.pts);
    a.tuples = extract_key_parameters(a.iface);
    a.sinks = find_sinks(a.tuples, a.iface, a.module, a.cg, a.vfg, a.pts, mode,
                         &diags);
    a.high_risk_sites =
        tag_high_risk(a.module, a.cg, a.vfg, a.pts, cfg, &diags);
    a.report = back_track(a.sinks, a.module, a.vfg, a.pts, a.table, cfg,
                          a.high_risk_sites, limits, mode);
    // Stage diagnostics come first, tracker truncation notes after.
    Diagnostics merged = std::move(diags);
    for (auto& d : a.report.diagnostics) merged.push_back(std::move(d));
    a.report.diagnostics = std::move(merged);
    return a;
}

AnalyzeOutcome run_analyze(const RunConfig& cfg) {
    AnalyzeOutcome out;
    try {
        if (cfg.edl_paths.empty() || cfg.sir_paths.empty()) {
            out.errors = "analyze requires at least one --edl and one --ir file\n";
            out.exit_code = 2;
            return out;
        }
        std::string edl_text, sir_text;
        for (const auto& p : cfg.edl_paths) edl_text += read_file(p) + "\n";
        for (const auto& p : cfg.sir_paths) sir_text += read_file(p) + "\n";
        BarrierConfig barriers = BarrierConfig::defaults();
        if (!cfg.barrier_config_path.empty())
            barriers = BarrierConfig::from_json_text(
                read_file(cfg.barrier_config_path));
        TrackerLimits limits{cfg.max_paths, cfg.max_path_len};
        ExecMode mode = cfg.jobs == 1 ? ExecMode::Serial : ExecMode::Parallel;
#ifdef _OPENMP
        if (cfg.jobs > 1) omp_set_num_threads(cfg.jobs);
#endif
        AnalysisArtifacts a =
            analyze_texts(edl_text, sir_text, barriers, limits, mode);

        std::ostringstream os;
        if (cfg.dump_flags.count("pts"))
            os << "== points-to ==\n" << dump_pts(a.module, a.pts);
        if (cfg.dump_flags.count("cg"))
            os << "== call graph ==\n" << dump_cg(a.module, a.cg);
        if (cfg.dump_flags.count("vfg"))
            os << "== value flow graph ==\n" << dump_vfg(a.vfg);
        if (cfg.dump_flags.count("sinks"))
            os << "== sinks ==\n" << dump_sinks(a.module, a.vfg, a.sinks);
        os << (cfg.format == ReportFormat::Json
                   ? emit_report_json(a.module, a.vfg, a.report)
                   : emit_report_text(a.module, a.vfg, a.report));
        out.output = os.str();
        out.exit_code = a.report.findings.empty() ? 0 : 1;
    } catch (const std::exception& e) {
        out.errors = std::string(e.what()) + "\n";
        out.exit_code = 2;
    }
    return out;
}

std::vector<NormalizedFinding> normalize_findings(const LeakReport& report) {
    std::vector<NormalizedFinding> out;
    for (const LeakFinding& f : report.findings)
        out.push_back({to_string(f.pattern), f.high_risk ? "high" : "normal",
                       f.sink.loc, f.source_loc});
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<NormalizedFinding> parse_expected_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    std::vector<NormalizedFinding> out;
    for (const auto& f : j.at("findings"))
        out.push_back({f.at("pattern").get<std::string>(),
                       f.value("risk", "normal"),
                       f.at("sink_loc").get<std::string>(),
                       f.at("source_loc").get<std::string>()});
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::string describe(const NormalizedFinding& f) {
    return f.pattern + "/" + f.risk + " sink=" + f.sink_loc +
           " source=" + f.source_loc;
}

} // namespace

int run_corpus(const std::string& dir, std::ostream& out) {
    if (!fs::is_directory(dir)) {
        out << "corpus: '" << dir << "' is not a directory\n";
        return 2;
    }
    std::vector<std::string> cases;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) cases.push_back(entry.path().filename().string());
    std::sort(cases.begin(), cases.end());
    if (cases.empty()) {
        out << "corpus: warning: no cases found under '" << dir << "'\n";
        return 0;
    }
    int failures = 0;
    for (const std::string& name : cases) {
        fs::path base = fs::path(dir) / name;
        try {
            std::string edl = read_file((base / "iface.edl").string());
            std::string sir = read_file((base / "prog.sir").string());
            auto expected =
                parse_expected_json(read_file((base / "expected.json").string()));
            AnalysisArtifacts a = analyze_texts(edl, sir);
            auto got = normalize_findings(a.report);
            if (got == expected) {
                out << "PASS " << name << "\n";
            } else {
                ++failures;
                out << "FAIL " << name << "\n";
                for (const auto& f : expected)
                    out << "    want: " << describe(f) << "\n";
                for (const auto& f : got) out << "    got:  " << describe(f) << "\n";
            }
        } catch (const std::exception& e) {
            ++failures;
            out << "ERROR " << name << ": " << e.what() << "\n";
        }
    }
    out << cases.size() - failures << "/" << cases.size() << " cases pass\n";
    return failures == 0 ? 0 : 1;
}

} // namespace etaint
