//===- pipeline.hpp - analysis driver and corpus runner -------------------===//

#pragma once

#include <compare>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "enclave_taint/graphs.hpp"
#include "enclave_taint/tracker.hpp"

namespace etaint {

enum class ReportFormat { Text, Json };

struct RunConfig {
    std::vector<std::string> edl_paths;
    std::vector<std::string> sir_paths;
    std::string barrier_config_path;  // empty: built-in defaults
    ReportFormat format = ReportFormat::Text;
    std::set<std::string> dump_flags;  // pts, cg, vfg, sinks
    size_t max_paths = 256;
    size_t max_path_len = 512;
    int jobs = 0;  // 0 = all cores, 1 = serial reference path
};

// Raised when the module fails structural verification.
class VerifyError : public std::runtime_error {
public:
    explicit VerifyError(Diagnostics diags)
        : std::runtime_error(join(diags)), diags_(std::move(diags)) {}
    const Diagnostics& diagnostics() const { return diags_; }

private:
    static std::string join(const Diagnostics& d);
    Diagnostics diags_;
};

// Every intermediate the pipeline produces, for tests and dump modes.
struct AnalysisArtifacts {
    EdlInterface iface;
    SirModule module;
    InsensitiveDataTable table;
    PointsToResult pts;
    CallGraph cg;
    ValueFlowGraph vfg;
    std::vector<LeakTuple> tuples;
    std::vector<TaintSink> sinks;
    std::set<uint32_t> high_risk_sites;
    LeakReport report;
};

// Full pipeline over in-memory sources. Throws ParseError or VerifyError on
// malformed input.
AnalysisArtifacts analyze_texts(const std::string& edl_text,
                                const std::string& sir_text,
                                const BarrierConfig& cfg = BarrierConfig::defaults(),
                                const TrackerLimits& limits = {},
                                ExecMode mode = ExecMode::Serial);

struct AnalyzeOutcome {
    int exit_code = 0;     // 0 clean, 1 findings, 2 input error
    std::string output;    // dumps followed by the rendered report
    std::string errors;    // parse/verify messages for the error stream
};

AnalyzeOutcome run_analyze(const RunConfig& cfg);

// Runs every corpus case under dir (cases/<name>/{iface.edl,prog.sir,
// expected.json}) and prints one verdict line per case. Returns 0 when all
// match, 1 on any mismatch, 2 on unusable input.
int run_corpus(const std::string& dir, std::ostream& out);

// Findings reduced to the stable fields golden files pin down.
struct NormalizedFinding {
    std::string pattern, risk, sink_loc, source_loc;
    auto operator<=>(const NormalizedFinding&) const = default;
};
std::vector<NormalizedFinding> normalize_findings(const LeakReport& report);
std::vector<NormalizedFinding> parse_expected_json(const std::string& text);
std::string read_file(const std::string& path);

} // namespace etaint
