//===- tracker.hpp - backward leak tracking and reporting -----------------===//
//
// Walks the VFG backward from every sink along data-carrying edges,
// enumerating all simple paths to allocation nodes. Sources annotated
// INSENSITIVE are dropped; traversal never descends into the body of a
// configured encryption/seal barrier. Sources reaching crypto key/plaintext
// parameter positions (or receiving decrypted output) are tagged high-risk
// and their findings sort first.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "enclave_taint/graphs.hpp"
#include "enclave_taint/points_to.hpp"
#include "enclave_taint/sir.hpp"
#include "enclave_taint/taint.hpp"

namespace etaint {

enum class HighRiskRole { Key, Plaintext, Decrypted };

struct HighRiskSpec {
    std::string function;
    int param = 0;  // kReturnIndex for the return value
    HighRiskRole role = HighRiskRole::Key;
};

struct BarrierConfig {
    // Exact function names; a single trailing '*' acts as a prefix glob.
    std::vector<std::string> barriers;
    std::vector<HighRiskSpec> high_risk;

    static BarrierConfig defaults();
    // {"barriers":[...], "high_risk":[{"function":..,"param":int|"return",
    //  "role":"key"|"plaintext"|"decrypted"}]}
    static BarrierConfig from_json_text(const std::string& text);

    bool is_barrier(const std::string& name) const;
};

struct LeakFinding {
    TaintSink sink;
    uint32_t source_site = kNoSite;
    std::string source_alloc;  // stable site label
    std::string source_loc;
    std::vector<uint32_t> path;  // VFG node ids, source -> sink
    bool high_risk = false;
    LeakPattern pattern = LeakPattern::P1;
    std::vector<std::string> notes;
};

struct LeakReport {
    std::vector<LeakFinding> findings;  // high risk first, then deterministic
    Diagnostics diagnostics;

    size_t count(LeakPattern p) const;
    size_t high_count() const;
};

struct TrackerLimits {
    size_t max_paths_per_sink = 256;
    size_t max_path_len = 512;
};

// Allocation sites whose values reach a key/plaintext parameter of a
// configured function, plus sites that receive decrypted output.
std::set<uint32_t> tag_high_risk(const SirModule& m, const CallGraph& cg,
                                 const ValueFlowGraph& vfg,
                                 const PointsToResult& pts,
                                 const BarrierConfig& cfg,
                                 Diagnostics* diags = nullptr);

LeakReport back_track(const std::vector<TaintSink>& sinks, const SirModule& m,
                      const ValueFlowGraph& vfg, const PointsToResult& pts,
                      const InsensitiveDataTable& table, const BarrierConfig& cfg,
                      const std::set<uint32_t>& high_risk_sites,
                      const TrackerLimits& limits = {},
                      ExecMode mode = ExecMode::Serial);

// Backward data-carrying parents of a node: the relation back_track walks.
// Exposed so tests can enumerate paths independently.
std::vector<uint32_t> data_parents(const ValueFlowGraph& vfg, const SirModule& m,
                                   uint32_t node);

// Report serialization (report.cpp). Byte-identical across runs.
std::string emit_report_json(const SirModule& m, const ValueFlowGraph& vfg,
                             const LeakReport& report);
std::string emit_report_text(const SirModule& m, const ValueFlowGraph& vfg,
                             const LeakReport& report);

const char* sink_kind(const ValueFlowGraph& vfg, const TaintSink& sink);

} // namespace etaint
