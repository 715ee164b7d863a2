//===- taint.hpp - forward pointer tainting and sink discovery ------------===//
//
// Seeds (ECALL out/user_check parameters, OCALL return values, unchecked
// malloc results) are tainted and propagated over the VFG: loads, bitcasts,
// geps and unary ops copy taint from their source; stores taint their
// destination address when the stored value is tainted; binary ops and phis
// taint their result when any operand is. A store whose destination is
// tainted but whose value is not escapes data across the trust boundary and
// becomes a sink. OCALL in-pointer arguments are explicit sinks.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "enclave_taint/edl.hpp"
#include "enclave_taint/graphs.hpp"
#include "enclave_taint/points_to.hpp"
#include "enclave_taint/sir.hpp"

namespace etaint {

// Runtime switch between the serial reference loops and the OpenMP kernels.
// Both produce byte-identical results.
enum class ExecMode { Serial, Parallel };

struct TaintSeed {
    ValueId value = kNoValue;
    LeakPattern pattern = LeakPattern::P1;
    std::optional<LeakTuple> tuple;  // origin for P1-P4
    uint32_t malloc_site = kNoSite;  // origin for P5
    uint32_t order = 0;              // deterministic merge key

    std::string describe(const SirModule& m) const;
};

struct TaintState {
    std::set<ValueId> tainted;
    std::set<uint32_t> visited;  // VFG nodes where rules were applied
    std::vector<TaintSeed> seeds;
};

struct TaintSink {
    uint32_t node = 0;  // Store node, or ActualParam node for P3
    LeakPattern pattern = LeakPattern::P1;
    TaintSeed seed;
    ValueId stored_value = kNoValue;  // value whose contents escape
    std::string loc;
};

// One taint run from `seed` to fixpoint. Returns this run's sinks; the
// tainted set and visited nodes accumulate in `state`.
std::vector<TaintSink> ptr_taint(const TaintSeed& seed, const SirModule& m,
                                 const ValueFlowGraph& vfg, TaintState& state);

// Runs the full sink search: taints every P1/P2/P4 seed derived from the
// tuple list, collects P3 argument sinks at OCALL call sites, and taints
// every unchecked malloc result (P5). Results are sorted by
// (pattern, seed order, node id) so serial and parallel runs agree.
std::vector<TaintSink> find_sinks(const std::vector<LeakTuple>& tuples,
                                  const EdlInterface& iface, const SirModule& m,
                                  const CallGraph& cg, const ValueFlowGraph& vfg,
                                  const PointsToResult& pts, ExecMode mode,
                                  Diagnostics* diags = nullptr);

// Differential-testing oracle: repeatedly scans every instruction applying
// the propagation rules until no change, ignoring the VFG entirely. Calls are
// resolved through the (optional) points-to result for indirect targets.
struct OracleResult {
    std::set<ValueId> tainted;
    std::set<InstrRef> sinks;
};
OracleResult taint_closure_oracle(ValueId seed, const SirModule& m,
                                  const PointsToResult* pts = nullptr,
                                  size_t instruction_budget = 200);

// Maps a taint run's sinks onto instruction refs for oracle comparison.
std::set<InstrRef> sink_instrs(const ValueFlowGraph& vfg,
                               const std::vector<TaintSink>& sinks);

std::string dump_sinks(const SirModule& m, const ValueFlowGraph& vfg,
                       const std::vector<TaintSink>& sinks);

} // namespace etaint
