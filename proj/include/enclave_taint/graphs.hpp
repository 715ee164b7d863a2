//===- graphs.hpp - call graph and sparse value-flow graph ----------------===//
//
// The VFG has one node per value-defining instruction, one per store/memcpy,
// and parameter/return connector nodes per call. Direct edges follow SSA
// def-use; memory edges connect aliasing stores to loads (and to memcpy
// sources and external-call pointer arguments, which read memory the same
// way). Within a basic block a load takes only the latest preceding
// must-alias store when no call or may-alias write intervenes.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "enclave_taint/points_to.hpp"
#include "enclave_taint/sir.hpp"

namespace etaint {

struct CallEdge {
    uint32_t caller = kNoFunc;
    uint32_t callee = kNoFunc;
    InstrRef site;
};

struct CallGraph {
    uint32_t num_functions = 0;
    std::vector<CallEdge> edges;  // deterministic construction order
    std::vector<std::vector<uint32_t>> out_edges;      // per caller, edge idx
    std::vector<std::vector<InstrRef>> call_sites_of;  // per callee

    // Matches a function by name; absent for names the module never mentions.
    static std::optional<uint32_t> get_node(const SirModule& m,
                                            const std::string& name) {
        uint32_t idx = m.function_index(name);
        if (idx == kNoFunc) return std::nullopt;
        return idx;
    }
};

enum class VfgKind {
    Addr,
    Load,
    Store,
    Gep,
    Copy,
    Phi,
    BinOp,
    UnOp,
    FormalParam,
    ActualParam,
    FormalRet,
    ActualRet,
};

const char* to_string(VfgKind k);

enum class VfgEdgeKind { Direct, Memory, Call, Ret };

const char* to_string(VfgEdgeKind k);

struct VfgNode {
    uint32_t id = 0;
    VfgKind kind = VfgKind::Addr;
    uint32_t func = kNoFunc;  // owner; callee for FormalParam/FormalRet
    InstrRef inst;            // invalid for FormalParam and module-level Addr
    ValueId value = kNoValue;     // value this node defines, if any
    ValueId stored_value = kNoValue;  // Store: value op / memcpy src
    ValueId address = kNoValue;       // Store/Load: address operand
    ValueId arg_value = kNoValue;     // ActualParam
    uint32_t arg_index = 0;           // ActualParam
    bool external_callee = false;     // ActualParam/ActualRet at external calls
    bool is_memcpy = false;
    uint32_t alloc_site = kNoSite;  // set when this node is an allocation
    bool is_constant = false;       // Addr nodes for literals/null
    std::string loc;                // resolved location string
    std::string label;
};

struct VfgHalfEdge {
    uint32_t node = 0;
    VfgEdgeKind kind = VfgEdgeKind::Direct;
};

struct ValueFlowGraph {
    std::vector<VfgNode> nodes;
    std::vector<std::vector<VfgHalfEdge>> succ, pred;
    std::vector<uint32_t> def_node;  // per ValueId

    const VfgNode& node(uint32_t id) const { return nodes[id]; }
    uint32_t get_def_node(ValueId v) const { return def_node[v]; }
    bool has_edge(uint32_t src, uint32_t dst) const {
        for (const auto& e : succ[src])
            if (e.node == dst) return true;
        return false;
    }
    size_t edge_count() const {
        size_t n = 0;
        for (const auto& s : succ) n += s.size();
        return n;
    }
};

CallGraph build_call_graph(const SirModule& m, const PointsToResult& pts);

ValueFlowGraph build_vfg(const SirModule& m, const CallGraph& cg,
                         const PointsToResult& pts);

// Deterministic edge dumps, one line per edge.
std::string dump_cg(const SirModule& m, const CallGraph& cg);
std::string dump_vfg(const ValueFlowGraph& vfg);

} // namespace etaint
