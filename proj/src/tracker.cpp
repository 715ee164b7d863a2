//===- tracker.cpp - backward leak tracking with barriers ------------------===//

#include "enclave_taint/tracker.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace etaint {

BarrierConfig BarrierConfig::defaults() {
    BarrierConfig cfg;
    cfg.barriers = {"encrypt",
                    "decrypt",
                    "seal",
                    "unseal",
                    "aes_*",
                    "sgx_rijndael128GCM_encrypt",
                    "sgx_rijndael128GCM_decrypt",
                    "sgx_seal_data",
                    "sgx_unseal_data"};
    cfg.high_risk = {
        {"sgx_rijndael128GCM_encrypt", 0, HighRiskRole::Key},
        {"sgx_rijndael128GCM_encrypt", 1, HighRiskRole::Plaintext},
        {"sgx_rijndael128GCM_decrypt", 0, HighRiskRole::Key},
        {"sgx_rijndael128GCM_decrypt", 3, HighRiskRole::Decrypted},
        {"sgx_seal_data", 3, HighRiskRole::Plaintext},
        {"sgx_unseal_data", 3, HighRiskRole::Decrypted},
        {"encrypt", 0, HighRiskRole::Key},
        {"encrypt", 1, HighRiskRole::Plaintext},
        {"decrypt", 0, HighRiskRole::Key},
        {"decrypt", kReturnIndex, HighRiskRole::Decrypted},
        {"seal", 0, HighRiskRole::Plaintext},
        {"unseal", kReturnIndex, HighRiskRole::Decrypted},
        {"aes_encrypt", 0, HighRiskRole::Key},
        {"aes_encrypt", 1, HighRiskRole::Plaintext},
        {"aes_decrypt", 0, HighRiskRole::Key},
        {"aes_decrypt", kReturnIndex, HighRiskRole::Decrypted},
    };
    return cfg;
}

bool BarrierConfig::is_barrier(const std::string& name) const {
    for (const std::string& pat : barriers) {
        if (!pat.empty() && pat.back() == '*') {
            if (name.compare(0, pat.size() - 1, pat, 0, pat.size() - 1) == 0)
                return true;
        } else if (name == pat) {
            return true;
        }
    }
    return false;
}

size_t LeakReport::count(LeakPattern p) const {
    size_t n = 0;
    for (const auto& f : findings)
        if (f.pattern == p) ++n;
    return n;
}

size_t LeakReport::high_count() const {
    size_t n = 0;
    for (const auto& f : findings)
        if (f.high_risk) ++n;
    return n;
}

std::vector<uint32_t> data_parents(const ValueFlowGraph& vfg, const SirModule& m,
                                   uint32_t node) {
    const VfgNode& n = vfg.nodes[node];
    std::vector<uint32_t> parents;
    auto def = [&](ValueId v) {
        if (v != kNoValue) parents.push_back(vfg.get_def_node(v));
    };
    auto memory_preds = [&] {
        for (const VfgHalfEdge& e : vfg.pred[node])
            if (e.kind == VfgEdgeKind::Memory) parents.push_back(e.node);
    };
    switch (n.kind) {
    case VfgKind::Load:
        def(n.address);
        memory_preds();
        break;
    case VfgKind::Store:
        def(n.stored_value);  // for memcpy this is the source pointer
        if (n.is_memcpy) memory_preds();
        break;
    case VfgKind::Gep:
    case VfgKind::Copy:
    case VfgKind::UnOp:
        def(m.instr(n.inst).operands[0]);
        break;
    case VfgKind::BinOp:
    case VfgKind::Phi:
        for (ValueId v : m.instr(n.inst).operands) def(v);
        break;
    case VfgKind::FormalParam:
        for (const VfgHalfEdge& e : vfg.pred[node])
            if (e.kind == VfgEdgeKind::Call) parents.push_back(e.node);
        break;
    case VfgKind::ActualParam:
        // Data passed to an external callee by pointer escapes by content;
        // the pointer value itself is marshalled, not leaked.
        if (n.external_callee && m.values[n.arg_value].shape != Shape::Val)
            memory_preds();
        else
            def(n.arg_value);
        break;
    case VfgKind::ActualRet:
        for (const VfgHalfEdge& e : vfg.pred[node])
            if (e.kind == VfgEdgeKind::Ret) parents.push_back(e.node);
        break;
    case VfgKind::FormalRet:
        def(n.stored_value);
        break;
    case VfgKind::Addr: break;  // leaf
    }
    return parents;
}

namespace {

struct SinkTrack {
    std::vector<LeakFinding> findings;
    std::vector<std::string> diags;
};

class BackTracker {
public:
    BackTracker(const SirModule& m, const ValueFlowGraph& vfg,
                const InsensitiveDataTable& table, const BarrierConfig& cfg,
                const std::set<uint32_t>& high_sites, const TrackerLimits& limits,
                const PointsToResult& pts)
        : m_(m), vfg_(vfg), table_(table), cfg_(cfg), high_sites_(high_sites),
          limits_(limits), pts_(pts) {}

    SinkTrack track(const TaintSink& sink) {
        out_ = {};
        sink_ = &sink;
        path_.clear();
        visited_.clear();
        truncated_paths_ = truncated_len_ = false;
        const VfgNode& node = vfg_.nodes[sink.node];
        uint32_t start = node.kind == VfgKind::ActualParam
                             ? sink.node
                             : vfg_.get_def_node(sink.stored_value);
        visit(start);
        if (truncated_paths_)
            out_.diags.push_back("sink n" + std::to_string(sink.node) + " (" +
                                 sink.loc + "): path limit (" +
                                 std::to_string(limits_.max_paths_per_sink) +
                                 ") reached; findings truncated");
        if (truncated_len_)
            out_.diags.push_back("sink n" + std::to_string(sink.node) + " (" +
                                 sink.loc + "): path length limit (" +
                                 std::to_string(limits_.max_path_len) +
                                 ") reached; deeper flows not explored");
        return std::move(out_);
    }

private:
    bool is_barrier_node(const VfgNode& n) const {
        return n.func != kNoFunc && cfg_.is_barrier(m_.functions[n.func].name);
    }

    void report(uint32_t alloc_node) {
        const VfgNode& n = vfg_.nodes[alloc_node];
        LeakFinding f;
        f.sink = *sink_;
        f.pattern = sink_->pattern;
        f.source_site = n.alloc_site;
        const AllocationSite& site = pts_.sites[n.alloc_site];
        f.source_alloc = site.label;
        f.source_loc = site.loc;
        f.high_risk = high_sites_.count(n.alloc_site) != 0;
        // Path runs source -> sink: the allocation, then the DFS stack
        // unwound, then the sink's own node.
        f.path.push_back(alloc_node);
        for (auto it = path_.rbegin(); it != path_.rend(); ++it)
            f.path.push_back(*it);
        if (vfg_.nodes[sink_->node].kind != VfgKind::ActualParam)
            f.path.push_back(sink_->node);
        if (sink_->pattern == LeakPattern::P5)
            f.notes.push_back("unchecked-malloc");
        out_.findings.push_back(std::move(f));
    }

    void visit(uint32_t node) {
        if (out_.findings.size() >= limits_.max_paths_per_sink) {
            truncated_paths_ = true;
            return;
        }
        const VfgNode& n = vfg_.nodes[node];
        if (n.alloc_site != kNoSite) {
            // A variable allocation: report unless annotated insensitive.
            if (!table_.contains(pts_.sites[n.alloc_site].origin_value))
                report(node);
            return;
        }
        if (is_barrier_node(n)) return;
        if (path_.size() >= limits_.max_path_len) {
            truncated_len_ = true;
            return;
        }
        path_.push_back(node);
        visited_.insert(node);
        for (uint32_t parent : data_parents(vfg_, m_, node))
            if (!visited_.count(parent)) visit(parent);
        // Unmark so every simple path is enumerated.
        path_.pop_back();
        visited_.erase(node);
    }

    const SirModule& m_;
    const ValueFlowGraph& vfg_;
    const InsensitiveDataTable& table_;
    const BarrierConfig& cfg_;
    const std::set<uint32_t>& high_sites_;
    TrackerLimits limits_;
    const PointsToResult& pts_;

    const TaintSink* sink_ = nullptr;
    std::vector<uint32_t> path_;
    std::set<uint32_t> visited_;
    SinkTrack out_;
    bool truncated_paths_ = false, truncated_len_ = false;
};

} // namespace

std::set<uint32_t> tag_high_risk(const SirModule& m, const CallGraph& cg,
                                 const ValueFlowGraph& vfg,
                                 const PointsToResult& pts,
                                 const BarrierConfig& cfg, Diagnostics* diags) {
    std::set<uint32_t> tagged;
    std::set<std::string> absent;

    auto backward_collect = [&](uint32_t start) {
        std::set<uint32_t> seen = {start};
        std::vector<uint32_t> work = {start};
        while (!work.empty()) {
            uint32_t id = work.back();
            work.pop_back();
            const VfgNode& n = vfg.nodes[id];
            if (n.alloc_site != kNoSite) tagged.insert(n.alloc_site);
            for (const VfgHalfEdge& e : vfg.pred[id])
                if (seen.insert(e.node).second) work.push_back(e.node);
        }
    };
    auto forward_tag_stores = [&](ValueId seed_value) {
        TaintState state;
        TaintSeed seed{seed_value, LeakPattern::P1, std::nullopt, kNoSite, 0};
        ptr_taint(seed, m, vfg, state);
        for (uint32_t s : pts.pts(seed_value)) tagged.insert(s);
        for (const VfgNode& n : vfg.nodes) {
            if (n.kind != VfgKind::Store) continue;
            if (!state.tainted.count(n.stored_value)) continue;
            for (uint32_t s : pts.pts(n.address)) tagged.insert(s);
        }
    };

    for (const HighRiskSpec& spec : cfg.high_risk) {
        uint32_t fidx = m.function_index(spec.function);
        if (fidx == kNoFunc) {
            absent.insert(spec.function);
            continue;
        }
        for (const InstrRef& ref : cg.call_sites_of[fidx]) {
            const SirInstruction& in = m.instr(ref);
            if (spec.param == kReturnIndex) {
                if (spec.role == HighRiskRole::Decrypted && in.result != kNoValue)
                    forward_tag_stores(in.result);
                continue;
            }
            if ((size_t)spec.param >= in.operands.size()) continue;
            ValueId arg = in.operands[spec.param];
            if (spec.role == HighRiskRole::Decrypted) {
                forward_tag_stores(arg);
            } else {
                // Key/plaintext inputs: every allocation flowing into this
                // argument position holds high-risk material.
                uint32_t ap = UINT32_MAX;
                for (const VfgNode& n : vfg.nodes) {
                    if (n.kind == VfgKind::ActualParam && n.inst == ref &&
                        n.arg_index == (uint32_t)spec.param) {
                        ap = n.id;
                        break;
                    }
                }
                if (ap != UINT32_MAX) backward_collect(ap);
            }
        }
    }
    if (diags && !absent.empty()) {
        std::string msg = "high-risk config functions not referenced:";
        for (const auto& name : absent) msg += " " + name;
        diags->push_back(msg);
    }
    return tagged;
}

LeakReport back_track(const std::vector<TaintSink>& sinks, const SirModule& m,
                      const ValueFlowGraph& vfg, const PointsToResult& pts,
                      const InsensitiveDataTable& table, const BarrierConfig& cfg,
                      const std::set<uint32_t>& high_risk_sites,
                      const TrackerLimits& limits, ExecMode mode) {
    std::vector<SinkTrack> buckets(sinks.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (mode == ExecMode::Parallel)
#endif
    for (int64_t i = 0; i < (int64_t)sinks.size(); ++i) {
        BackTracker tracker(m, vfg, table, cfg, high_risk_sites, limits, pts);
        buckets[i] = tracker.track(sinks[i]);
    }
    (void)mode;

    LeakReport report;
    for (auto& b : buckets) {
        for (auto& f : b.findings) report.findings.push_back(std::move(f));
        for (auto& d : b.diags) report.diagnostics.push_back(std::move(d));
    }
    std::stable_sort(report.findings.begin(), report.findings.end(),
                     [](const LeakFinding& a, const LeakFinding& b) {
                         if (a.high_risk != b.high_risk) return a.high_risk;
                         if (a.pattern != b.pattern) return a.pattern < b.pattern;
                         if (a.sink.loc != b.sink.loc) return a.sink.loc < b.sink.loc;
                         if (a.source_loc != b.source_loc)
                             return a.source_loc < b.source_loc;
                         return a.path < b.path;
                     });
    return report;
}

} // namespace etaint
