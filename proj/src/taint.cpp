//===- taint.cpp - propagation rules, sink search, closure oracle ---------===//

#include "enclave_taint/taint.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace etaint {

std::string TaintSeed::describe(const SirModule& m) const {
    std::string s = std::string(to_string(pattern)) + " seed ";
    s += value != kNoValue ? m.value_label(value) : "?";
    if (tuple) s += " from " + tuple->str();
    return s;
}

namespace {

class TaintRun {
public:
    TaintRun(const SirModule& m, const ValueFlowGraph& vfg, TaintState& state)
        : m_(m), vfg_(vfg), state_(state) {}

    void run(ValueId seed) {
        taint(seed);
        state_.visited.insert(vfg_.get_def_node(seed));
        while (!queue_.empty()) {
            ValueId v = queue_.front();
            queue_.pop_front();
            for (const VfgHalfEdge& e : vfg_.succ[vfg_.get_def_node(v)]) {
                state_.visited.insert(e.node);
                apply_rule(vfg_.nodes[e.node]);
            }
        }
    }

private:
    bool tainted(ValueId v) const { return state_.tainted.count(v) != 0; }

    void taint(ValueId v) {
        if (v == kNoValue) return;
        if (state_.tainted.insert(v).second) queue_.push_back(v);
    }

    void apply_rule(const VfgNode& n) {
        switch (n.kind) {
        case VfgKind::Load:
            if (tainted(n.address)) taint(n.value);
            break;
        case VfgKind::Copy:
        case VfgKind::Gep:
        case VfgKind::UnOp:
            if (tainted(m_.instr(n.inst).operands[0])) taint(n.value);
            break;
        case VfgKind::BinOp: {
            const SirInstruction& in = m_.instr(n.inst);
            if (in.op == Opcode::Icmp) break;  // comparisons never carry taint
            if (tainted(in.operands[0]) || tainted(in.operands[1])) taint(n.value);
            break;
        }
        case VfgKind::Phi: {
            for (ValueId v : m_.instr(n.inst).operands) {
                if (tainted(v)) {
                    taint(n.value);
                    break;
                }
            }
            break;
        }
        case VfgKind::Store:
            if (tainted(n.stored_value)) taint(n.address);
            break;
        case VfgKind::ActualParam:
            // Copy-style propagation into every resolved callee.
            if (tainted(n.arg_value))
                for (const VfgHalfEdge& e : vfg_.succ[n.id])
                    if (e.kind == VfgEdgeKind::Call)
                        taint(vfg_.nodes[e.node].value);
            break;
        case VfgKind::FormalRet:
            if (tainted(n.stored_value))
                for (const VfgHalfEdge& e : vfg_.succ[n.id])
                    if (e.kind == VfgEdgeKind::Ret)
                        taint(vfg_.nodes[e.node].value);
            break;
        default: break;
        }
    }

    const SirModule& m_;
    const ValueFlowGraph& vfg_;
    TaintState& state_;
    std::deque<ValueId> queue_;
};

} // namespace

std::vector<TaintSink> ptr_taint(const TaintSeed& seed, const SirModule& m,
                                 const ValueFlowGraph& vfg, TaintState& state) {
    state.seeds.push_back(seed);
    TaintRun(m, vfg, state).run(seed.value);
    // Sinks are evaluated at the fixpoint so worklist order cannot matter: a
    // store is a sink iff its destination is tainted and its value is not.
    std::vector<TaintSink> sinks;
    for (const VfgNode& n : vfg.nodes) {
        if (n.kind != VfgKind::Store) continue;
        if (state.tainted.count(n.address) && !state.tainted.count(n.stored_value))
            sinks.push_back({n.id, seed.pattern, seed, n.stored_value, n.loc});
    }
    return sinks;
}

namespace {

// Seeds that feed loads of pointer fields from a shallow-copied struct
// parameter: loads whose address is gep-derived from the parameter at a
// pointer-field index (or the parameter itself when field 0 is a pointer).
std::vector<ValueId> struct_field_seeds(const SirFunction& fn, ValueId param,
                                        const std::vector<bool>& ptr_fields) {
    std::set<ValueId> base_set = {param};   // bitcast closure of the parameter
    std::map<ValueId, int64_t> gep_set;     // gep results + their field index
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& blk : fn.blocks) {
            for (const auto& in : blk.insts) {
                if (in.op == Opcode::Bitcast) {
                    if (base_set.count(in.operands[0]) &&
                        base_set.insert(in.result).second)
                        changed = true;
                    auto it = gep_set.find(in.operands[0]);
                    if (it != gep_set.end() && !gep_set.count(in.result)) {
                        gep_set[in.result] = it->second;
                        changed = true;
                    }
                } else if (in.op == Opcode::Gep) {
                    if (base_set.count(in.operands[0]) && !gep_set.count(in.result)) {
                        gep_set[in.result] = in.imm;
                        changed = true;
                    }
                }
            }
        }
    }
    auto field_is_ptr = [&](int64_t idx) {
        return idx >= 0 && idx < (int64_t)ptr_fields.size() && ptr_fields[idx];
    };
    std::vector<ValueId> seeds;
    for (const auto& blk : fn.blocks) {
        for (const auto& in : blk.insts) {
            if (in.op != Opcode::Load) continue;
            ValueId addr = in.operands[0];
            auto it = gep_set.find(addr);
            if (it != gep_set.end() && field_is_ptr(it->second))
                seeds.push_back(in.result);
            else if (base_set.count(addr) && field_is_ptr(0))
                seeds.push_back(in.result);
        }
    }
    return seeds;
}

} // namespace

std::vector<TaintSink> find_sinks(const std::vector<LeakTuple>& tuples,
                                  const EdlInterface& iface, const SirModule& m,
                                  const CallGraph& cg, const ValueFlowGraph& vfg,
                                  const PointsToResult& pts, ExecMode mode,
                                  Diagnostics* diags) {
    auto diag = [&](const std::string& msg) {
        if (diags) diags->push_back(msg);
    };
    // ActualParam lookup for explicit P3 sinks.
    std::map<std::pair<InstrRef, uint32_t>, uint32_t> actual_param;
    for (const VfgNode& n : vfg.nodes)
        if (n.kind == VfgKind::ActualParam)
            actual_param[{n.inst, n.arg_index}] = n.id;

    std::vector<TaintSeed> seeds;
    std::vector<TaintSink> explicit_sinks;
    uint32_t order = 0;

    for (const LeakTuple& tuple : tuples) {
        uint32_t fidx = m.function_index(tuple.funcname);
        if (fidx == kNoFunc) {
            diag("EDL function '" + tuple.funcname +
                 "' is not present in the module; tuple " + tuple.str() +
                 " skipped");
            continue;
        }
        const SirFunction& fn = m.functions[fidx];
        switch (tuple.pattern) {
        case LeakPattern::P1:
        case LeakPattern::P2: {
            if (!fn.defined) {
                diag("ECALL '" + tuple.funcname + "' has no definition; tuple " +
                     tuple.str() + " skipped");
                break;
            }
            if (tuple.index < 0 || (size_t)tuple.index >= fn.params.size()) {
                diag("ECALL '" + tuple.funcname + "' has no parameter " +
                     std::to_string(tuple.index) + "; tuple skipped");
                break;
            }
            const EdlFunction* ef = iface.find(tuple.funcname);
            const EdlParam* ep =
                ef && (size_t)tuple.index < ef->params.size()
                    ? &ef->params[tuple.index]
                    : nullptr;
            bool struct_case = tuple.pattern == LeakPattern::P2 && ep &&
                               ep->direction == PtrDirection::In;
            if (struct_case) {
                const EdlStructDef* sd = iface.find_struct(ep->base_type);
                std::vector<bool> ptr_fields;
                if (sd)
                    for (const auto& f : sd->fields)
                        ptr_fields.push_back(f.is_pointer);
                for (ValueId v : struct_field_seeds(fn, fn.params[tuple.index],
                                                    ptr_fields))
                    seeds.push_back({v, tuple.pattern, tuple, kNoSite, order++});
            } else {
                ValueId param = fn.params[tuple.index];
                if (m.values[param].shape == Shape::Val) {
                    diag("parameter " + m.value_label(param) +
                         " is not pointer-shaped; tuple " + tuple.str() +
                         " skipped");
                    break;
                }
                seeds.push_back({param, tuple.pattern, tuple, kNoSite, order++});
            }
            break;
        }
        case LeakPattern::P3: {
            const auto& sites = cg.call_sites_of[fidx];
            if (sites.empty())
                diag("OCALL '" + tuple.funcname + "' is never called; tuple " +
                     tuple.str() + " skipped");
            for (const InstrRef& ref : sites) {
                const SirInstruction& in = m.instr(ref);
                if ((size_t)tuple.index >= in.operands.size()) continue;
                auto it = actual_param.find({ref, (uint32_t)tuple.index});
                if (it == actual_param.end()) continue;
                TaintSeed seed{in.operands[tuple.index], LeakPattern::P3, tuple,
                               kNoSite, order++};
                explicit_sinks.push_back({it->second, LeakPattern::P3, seed,
                                          in.operands[tuple.index],
                                          vfg.nodes[it->second].loc});
            }
            break;
        }
        case LeakPattern::P4: {
            const auto& sites = cg.call_sites_of[fidx];
            if (sites.empty())
                diag("OCALL '" + tuple.funcname + "' is never called; tuple " +
                     tuple.str() + " skipped");
            for (const InstrRef& ref : sites) {
                const SirInstruction& in = m.instr(ref);
                if (in.result == kNoValue) continue;
                seeds.push_back({in.result, LeakPattern::P4, tuple, kNoSite,
                                 order++});
            }
            break;
        }
        case LeakPattern::P5: break;  // never produced by the EDL frontend
        }
    }
    for (ValueId v : null_candidates(m, pts))
        seeds.push_back({v, LeakPattern::P5, std::nullopt, pts.site_of(v),
                         order++});

    // Each seed's taint run is independent; buckets keep the merge
    // deterministic regardless of thread scheduling.
    std::vector<std::vector<TaintSink>> buckets(seeds.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (mode == ExecMode::Parallel)
#endif
    for (int64_t i = 0; i < (int64_t)seeds.size(); ++i) {
        TaintState state;
        buckets[i] = ptr_taint(seeds[i], m, vfg, state);
    }
    (void)mode;

    std::vector<TaintSink> sinks;
    for (auto& b : buckets)
        for (auto& s : b) sinks.push_back(std::move(s));
    for (auto& s : explicit_sinks) sinks.push_back(std::move(s));
    std::sort(sinks.begin(), sinks.end(), [](const TaintSink& a, const TaintSink& b) {
        if (a.pattern != b.pattern) return a.pattern < b.pattern;
        if (a.seed.order != b.seed.order) return a.seed.order < b.seed.order;
        return a.node < b.node;
    });
    return sinks;
}

OracleResult taint_closure_oracle(ValueId seed, const SirModule& m,
                                  const PointsToResult* pts,
                                  size_t instruction_budget) {
    size_t count = 0;
    for (const auto& fn : m.functions)
        for (const auto& blk : fn.blocks) count += blk.insts.size();
    if (count > instruction_budget)
        throw std::runtime_error("taint_closure_oracle: instruction budget exceeded");

    OracleResult r;
    r.tainted.insert(seed);
    auto t = [&](ValueId v) { return r.tainted.count(v) != 0; };
    bool changed = true;
    while (changed) {
        changed = false;
        auto add = [&](ValueId v) {
            if (v != kNoValue && r.tainted.insert(v).second) changed = true;
        };
        for (uint32_t fi = 0; fi < m.functions.size(); ++fi) {
            const SirFunction& fn = m.functions[fi];
            for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
                for (uint32_t i = 0; i < fn.blocks[b].insts.size(); ++i) {
                    const SirInstruction& in = fn.blocks[b].insts[i];
                    switch (in.op) {
                    case Opcode::Load:
                        if (t(in.operands[0])) add(in.result);
                        break;
                    case Opcode::Store:
                        if (t(in.operands[0])) add(in.operands[1]);
                        break;
                    case Opcode::Memcpy:
                        if (t(in.operands[1])) add(in.operands[0]);
                        break;
                    case Opcode::Bitcast:
                    case Opcode::Gep:
                    case Opcode::UnOp:
                        if (t(in.operands[0])) add(in.result);
                        break;
                    case Opcode::BinOp:
                        if (t(in.operands[0]) || t(in.operands[1])) add(in.result);
                        break;
                    case Opcode::Phi:
                        for (ValueId v : in.operands)
                            if (t(v)) {
                                add(in.result);
                                break;
                            }
                        break;
                    case Opcode::Call: {
                        std::vector<uint32_t> targets;
                        if (in.callee_fn != kNoFunc) {
                            targets.push_back(in.callee_fn);
                        } else if (pts) {
                            auto it = pts->resolved_callees.find({fi, b, i});
                            if (it != pts->resolved_callees.end())
                                targets = it->second;
                        }
                        for (uint32_t callee : targets) {
                            const SirFunction& cf = m.functions[callee];
                            if (!cf.defined) continue;
                            for (size_t a = 0;
                                 a < in.operands.size() && a < cf.params.size(); ++a)
                                if (t(in.operands[a])) add(cf.params[a]);
                            if (in.result != kNoValue) {
                                for (const auto& cb : cf.blocks)
                                    for (const auto& ci : cb.insts)
                                        if (ci.op == Opcode::Ret &&
                                            !ci.operands.empty() &&
                                            t(ci.operands[0]))
                                            add(in.result);
                            }
                        }
                        break;
                    }
                    default: break;
                    }
                }
            }
        }
    }
    for (uint32_t fi = 0; fi < m.functions.size(); ++fi) {
        const SirFunction& fn = m.functions[fi];
        for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
            for (uint32_t i = 0; i < fn.blocks[b].insts.size(); ++i) {
                const SirInstruction& in = fn.blocks[b].insts[i];
                if (in.op == Opcode::Store) {
                    if (t(in.operands[1]) && !t(in.operands[0]))
                        r.sinks.insert({fi, b, i});
                } else if (in.op == Opcode::Memcpy) {
                    if (t(in.operands[0]) && !t(in.operands[1]))
                        r.sinks.insert({fi, b, i});
                }
            }
        }
    }
    return r;
}

std::set<InstrRef> sink_instrs(const ValueFlowGraph& vfg,
                               const std::vector<TaintSink>& sinks) {
    std::set<InstrRef> refs;
    for (const TaintSink& s : sinks) refs.insert(vfg.nodes[s.node].inst);
    return refs;
}

std::string dump_sinks(const SirModule& m, const ValueFlowGraph& vfg,
                       const std::vector<TaintSink>& sinks) {
    std::ostringstream out;
    for (const TaintSink& s : sinks) {
        const VfgNode& n = vfg.nodes[s.node];
        std::string func = n.func != kNoFunc ? m.functions[n.func].name : "?";
        out << to_string(s.pattern) << " " << func << " " << s.loc << " n" << s.node
            << "\n";
    }
    return out.str();
}

} // namespace etaint
