//===- graphs.cpp - CG and VFG construction --------------------------------===//

#include "enclave_taint/graphs.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace etaint {

const char* to_string(VfgKind k) {
    switch (k) {
    case VfgKind::Addr: return "addr";
    case VfgKind::Load: return "load";
    case VfgKind::Store: return "store";
    case VfgKind::Gep: return "gep";
    case VfgKind::Copy: return "copy";
    case VfgKind::Phi: return "phi";
    case VfgKind::BinOp: return "binop";
    case VfgKind::UnOp: return "unop";
    case VfgKind::FormalParam: return "formal-param";
    case VfgKind::ActualParam: return "actual-param";
    case VfgKind::FormalRet: return "formal-ret";
    case VfgKind::ActualRet: return "actual-ret";
    }
    return "?";
}

const char* to_string(VfgEdgeKind k) {
    switch (k) {
    case VfgEdgeKind::Direct: return "direct";
    case VfgEdgeKind::Memory: return "memory";
    case VfgEdgeKind::Call: return "call";
    case VfgEdgeKind::Ret: return "ret";
    }
    return "?";
}

CallGraph build_call_graph(const SirModule& m, const PointsToResult& pts) {
    CallGraph cg;
    cg.num_functions = (uint32_t)m.functions.size();
    cg.out_edges.resize(m.functions.size());
    cg.call_sites_of.resize(m.functions.size());
    for (uint32_t fi = 0; fi < m.functions.size(); ++fi) {
        const SirFunction& fn = m.functions[fi];
        for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
            for (uint32_t i = 0; i < fn.blocks[b].insts.size(); ++i) {
                const SirInstruction& in = fn.blocks[b].insts[i];
                if (in.op != Opcode::Call) continue;
                InstrRef ref{fi, b, i};
                std::vector<uint32_t> targets;
                if (in.callee_fn != kNoFunc) {
                    targets.push_back(in.callee_fn);
                } else {
                    auto it = pts.resolved_callees.find(ref);
                    if (it != pts.resolved_callees.end()) targets = it->second;
                }
                for (uint32_t callee : targets) {
                    cg.out_edges[fi].push_back((uint32_t)cg.edges.size());
                    cg.edges.push_back({fi, callee, ref});
                    cg.call_sites_of[callee].push_back(ref);
                }
            }
        }
    }
    return cg;
}

namespace {

class VfgBuilder {
public:
    VfgBuilder(const SirModule& m, const CallGraph& cg, const PointsToResult& pts)
        : m_(m), cg_(cg), pts_(pts) {}

    ValueFlowGraph build() {
        g_.def_node.assign(m_.values.size(), UINT32_MAX);
        create_nodes();
        g_.succ.resize(g_.nodes.size());
        g_.pred.resize(g_.nodes.size());
        add_direct_edges();
        add_memory_edges();
        return std::move(g_);
    }

private:
    uint32_t add_node(VfgNode n) {
        n.id = (uint32_t)g_.nodes.size();
        if (n.value != kNoValue) g_.def_node[n.value] = n.id;
        g_.nodes.push_back(std::move(n));
        return (uint32_t)g_.nodes.size() - 1;
    }

    void add_edge(uint32_t src, uint32_t dst, VfgEdgeKind kind) {
        if (src == dst) return;
        g_.succ[src].push_back({dst, kind});
        g_.pred[dst].push_back({src, kind});
    }

    void ensure_const_node(ValueId v) {
        if (g_.def_node[v] != UINT32_MAX) return;
        const ValueInfo& vi = m_.values[v];
        if (vi.kind != ValueKind::ConstInt && vi.kind != ValueKind::ConstNull)
            return;
        VfgNode n;
        n.kind = VfgKind::Addr;
        n.value = v;
        n.is_constant = true;
        n.loc = "const";
        n.label = "addr " + vi.name;
        add_node(std::move(n));
    }

    bool callee_is_external(const SirInstruction& in) const {
        return in.callee_fn != kNoFunc && !m_.functions[in.callee_fn].defined;
    }

    void create_nodes() {
        for (ValueId g : m_.globals) {
            VfgNode n;
            n.kind = VfgKind::Addr;
            n.value = g;
            n.alloc_site = pts_.site_of(g);
            n.loc = m_.values[g].name;
            n.label = "addr " + m_.values[g].name;
            add_node(std::move(n));
        }
        for (ValueId v = 0; v < m_.values.size(); ++v) {
            if (m_.values[v].kind != ValueKind::Function) continue;
            VfgNode n;
            n.kind = VfgKind::Addr;
            n.value = v;
            n.loc = m_.values[v].name;
            n.label = "addr " + m_.values[v].name;
            add_node(std::move(n));
        }
        for (uint32_t fi = 0; fi < m_.functions.size(); ++fi) {
            const SirFunction& fn = m_.functions[fi];
            if (!fn.defined) continue;
            for (uint32_t p = 0; p < fn.params.size(); ++p) {
                VfgNode n;
                n.kind = VfgKind::FormalParam;
                n.func = fi;
                n.value = fn.params[p];
                n.arg_index = p;
                n.loc = fn.name + ":" + m_.values[fn.params[p]].name;
                n.label = "formal-param " + m_.value_label(fn.params[p]);
                add_node(std::move(n));
            }
            for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
                for (uint32_t i = 0; i < fn.blocks[b].insts.size(); ++i) {
                    const SirInstruction& in = fn.blocks[b].insts[i];
                    InstrRef ref{fi, b, i};
                    for (ValueId op : in.operands) ensure_const_node(op);
                    if (in.callee_value != kNoValue) ensure_const_node(in.callee_value);
                    std::string loc = m_.loc_str(ref);
                    switch (in.op) {
                    case Opcode::Alloca: {
                        VfgNode n;
                        n.kind = VfgKind::Addr;
                        n.func = fi;
                        n.inst = ref;
                        n.value = in.result;
                        n.alloc_site = pts_.site_of(in.result);
                        n.loc = loc;
                        n.label = "addr " + m_.value_label(in.result);
                        add_node(std::move(n));
                        break;
                    }
                    case Opcode::Load: {
                        VfgNode n;
                        n.kind = VfgKind::Load;
                        n.func = fi;
                        n.inst = ref;
                        n.value = in.result;
                        n.address = in.operands[0];
                        n.loc = loc;
                        n.label = "load " + m_.value_label(in.result);
                        add_node(std::move(n));
                        break;
                    }
                    case Opcode::Store:
                    case Opcode::Memcpy: {
                        VfgNode n;
                        n.kind = VfgKind::Store;
                        n.func = fi;
                        n.inst = ref;
                        n.is_memcpy = in.op == Opcode::Memcpy;
                        n.stored_value =
                            n.is_memcpy ? in.operands[1] : in.operands[0];
                        n.address = n.is_memcpy ? in.operands[0] : in.operands[1];
                        n.loc = loc;
                        n.label = std::string(n.is_memcpy ? "memcpy " : "store ") +
                                  fn.name + ":#" + std::to_string(in.index_in_func);
                        store_nodes_[ref] = add_node(std::move(n));
                        break;
                    }
                    case Opcode::Gep:
                    case Opcode::Bitcast:
                    case Opcode::Phi:
                    case Opcode::BinOp:
                    case Opcode::Icmp:
                    case Opcode::UnOp: {
                        VfgNode n;
                        switch (in.op) {
                        case Opcode::Gep: n.kind = VfgKind::Gep; break;
                        case Opcode::Bitcast: n.kind = VfgKind::Copy; break;
                        case Opcode::Phi: n.kind = VfgKind::Phi; break;
                        case Opcode::UnOp: n.kind = VfgKind::UnOp; break;
                        default: n.kind = VfgKind::BinOp; break;
                        }
                        n.func = fi;
                        n.inst = ref;
                        n.value = in.result;
                        n.loc = loc;
                        n.label = std::string(to_string(n.kind)) + " " +
                                  m_.value_label(in.result);
                        add_node(std::move(n));
                        break;
                    }
                    case Opcode::Call: {
                        for (uint32_t a = 0; a < in.operands.size(); ++a) {
                            VfgNode n;
                            n.kind = VfgKind::ActualParam;
                            n.func = fi;
                            n.inst = ref;
                            n.arg_index = a;
                            n.arg_value = in.operands[a];
                            n.external_callee = callee_is_external(in);
                            n.loc = loc;
                            n.label = "actual-param#" + std::to_string(a) + " " +
                                      fn.name + ":#" +
                                      std::to_string(in.index_in_func);
                            uint32_t id = add_node(std::move(n));
                            actual_params_[{ref, a}] = id;
                        }
                        if (in.result != kNoValue) {
                            VfgNode n;
                            n.kind = VfgKind::ActualRet;
                            n.func = fi;
                            n.inst = ref;
                            n.value = in.result;
                            n.external_callee = callee_is_external(in);
                            n.alloc_site = pts_.site_of(in.result);
                            if (n.alloc_site != kNoSite &&
                                !pts_.sites[n.alloc_site].from_malloc)
                                n.alloc_site = kNoSite;  // OCALL memory is outside
                            n.loc = loc;
                            n.label = "actual-ret " + m_.value_label(in.result);
                            add_node(std::move(n));
                        }
                        break;
                    }
                    case Opcode::Ret: {
                        if (in.operands.empty()) break;
                        VfgNode n;
                        n.kind = VfgKind::FormalRet;
                        n.func = fi;
                        n.inst = ref;
                        n.stored_value = in.operands[0];
                        n.loc = loc;
                        n.label = "formal-ret " + fn.name;
                        uint32_t id = add_node(std::move(n));
                        formal_rets_[fi].push_back(id);
                        break;
                    }
                    default: break;
                    }
                }
            }
        }
    }

    std::vector<uint32_t> call_targets(const InstrRef& ref,
                                       const SirInstruction& in) const {
        if (in.callee_fn != kNoFunc) return {in.callee_fn};
        auto it = pts_.resolved_callees.find(ref);
        if (it != pts_.resolved_callees.end()) return it->second;
        return {};
    }

    void add_direct_edges() {
        for (uint32_t fi = 0; fi < m_.functions.size(); ++fi) {
            const SirFunction& fn = m_.functions[fi];
            if (!fn.defined) continue;
            for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
                for (uint32_t i = 0; i < fn.blocks[b].insts.size(); ++i) {
                    const SirInstruction& in = fn.blocks[b].insts[i];
                    InstrRef ref{fi, b, i};
                    switch (in.op) {
                    case Opcode::Call: {
                        std::vector<uint32_t> targets = call_targets(ref, in);
                        for (uint32_t a = 0; a < in.operands.size(); ++a) {
                            uint32_t ap = actual_params_.at({ref, a});
                            add_edge(def_of(in.operands[a]), ap,
                                     VfgEdgeKind::Direct);
                            for (uint32_t callee : targets) {
                                const SirFunction& cf = m_.functions[callee];
                                if (!cf.defined || a >= cf.params.size()) continue;
                                add_edge(ap, def_of(cf.params[a]),
                                         VfgEdgeKind::Call);
                            }
                        }
                        if (in.result != kNoValue) {
                            uint32_t ar = g_.def_node[in.result];
                            if (in.callee_value != kNoValue)
                                add_edge(def_of(in.callee_value), ar,
                                         VfgEdgeKind::Direct);
                            for (uint32_t callee : targets) {
                                auto it = formal_rets_.find(callee);
                                if (it == formal_rets_.end()) continue;
                                for (uint32_t fr : it->second)
                                    add_edge(fr, ar, VfgEdgeKind::Ret);
                            }
                        }
                        break;
                    }
                    case Opcode::Ret: {
                        if (in.operands.empty()) break;
                        uint32_t fr = find_formal_ret(fi, ref);
                        add_edge(def_of(in.operands[0]), fr, VfgEdgeKind::Direct);
                        break;
                    }
                    case Opcode::Annotate:
                    case Opcode::Br:
                    case Opcode::CondBr:
                    case Opcode::Alloca: break;
                    default: {
                        uint32_t node = node_of_inst(in, ref);
                        for (ValueId op : in.operands)
                            add_edge(def_of(op), node, VfgEdgeKind::Direct);
                        break;
                    }
                    }
                }
            }
        }
    }

    uint32_t def_of(ValueId v) const {
        uint32_t n = g_.def_node[v];
        assert(n != UINT32_MAX && "value has no def node");
        return n;
    }

    uint32_t node_of_inst(const SirInstruction& in, const InstrRef& ref) const {
        if (in.result != kNoValue) return g_.def_node[in.result];
        // Store/memcpy nodes are found by scanning; cache them instead.
        auto it = store_nodes_.find(ref);
        assert(it != store_nodes_.end());
        return it->second;
    }

    uint32_t find_formal_ret(uint32_t fi, const InstrRef& ref) const {
        for (uint32_t id : formal_rets_.at(fi))
            if (g_.nodes[id].inst == ref) return id;
        assert(false && "missing formal-ret node");
        return 0;
    }

    // Memory readers: loads, memcpy sources, and pointer arguments of
    // external calls (the callee reads the buffer outside the module).
    void add_memory_edges() {
        // Index writers by the sites their destination may point to.
        std::vector<uint32_t> writer_nodes;
        for (uint32_t id = 0; id < g_.nodes.size(); ++id)
            if (g_.nodes[id].kind == VfgKind::Store) writer_nodes.push_back(id);
        std::vector<std::vector<uint32_t>> writers_by_site(pts_.sites.size());
        for (uint32_t id : writer_nodes)
            for (uint32_t s : pts_.pts(g_.nodes[id].address))
                writers_by_site[s].push_back(id);

        for (uint32_t id = 0; id < g_.nodes.size(); ++id) {
            const VfgNode& n = g_.nodes[id];
            ValueId addr = kNoValue;
            if (n.kind == VfgKind::Load) {
                addr = n.address;
            } else if (n.kind == VfgKind::Store && n.is_memcpy) {
                addr = n.stored_value;  // memcpy source pointer
            } else if (n.kind == VfgKind::ActualParam && n.external_callee) {
                if (m_.values[n.arg_value].shape != Shape::Val) addr = n.arg_value;
            } else {
                continue;
            }
            if (addr == kNoValue || pts_.pts(addr).empty()) continue;
            uint32_t su_writer = UINT32_MAX;
            if (strong_update_writer(n, addr, &su_writer)) {
                if (su_writer != UINT32_MAX && su_writer != id)
                    add_edge(su_writer, id, VfgEdgeKind::Memory);
                continue;
            }
            std::vector<uint32_t> in_edges;
            for (uint32_t s : pts_.pts(addr))
                for (uint32_t w : writers_by_site[s]) in_edges.push_back(w);
            std::sort(in_edges.begin(), in_edges.end());
            in_edges.erase(std::unique(in_edges.begin(), in_edges.end()),
                           in_edges.end());
            for (uint32_t w : in_edges)
                if (w != id) add_edge(w, id, VfgEdgeKind::Memory);
        }
    }

    // Scans backward within the reader's block. Returns true when a strong
    // update applies: the first memory-relevant event is a store whose
    // address must-aliases the reader's (single stack/global site) with no
    // call or may-alias write in between.
    bool strong_update_writer(const VfgNode& reader, ValueId addr,
                              uint32_t* writer) {
        if (!reader.inst.valid()) return false;
        const SirFunction& fn = m_.functions[reader.inst.fn];
        const auto& insts = fn.blocks[reader.inst.block].insts;
        for (int j = (int)reader.inst.index - 1; j >= 0; --j) {
            const SirInstruction& in = insts[j];
            if (in.op == Opcode::Call) return false;
            if (in.op == Opcode::Memcpy) {
                if (pts_.alias(in.operands[0], addr)) return false;
                continue;
            }
            if (in.op == Opcode::Store) {
                ValueId waddr = in.operands[1];
                if (pts_.must_alias_single(waddr, addr)) {
                    InstrRef ref{reader.inst.fn, reader.inst.block, (uint32_t)j};
                    *writer = store_nodes_.at(ref);
                    return true;
                }
                if (pts_.alias(waddr, addr)) return false;
            }
        }
        return false;
    }

    const SirModule& m_;
    const CallGraph& cg_;
    const PointsToResult& pts_;
    ValueFlowGraph g_;
    std::map<std::pair<InstrRef, uint32_t>, uint32_t> actual_params_;
    std::map<uint32_t, std::vector<uint32_t>> formal_rets_;
    std::map<InstrRef, uint32_t> store_nodes_;
};

} // namespace

ValueFlowGraph build_vfg(const SirModule& m, const CallGraph& cg,
                         const PointsToResult& pts) {
    return VfgBuilder(m, cg, pts).build();
}

std::string dump_cg(const SirModule& m, const CallGraph& cg) {
    std::ostringstream out;
    for (const auto& e : cg.edges)
        out << "@" << m.functions[e.caller].name << " -> @"
            << m.functions[e.callee].name << " [" << m.loc_str(e.site) << "]\n";
    return out.str();
}

std::string dump_vfg(const ValueFlowGraph& vfg) {
    std::ostringstream out;
    for (uint32_t id = 0; id < vfg.nodes.size(); ++id)
        for (const auto& e : vfg.succ[id])
            out << "n" << id << " -> n" << e.node << " [" << to_string(e.kind)
                << "]\n";
    return out.str();
}

} // namespace etaint
