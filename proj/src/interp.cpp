//===- interp.cpp - concrete execution over SIR ----------------------------===//

#include "enclave_taint/interp.hpp"

#include <cassert>
#include <map>

namespace etaint {

namespace {

struct CVal {
    enum Kind { Undef, Int, Ptr } kind = Undef;
    int64_t i = 0;
    uint32_t instance = UINT32_MAX;  // UINT32_MAX with kind Ptr means null

    static CVal undef() { return {}; }
    static CVal of_int(int64_t v) { return {Int, v, UINT32_MAX}; }
    static CVal of_ptr(uint32_t inst) { return {Ptr, 0, inst}; }
    static CVal null_ptr() { return {Ptr, 0, UINT32_MAX}; }
};

struct Instance {
    uint32_t site = kNoSite;
    CVal cell;  // field-insensitive single cell, matching the solver
};

class Interp {
public:
    Interp(const SirModule& m, const PointsToResult& pts, size_t budget)
        : m_(m), pts_(pts), budget_(budget) {
        for (uint32_t s = 0; s < pts_.sites.size(); ++s)
            if (pts_.sites[s].is_extern_blob) extern_site_ = s;
        // One concrete instance per global.
        for (ValueId g : m_.globals) {
            uint32_t site = pts_.site_of(g);
            global_instance_[g] = make_instance(site);
        }
    }

    InterpResult run(const std::string& entry, const std::vector<int64_t>& inputs) {
        uint32_t fidx = m_.function_index(entry);
        if (fidx == kNoFunc || !m_.functions[fidx].defined) return std::move(r_);
        const SirFunction& fn = m_.functions[fidx];
        std::map<ValueId, CVal> frame;
        for (size_t p = 0; p < fn.params.size(); ++p) {
            if (fn.param_shapes[p] == Shape::Ptr)
                frame[fn.params[p]] = CVal::null_ptr();
            else
                frame[fn.params[p]] =
                    CVal::of_int(p < inputs.size() ? inputs[p] : 0);
        }
        CVal ret = exec_function(fidx, std::move(frame));
        if (ret.kind == CVal::Int) r_.return_value = ret.i;
        return std::move(r_);
    }

private:
    uint32_t make_instance(uint32_t site) {
        instances_.push_back({site, CVal::undef()});
        return (uint32_t)instances_.size() - 1;
    }

    bool out_of_steps() {
        if (steps_ >= budget_) {
            r_.step_budget_exceeded = true;
            return true;
        }
        ++steps_;
        return false;
    }

    CVal value_of(const std::map<ValueId, CVal>& frame, ValueId v) {
        const ValueInfo& vi = m_.values[v];
        switch (vi.kind) {
        case ValueKind::ConstInt: return CVal::of_int(vi.const_val);
        case ValueKind::ConstNull: return CVal::null_ptr();
        case ValueKind::Global: {
            auto it = global_instance_.find(v);
            return it != global_instance_.end() ? CVal::of_ptr(it->second)
                                                : CVal::undef();
        }
        // Function pointers encode index+1 in `i` so null stays {Ptr, 0}.
        case ValueKind::Function:
            return CVal{CVal::Ptr, vi.const_val + 1, UINT32_MAX};
        default: {
            auto it = frame.find(v);
            return it != frame.end() ? it->second : CVal::undef();
        }
        }
    }

    bool is_function_ptr(const CVal& v) const {
        return v.kind == CVal::Ptr && v.instance == UINT32_MAX && v.i > 0;
    }

    CVal exec_function(uint32_t fidx, std::map<ValueId, CVal> frame) {
        const SirFunction& fn = m_.functions[fidx];
        uint32_t block = 0;
        uint32_t prev_block = UINT32_MAX;
        while (true) {
            const SirBlock& blk = fn.blocks[block];
            // Phis evaluate in parallel against the edge just taken.
            std::vector<std::pair<ValueId, CVal>> phi_vals;
            for (const auto& in : blk.insts) {
                if (in.op != Opcode::Phi) break;
                CVal v = CVal::undef();
                for (size_t k = 0; k < in.phi_blocks.size(); ++k)
                    if (in.phi_blocks[k] == prev_block)
                        v = value_of(frame, in.operands[k]);
                phi_vals.emplace_back(in.result, v);
            }
            for (auto& [id, v] : phi_vals) frame[id] = v;

            for (uint32_t i = 0; i < blk.insts.size(); ++i) {
                const SirInstruction& in = blk.insts[i];
                if (in.op == Opcode::Phi) continue;
                if (out_of_steps()) return CVal::undef();
                InstrRef ref{fidx, block, i};
                switch (in.op) {
                case Opcode::Alloca:
                    frame[in.result] =
                        CVal::of_ptr(make_instance(pts_.site_of(in.result)));
                    break;
                case Opcode::Load: {
                    CVal addr = value_of(frame, in.operands[0]);
                    if (addr.kind == CVal::Ptr && addr.instance != UINT32_MAX) {
                        r_.events.push_back(
                            {ref, in.operands[0], instances_[addr.instance].site});
                        frame[in.result] = instances_[addr.instance].cell;
                    } else {
                        ++r_.null_traps;
                        frame[in.result] = CVal::undef();
                    }
                    break;
                }
                case Opcode::Store: {
                    CVal addr = value_of(frame, in.operands[1]);
                    if (addr.kind == CVal::Ptr && addr.instance != UINT32_MAX) {
                        r_.events.push_back(
                            {ref, in.operands[1], instances_[addr.instance].site});
                        instances_[addr.instance].cell =
                            value_of(frame, in.operands[0]);
                    } else {
                        ++r_.null_traps;
                    }
                    break;
                }
                case Opcode::Memcpy: {
                    CVal dst = value_of(frame, in.operands[0]);
                    CVal src = value_of(frame, in.operands[1]);
                    CVal moved = CVal::undef();
                    if (src.kind == CVal::Ptr && src.instance != UINT32_MAX) {
                        r_.events.push_back(
                            {ref, in.operands[1], instances_[src.instance].site});
                        moved = instances_[src.instance].cell;
                    } else {
                        ++r_.null_traps;
                    }
                    if (dst.kind == CVal::Ptr && dst.instance != UINT32_MAX) {
                        r_.events.push_back(
                            {ref, in.operands[0], instances_[dst.instance].site});
                        instances_[dst.instance].cell = moved;
                    } else {
                        ++r_.null_traps;
                    }
                    break;
                }
                case Opcode::Gep:
                case Opcode::Bitcast:
                    // Field-insensitive: derived pointers keep the instance.
                    frame[in.result] = value_of(frame, in.operands[0]);
                    break;
                case Opcode::BinOp: {
                    CVal a = value_of(frame, in.operands[0]);
                    CVal b = value_of(frame, in.operands[1]);
                    if (a.kind == CVal::Ptr || b.kind == CVal::Ptr) {
                        frame[in.result] = CVal::undef();
                        break;
                    }
                    int64_t x = a.kind == CVal::Int ? a.i : 0;
                    int64_t y = b.kind == CVal::Int ? b.i : 0;
                    int64_t out = 0;
                    if (in.detail == "add") out = x + y;
                    else if (in.detail == "sub") out = x - y;
                    else if (in.detail == "mul") out = x * y;
                    else if (in.detail == "div") out = y == 0 ? 0 : x / y;
                    else if (in.detail == "and") out = x & y;
                    else if (in.detail == "or") out = x | y;
                    else if (in.detail == "xor") out = x ^ y;
                    else if (in.detail == "shl") out = x << (y & 63);
                    else if (in.detail == "shr")
                        out = (int64_t)((uint64_t)x >> (y & 63));
                    frame[in.result] = CVal::of_int(out);
                    break;
                }
                case Opcode::UnOp: {
                    CVal a = value_of(frame, in.operands[0]);
                    int64_t x = a.kind == CVal::Int ? a.i : 0;
                    frame[in.result] =
                        CVal::of_int(in.detail == "neg" ? -x : ~x);
                    break;
                }
                case Opcode::Icmp: {
                    CVal a = value_of(frame, in.operands[0]);
                    CVal b = value_of(frame, in.operands[1]);
                    bool out = false;
                    if (a.kind == CVal::Ptr || b.kind == CVal::Ptr) {
                        bool eq = a.kind == b.kind && a.instance == b.instance &&
                                  a.i == b.i;
                        if (in.detail == "eq") out = eq;
                        else if (in.detail == "ne") out = !eq;
                    } else {
                        int64_t x = a.kind == CVal::Int ? a.i : 0;
                        int64_t y = b.kind == CVal::Int ? b.i : 0;
                        if (in.detail == "eq") out = x == y;
                        else if (in.detail == "ne") out = x != y;
                        else if (in.detail == "lt") out = x < y;
                        else if (in.detail == "le") out = x <= y;
                        else if (in.detail == "gt") out = x > y;
                        else if (in.detail == "ge") out = x >= y;
                    }
                    frame[in.result] = CVal::of_int(out ? 1 : 0);
                    break;
                }
                case Opcode::Call: {
                    CVal res = exec_call(in, frame);
                    if (in.result != kNoValue) frame[in.result] = res;
                    break;
                }
                case Opcode::Annotate: break;
                case Opcode::Ret:
                    return in.operands.empty() ? CVal::undef()
                                               : value_of(frame, in.operands[0]);
                case Opcode::Br:
                    prev_block = block;
                    block = in.succ_blocks[0];
                    goto next_block;
                case Opcode::CondBr: {
                    CVal c = value_of(frame, in.operands[0]);
                    bool taken = c.kind == CVal::Int && c.i != 0;
                    prev_block = block;
                    block = in.succ_blocks[taken ? 0 : 1];
                    goto next_block;
                }
                default: break;
                }
                if (r_.step_budget_exceeded) return CVal::undef();
            }
            return CVal::undef();  // unreachable: blocks end in terminators
        next_block:;
        }
    }

    CVal exec_call(const SirInstruction& in,
                   std::map<ValueId, CVal>& frame) {
        uint32_t callee = in.callee_fn;
        if (callee == kNoFunc) {
            CVal fp = value_of(frame, in.callee_value);
            if (!is_function_ptr(fp)) {
                ++r_.null_traps;
                return CVal::undef();
            }
            callee = (uint32_t)(fp.i - 1);
        }
        const SirFunction& cf = m_.functions[callee];
        if (cf.defined) {
            std::map<ValueId, CVal> callee_frame;
            for (size_t a = 0; a < cf.params.size() && a < in.operands.size(); ++a)
                callee_frame[cf.params[a]] = value_of(frame, in.operands[a]);
            return exec_function(callee, std::move(callee_frame));
        }
        // Externals: malloc and pointer-returning OCALLs hand out a fresh
        // instance of their call-site site; other results are opaque.
        if (in.result != kNoValue) {
            uint32_t site = pts_.site_of(in.result);
            if (site != kNoSite) return CVal::of_ptr(make_instance(site));
            if (cf.ret_shape == Shape::Ptr && extern_site_ != kNoSite)
                return CVal::of_ptr(make_instance(extern_site_));
            return CVal::of_int(0);
        }
        return CVal::undef();
    }

    const SirModule& m_;
    const PointsToResult& pts_;
    size_t budget_;
    size_t steps_ = 0;
    uint32_t extern_site_ = kNoSite;
    std::vector<Instance> instances_;
    std::map<ValueId, uint32_t> global_instance_;
    InterpResult r_;
};

} // namespace

InterpResult interpret_trace(const SirModule& m, const PointsToResult& pts,
                             const std::string& entry,
                             const std::vector<int64_t>& inputs,
                             size_t step_budget) {
    return Interp(m, pts, step_budget).run(entry, inputs);
}

} // namespace etaint
