//===- points_to.cpp - Andersen constraint solver --------------------------===//

#include "enclave_taint/points_to.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <random>
#include <sstream>
#include <unordered_set>

namespace etaint {

bool pts_insert(PtsSet& set, uint32_t site) {
    auto it = std::lower_bound(set.begin(), set.end(), site);
    if (it != set.end() && *it == site) return false;
    set.insert(it, site);
    return true;
}

bool pts_union(PtsSet& dst, const PtsSet& src) {
    if (src.empty()) return false;
    PtsSet merged;
    merged.reserve(dst.size() + src.size());
    std::set_union(dst.begin(), dst.end(), src.begin(), src.end(),
                   std::back_inserter(merged));
    if (merged.size() == dst.size()) return false;
    dst = std::move(merged);
    return true;
}

bool pts_contains(const PtsSet& set, uint32_t site) {
    return std::binary_search(set.begin(), set.end(), site);
}

bool pts_intersects(const PtsSet& a, const PtsSet& b) {
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) return true;
        if (a[i] < b[j]) ++i;
        else ++j;
    }
    return false;
}

bool PointsToResult::alias(ValueId a, ValueId b) const {
    if (a >= value_pts.size() || b >= value_pts.size()) return false;
    if (definitely_value[a] || definitely_value[b]) return false;
    return pts_intersects(value_pts[a], value_pts[b]);
}

bool PointsToResult::must_alias_single(ValueId a, ValueId b) const {
    if (a >= value_pts.size() || b >= value_pts.size()) return false;
    const PtsSet& pa = value_pts[a];
    const PtsSet& pb = value_pts[b];
    if (pa.size() != 1 || pb.size() != 1 || pa[0] != pb[0]) return false;
    SiteKind k = sites[pa[0]].kind;
    return k == SiteKind::Stack || k == SiteKind::Global;
}

namespace {

// Variable space: [0, V) value ids, [V, V+S) site pointee cells,
// [V+S, V+S+M) memcpy temporaries.
class Solver {
public:
    Solver(const SirModule& m, const EdlInterface* iface,
           std::optional<uint64_t> shuffle_seed)
        : m_(m), iface_(iface), shuffle_seed_(shuffle_seed) {}

    PointsToResult run() {
        create_sites();
        size_t nvars = m_.values.size() + r_.sites.size() + count_memcpys();
        pts_.assign(nvars, {});
        processed_.assign(nvars, {});
        copy_out_.assign(nvars, {});
        load_into_.assign(nvars, {});
        store_from_.assign(nvars, {});
        blob_merge_.assign(nvars, false);
        indirect_sites_.assign(nvars, {});
        build_constraints();
        solve();
        finish();
        return std::move(r_);
    }

private:
    uint32_t cell_var(uint32_t site) const {
        return (uint32_t)m_.values.size() + site;
    }

    size_t count_memcpys() const {
        size_t n = 0;
        for (const auto& fn : m_.functions)
            for (const auto& blk : fn.blocks)
                for (const auto& in : blk.insts)
                    if (in.op == Opcode::Memcpy) ++n;
        return n;
    }

    bool is_ocall(const std::string& name) const {
        return iface_ && iface_->is_untrusted(name);
    }

    uint32_t add_site(AllocationSite site) {
        site.id = (uint32_t)r_.sites.size();
        if (site.origin_value != kNoValue)
            r_.site_by_origin[site.origin_value] = site.id;
        r_.sites.push_back(std::move(site));
        return (uint32_t)r_.sites.size() - 1;
    }

    void create_sites() {
        for (ValueId g : m_.globals) {
            AllocationSite s;
            s.kind = SiteKind::Global;
            s.origin_value = g;
            s.label = m_.values[g].name;
            s.loc = s.label;
            add_site(std::move(s));
        }
        std::vector<ValueId> fn_value(m_.functions.size(), kNoValue);
        for (ValueId v = 0; v < m_.values.size(); ++v)
            if (m_.values[v].kind == ValueKind::Function)
                fn_value[(uint32_t)m_.values[v].const_val] = v;
        for (uint32_t fi = 0; fi < m_.functions.size(); ++fi) {
            if (fn_value[fi] == kNoValue) continue;
            AllocationSite s;
            s.kind = SiteKind::Function;
            s.origin_value = fn_value[fi];
            s.label = m_.values[fn_value[fi]].name;
            s.loc = s.label;
            add_site(std::move(s));
        }
        for (uint32_t fi = 0; fi < m_.functions.size(); ++fi) {
            const SirFunction& fn = m_.functions[fi];
            for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
                for (uint32_t i = 0; i < fn.blocks[b].insts.size(); ++i) {
                    const SirInstruction& in = fn.blocks[b].insts[i];
                    InstrRef ref{fi, b, i};
                    if (in.op == Opcode::Alloca) {
                        AllocationSite s;
                        s.kind = SiteKind::Stack;
                        s.origin_value = in.result;
                        s.func = fi;
                        s.def = ref;
                        s.label = m_.value_label(in.result);
                        s.loc = m_.loc_str(ref);
                        add_site(std::move(s));
                    } else if (in.op == Opcode::Call && in.result != kNoValue &&
                               in.callee_fn != kNoFunc) {
                        const std::string& callee = m_.functions[in.callee_fn].name;
                        if (is_malloc_name(callee)) {
                            AllocationSite s;
                            s.kind = SiteKind::Heap;
                            s.origin_value = in.result;
                            s.func = fi;
                            s.def = ref;
                            s.from_malloc = true;
                            s.label = "malloc#" + std::to_string(in.index_in_func) +
                                      "@" + fn.name;
                            s.loc = m_.loc_str(ref);
                            add_site(std::move(s));
                        } else if (!m_.functions[in.callee_fn].defined &&
                                   is_ocall(callee)) {
                            AllocationSite s;
                            s.kind = SiteKind::Heap;
                            s.origin_value = in.result;
                            s.func = fi;
                            s.def = ref;
                            s.label = callee + "#" +
                                      std::to_string(in.index_in_func) + "@" +
                                      fn.name;
                            s.loc = m_.loc_str(ref);
                            add_site(std::move(s));
                        }
                    }
                }
            }
        }
        // One merged blob for untyped externals.
        AllocationSite blob;
        blob.kind = SiteKind::Heap;
        blob.is_extern_blob = true;
        blob.label = "@extern";
        blob.loc = "@extern";
        extern_site_ = add_site(std::move(blob));
    }

    // --- constraint construction -----------------------------------------

    void add_addr(uint32_t var, uint32_t site) {
        if (pts_insert(pts_[var], site)) push(var);
    }

    void add_copy(uint32_t src, uint32_t dst) {
        if (src == dst) return;
        uint64_t key = ((uint64_t)src << 32) | dst;
        if (!copy_edges_.insert(key).second) return;
        copy_out_[src].push_back(dst);
        if (pts_union(pts_[dst], pts_[src])) push(dst);
    }

    void build_constraints() {
        for (ValueId v = 0; v < m_.values.size(); ++v) {
            const ValueInfo& vi = m_.values[v];
            if (vi.kind == ValueKind::Global || vi.kind == ValueKind::Function) {
                uint32_t s = r_.site_of(v);
                if (s != kNoSite) add_addr(v, s);
            }
        }
        uint32_t memcpy_temp = (uint32_t)(m_.values.size() + r_.sites.size());
        for (uint32_t fi = 0; fi < m_.functions.size(); ++fi) {
            const SirFunction& fn = m_.functions[fi];
            for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
                for (uint32_t i = 0; i < fn.blocks[b].insts.size(); ++i) {
                    const SirInstruction& in = fn.blocks[b].insts[i];
                    InstrRef ref{fi, b, i};
                    switch (in.op) {
                    case Opcode::Alloca:
                        add_addr(in.result, r_.site_of(in.result));
                        break;
                    case Opcode::Bitcast:
                    case Opcode::Gep:
                        add_copy(in.operands[0], in.result);
                        break;
                    case Opcode::Phi:
                        for (ValueId v : in.operands) add_copy(v, in.result);
                        break;
                    case Opcode::Load:
                        load_into_[in.operands[0]].push_back(in.result);
                        deref_read(in.operands[0], in.result);
                        break;
                    case Opcode::Store:
                        store_from_[in.operands[1]].push_back(in.operands[0]);
                        deref_write(in.operands[1], in.operands[0]);
                        break;
                    case Opcode::Memcpy: {
                        uint32_t t = memcpy_temp++;
                        load_into_[in.operands[1]].push_back(t);
                        deref_read(in.operands[1], t);
                        store_from_[in.operands[0]].push_back(t);
                        deref_write(in.operands[0], t);
                        break;
                    }
                    case Opcode::Call: build_call(fi, ref, in); break;
                    default: break;
                    }
                }
            }
        }
    }

    void build_call(uint32_t caller, const InstrRef& ref, const SirInstruction& in) {
        if (in.callee_fn != kNoFunc) {
            const SirFunction& callee = m_.functions[in.callee_fn];
            if (callee.defined) {
                bind_defined_call(in, in.callee_fn);
            } else if (is_malloc_name(callee.name) || is_ocall(callee.name)) {
                // Fresh per-call-site heap site (created earlier); OCALL
                // arguments are copied by the bridge, never captured.
                if (in.result != kNoValue) {
                    uint32_t s = r_.site_of(in.result);
                    if (s != kNoSite) add_addr(in.result, s);
                }
            } else {
                bind_extern_blob(in);
            }
            return;
        }
        // Indirect: resolved as the callee operand's pts grows.
        indirect_sites_[in.callee_value].push_back(ref);
        indirect_calls_.push_back(ref);
        (void)caller;
    }

    void bind_defined_call(const SirInstruction& in, uint32_t callee_idx) {
        const SirFunction& callee = m_.functions[callee_idx];
        if (in.operands.size() != callee.params.size()) return;  // verifier diag
        for (size_t a = 0; a < in.operands.size(); ++a)
            add_copy(in.operands[a], callee.params[a]);
        if (in.result != kNoValue) {
            for (const auto& blk : callee.blocks)
                for (const auto& ci : blk.insts)
                    if (ci.op == Opcode::Ret && !ci.operands.empty())
                        add_copy(ci.operands[0], in.result);
        }
    }

    void bind_extern_blob(const SirInstruction& in) {
        uint32_t blob_cell = cell_var(extern_site_);
        if (in.result != kNoValue) {
            add_addr(in.result, extern_site_);
            add_copy(blob_cell, in.result);
        }
        for (ValueId a : in.operands) {
            if (m_.values[a].shape == Shape::Val) continue;
            add_copy(a, blob_cell);
            blob_merge_[a] = true;
            // Merge already-known pointees.
            for (uint32_t o : pts_[a]) merge_with_blob(o);
            push(a);
        }
    }

    void merge_with_blob(uint32_t site) {
        if (site == extern_site_) return;
        add_copy(cell_var(site), cell_var(extern_site_));
        add_copy(cell_var(extern_site_), cell_var(site));
    }

    void deref_read(uint32_t ptr_var, uint32_t dst) {
        for (uint32_t o : pts_[ptr_var]) add_copy(cell_var(o), dst);
    }

    void deref_write(uint32_t ptr_var, uint32_t src) {
        for (uint32_t o : pts_[ptr_var]) add_copy(src, cell_var(o));
    }

    // --- worklist ----------------------------------------------------------

    void push(uint32_t var) {
        if (var < in_list_.size() && !in_list_[var]) {
            in_list_[var] = true;
            worklist_.push_back(var);
        }
    }

    uint32_t pop() {
        uint32_t var;
        if (rng_) {
            size_t idx = (*rng_)() % worklist_.size();
            var = worklist_[idx];
            worklist_[idx] = worklist_.back();
            worklist_.pop_back();
        } else {
            var = worklist_.front();
            worklist_.pop_front();
        }
        in_list_[var] = false;
        return var;
    }

    void solve() {
        in_list_.assign(pts_.size(), false);
        if (shuffle_seed_) rng_.emplace(*shuffle_seed_);
        for (uint32_t v = 0; v < pts_.size(); ++v)
            if (!pts_[v].empty()) push(v);
        while (!worklist_.empty()) {
            uint32_t v = pop();
            PtsSet delta;
            std::set_difference(pts_[v].begin(), pts_[v].end(),
                                processed_[v].begin(), processed_[v].end(),
                                std::back_inserter(delta));
            processed_[v] = pts_[v];
            if (delta.empty()) continue;
            for (uint32_t o : delta) {
                for (uint32_t dst : load_into_[v]) add_copy(cell_var(o), dst);
                for (uint32_t src : store_from_[v]) add_copy(src, cell_var(o));
                if (blob_merge_[v]) merge_with_blob(o);
                if (!indirect_sites_[v].empty() &&
                    r_.sites[o].kind == SiteKind::Function) {
                    uint32_t callee = (uint32_t)m_.values[r_.sites[o].origin_value]
                                          .const_val;
                    for (const InstrRef& site : indirect_sites_[v])
                        resolve_indirect(site, callee);
                }
            }
            // Propagate the grown set along copy edges.
            for (uint32_t dst : copy_out_[v])
                if (pts_union(pts_[dst], delta)) push(dst);
        }
    }

    void resolve_indirect(const InstrRef& site, uint32_t callee_idx) {
        auto key = std::make_pair(site, callee_idx);
        if (!resolved_pairs_.insert(key).second) return;
        const SirInstruction& in = m_.instr(site);
        const SirFunction& callee = m_.functions[callee_idx];
        if (callee.defined) {
            if (in.operands.size() != callee.params.size()) return;
            auto& list = r_.resolved_callees[site];
            list.insert(std::lower_bound(list.begin(), list.end(), callee_idx),
                        callee_idx);
            bind_defined_call(in, callee_idx);
        } else {
            bind_extern_blob(in);
        }
    }

    void finish() {
        r_.value_pts.assign(m_.values.size(), {});
        for (ValueId v = 0; v < m_.values.size(); ++v) r_.value_pts[v] = pts_[v];
        r_.cell_pts.assign(r_.sites.size(), {});
        for (uint32_t s = 0; s < r_.sites.size(); ++s)
            r_.cell_pts[s] = pts_[cell_var(s)];
        r_.definitely_value.assign(m_.values.size(), false);
        for (ValueId v = 0; v < m_.values.size(); ++v)
            r_.definitely_value[v] = m_.values[v].shape == Shape::Val;
        for (const InstrRef& ref : indirect_calls_) {
            auto it = r_.resolved_callees.find(ref);
            if (it == r_.resolved_callees.end() || it->second.empty())
                r_.diagnostics.push_back("indirect call at " + m_.loc_str(ref) +
                                         " resolves to no callees");
        }
    }

    const SirModule& m_;
    const EdlInterface* iface_;
    std::optional<uint64_t> shuffle_seed_;
    std::optional<std::mt19937_64> rng_;
    PointsToResult r_;
    uint32_t extern_site_ = 0;

    std::vector<PtsSet> pts_, processed_;
    std::vector<std::vector<uint32_t>> copy_out_, load_into_, store_from_;
    std::vector<bool> blob_merge_;
    std::vector<std::vector<InstrRef>> indirect_sites_;
    std::vector<InstrRef> indirect_calls_;
    std::unordered_set<uint64_t> copy_edges_;
    std::set<std::pair<InstrRef, uint32_t>> resolved_pairs_;
    std::deque<uint32_t> worklist_;
    std::vector<bool> in_list_;
};

} // namespace

PointsToResult solve_points_to(const SirModule& m, const EdlInterface* iface,
                               std::optional<uint64_t> shuffle_seed) {
    return Solver(m, iface, shuffle_seed).run();
}

std::set<ValueId> null_candidates(const SirModule& m, const PointsToResult& r) {
    (void)r;
    // Roots: malloc results. derived_roots maps a value to the set of malloc
    // results it copies (bitcast/phi only; gep offsets do not count as the
    // same pointer for a null check).
    std::map<ValueId, std::set<ValueId>> derived_roots;
    for (const auto& fn : m.functions) {
        for (const auto& blk : fn.blocks) {
            for (const auto& in : blk.insts) {
                if (in.op == Opcode::Call && in.result != kNoValue &&
                    in.callee_fn != kNoFunc &&
                    is_malloc_name(m.functions[in.callee_fn].name))
                    derived_roots[in.result].insert(in.result);
            }
        }
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& fn : m.functions) {
            for (const auto& blk : fn.blocks) {
                for (const auto& in : blk.insts) {
                    if (in.op != Opcode::Bitcast && in.op != Opcode::Phi) continue;
                    auto& dst = derived_roots[in.result];
                    size_t before = dst.size();
                    for (ValueId v : in.operands) {
                        auto it = derived_roots.find(v);
                        if (it != derived_roots.end())
                            dst.insert(it->second.begin(), it->second.end());
                    }
                    if (dst.size() != before) changed = true;
                }
            }
        }
    }
    std::set<ValueId> candidates;
    for (const auto& [v, roots] : derived_roots)
        candidates.insert(roots.begin(), roots.end());
    for (const auto& fn : m.functions) {
        for (const auto& blk : fn.blocks) {
            for (const auto& in : blk.insts) {
                if (in.op != Opcode::Icmp) continue;
                for (int side = 0; side < 2; ++side) {
                    ValueId a = in.operands[side];
                    ValueId b = in.operands[1 - side];
                    if (m.values[b].kind != ValueKind::ConstNull) continue;
                    auto it = derived_roots.find(a);
                    if (it == derived_roots.end()) continue;
                    for (ValueId root : it->second) candidates.erase(root);
                }
            }
        }
    }
    return candidates;
}

std::string dump_pts(const SirModule& m, const PointsToResult& r) {
    std::vector<std::string> lines;
    for (ValueId v = 0; v < m.values.size(); ++v) {
        const ValueInfo& vi = m.values[v];
        if (vi.kind == ValueKind::ConstInt || vi.kind == ValueKind::ConstNull)
            continue;
        if (r.value_pts[v].empty()) continue;
        std::ostringstream line;
        line << m.value_label(v) << " -> {";
        bool first = true;
        for (uint32_t s : r.value_pts[v]) {
            if (!first) line << ", ";
            first = false;
            line << r.sites[s].label;
        }
        line << "}";
        lines.push_back(line.str());
    }
    std::sort(lines.begin(), lines.end());
    std::ostringstream out;
    for (const auto& l : lines) out << l << "\n";
    return out.str();
}

} // namespace etaint
