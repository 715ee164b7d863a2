//===- points_to.hpp - inclusion-based points-to analysis -----------------===//
//
// Field-insensitive, flow-insensitive, context-insensitive Andersen-style
// constraint solving over SIR. Each alloca, global, function, malloc call
// site, and pointer-returning OCALL call site becomes one allocation site
// with a single pointee cell. The fixpoint also resolves indirect calls.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "enclave_taint/edl.hpp"
#include "enclave_taint/sir.hpp"

namespace etaint {

enum class SiteKind { Stack, Heap, Global, Function };

inline constexpr uint32_t kNoSite = UINT32_MAX;

struct AllocationSite {
    uint32_t id = 0;
    SiteKind kind = SiteKind::Stack;
    ValueId origin_value = kNoValue;  // alloca/global/function/call result
    uint32_t func = kNoFunc;
    InstrRef def;              // defining instruction (invalid for globals etc.)
    bool from_malloc = false;  // heap sites: true for @malloc, false for OCALLs
    bool is_extern_blob = false;
    std::string label;  // stable readable id, e.g. "%key@ecall_seal"
    std::string loc;
};

// Sorted, duplicate-free site-id set.
using PtsSet = std::vector<uint32_t>;

bool pts_insert(PtsSet& set, uint32_t site);
bool pts_union(PtsSet& dst, const PtsSet& src);
bool pts_contains(const PtsSet& set, uint32_t site);
bool pts_intersects(const PtsSet& a, const PtsSet& b);

struct PointsToResult {
    std::vector<AllocationSite> sites;
    std::vector<PtsSet> value_pts;  // indexed by ValueId
    std::vector<PtsSet> cell_pts;   // per site: what its pointee cell may hold
    std::map<ValueId, uint32_t> site_by_origin;
    std::map<InstrRef, std::vector<uint32_t>> resolved_callees;  // indirect calls
    std::vector<bool> definitely_value;  // per ValueId: shape is Val
    Diagnostics diagnostics;

    const PtsSet& pts(ValueId v) const { return value_pts[v]; }
    uint32_t site_of(ValueId origin) const {
        auto it = site_by_origin.find(origin);
        return it == site_by_origin.end() ? kNoSite : it->second;
    }
    // True iff both operands are pointer-shaped and their pts sets intersect.
    bool alias(ValueId a, ValueId b) const;
    // Must-alias for strong updates: singleton identical pts over a site with
    // a single concrete instance (stack or global).
    bool must_alias_single(ValueId a, ValueId b) const;
};

// Solves the inclusion constraints to their least fixpoint. The EDL interface
// distinguishes OCALL stubs (fresh site per pointer-returning call site, no
// argument capture) from unknown externals (merged into one extern blob).
// `shuffle_seed` randomizes worklist order; the fixpoint is order-independent.
PointsToResult solve_points_to(const SirModule& m,
                               const EdlInterface* iface = nullptr,
                               std::optional<uint64_t> shuffle_seed = std::nullopt);

// Malloc results never compared against null, directly or through any
// bitcast/phi-derived alias. These seed P5 taint runs.
std::set<ValueId> null_candidates(const SirModule& m, const PointsToResult& r);

// --dump-pts text: "value -> {site, ...}" lines, sorted lexicographically.
std::string dump_pts(const SirModule& m, const PointsToResult& r);

} // namespace etaint
