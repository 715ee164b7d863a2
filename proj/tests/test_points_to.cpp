#include "doctest.h"
#include "enclave_taint/points_to.hpp"
#include "test_util.hpp"

using namespace etaint;
using namespace etaint::testutil;

TEST_SUITE_BEGIN("points_to");

namespace {

ValueId by_name(const SirModule& m, uint32_t fn, const std::string& name) {
    for (ValueId v = 0; v < m.values.size(); ++v)
        if (m.values[v].func == fn && m.values[v].name == name) return v;
    REQUIRE(false);
    return kNoValue;
}

void check_against_naive(const SirModule& m, const EdlInterface* iface,
                         const PointsToResult& pts) {
    NaivePts naive = naive_points_to(m, iface);
    for (ValueId v = 0; v < m.values.size(); ++v) {
        if (m.values[v].kind == ValueKind::ConstInt ||
            m.values[v].kind == ValueKind::ConstNull)
            continue;
        CAPTURE(m.value_label(v));
        CHECK(solver_pts_labels(m, pts, v) == naive.value_pts[v]);
    }
}

} // namespace

TEST_CASE("alloca introduces its own site") {
    SirModule m = parse_sir("define @f() {\nentry:\n  %p = alloca 8\n  ret\n}\n");
    PointsToResult pts = solve_points_to(m);
    ValueId p = by_name(m, 0, "%p");
    REQUIRE(pts.pts(p).size() == 1);
    CHECK(pts.sites[pts.pts(p)[0]].kind == SiteKind::Stack);
    CHECK(pts.sites[pts.pts(p)[0]].label == "%p@f");
}

TEST_CASE("bitcast copies the source's set") {
    SirModule m = parse_sir(
        "define @f() {\nentry:\n  %p = alloca 8\n  %q = bitcast %p\n  ret\n}\n");
    PointsToResult pts = solve_points_to(m);
    CHECK(pts.pts(by_name(m, 0, "%q")) == pts.pts(by_name(m, 0, "%p")));
}

TEST_CASE("loads observe every store through the same cell") {
    // store %a,%p; store %b,%p; %v = load %p  =>  pts(%v) = {A, B}
    SirModule m = parse_sir(R"(
define @f() {
entry:
  %objA = alloca 8
  %objB = alloca 8
  %p = alloca 8
  store %objA, %p
  store %objB, %p
  %v = load %p
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    ValueId v = by_name(m, 0, "%v");
    REQUIRE(pts.pts(v).size() == 2);
    CHECK(pts.sites[pts.pts(v)[0]].label == "%objA@f");
    CHECK(pts.sites[pts.pts(v)[1]].label == "%objB@f");
    check_against_naive(m, nullptr, pts);
}

TEST_CASE("alias relation") {
    SirModule m = parse_sir(R"(
define @f(%c: val) {
entry:
  %a = alloca 8
  %b = alloca 8
  %x = bitcast %a
  %y = bitcast %a
  condbr %c, l, r
l:
  br join
r:
  br join
join:
  %m = phi [%a, l], [%b, r]
  %i = add %c, 0
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    ValueId a = by_name(m, 0, "%a"), b = by_name(m, 0, "%b");
    ValueId x = by_name(m, 0, "%x"), y = by_name(m, 0, "%y");
    ValueId mm = by_name(m, 0, "%m"), i = by_name(m, 0, "%i");
    CHECK(pts.alias(x, y));
    CHECK(pts.alias(x, a));
    CHECK_FALSE(pts.alias(a, b));      // distinct allocas never merged
    CHECK(pts.alias(mm, a));           // merged through the phi
    CHECK(pts.alias(mm, b));
    CHECK(pts.alias(a, a));            // reflexive on nonempty pts
    CHECK(pts.alias(mm, a) == pts.alias(a, mm));  // symmetric
    CHECK_FALSE(pts.alias(i, a));      // value-shaped operand: false
    check_against_naive(m, nullptr, pts);
}

TEST_CASE("null has an empty set") {
    SirModule m = parse_sir(R"(
define @f() {
entry:
  %p = alloca 8
  %c = icmp eq %p, null
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    for (ValueId v = 0; v < m.values.size(); ++v)
        if (m.values[v].kind == ValueKind::ConstNull)
            CHECK(pts.pts(v).empty());
}

TEST_CASE("malloc gets one site per call site") {
    SirModule m = parse_sir(R"(
declare @malloc(val) -> ptr
define @f() {
entry:
  %a = call @malloc(8)
  %b = call @malloc(8)
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    ValueId a = by_name(m, 1, "%a"), b = by_name(m, 1, "%b");
    REQUIRE(pts.pts(a).size() == 1);
    REQUIRE(pts.pts(b).size() == 1);
    CHECK(pts.pts(a)[0] != pts.pts(b)[0]);
    CHECK(pts.sites[pts.pts(a)[0]].from_malloc);
    CHECK(pts.sites[pts.pts(a)[0]].kind == SiteKind::Heap);
}

TEST_CASE("interprocedural flow through params and returns") {
    SirModule m = parse_sir(R"(
define @id(%x: ptr) {
entry:
  ret %x
}
define @f() {
entry:
  %p = alloca 8
  %q = call @id(%p)
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    CHECK(pts.pts(by_name(m, 1, "%q")) == pts.pts(by_name(m, 1, "%p")));
    check_against_naive(m, nullptr, pts);
}

TEST_CASE("indirect calls resolve through function-pointer phis") {
    SirModule m = parse_sir(R"(
define @g1(%x: ptr) {
entry:
  ret %x
}
define @g2(%x: ptr) {
entry:
  ret %x
}
define @f(%c: val) {
entry:
  condbr %c, l, r
l:
  br join
r:
  br join
join:
  %fp = phi [@g1, l], [@g2, r]
  %p = alloca 8
  %q = call %fp(%p)
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    InstrRef call{2, 3, 2};
    REQUIRE(m.instr(call).op == Opcode::Call);
    auto it = pts.resolved_callees.find(call);
    REQUIRE(it != pts.resolved_callees.end());
    CHECK(it->second == std::vector<uint32_t>{0, 1});
    CHECK(pts.pts(by_name(m, 2, "%q")) == pts.pts(by_name(m, 2, "%p")));
    check_against_naive(m, nullptr, pts);
}

TEST_CASE("unresolvable indirect call is diagnosed") {
    SirModule m = parse_sir(R"(
define @f(%fp: ptr) {
entry:
  call %fp()
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    REQUIRE(pts.diagnostics.size() == 1);
    CHECK(pts.diagnostics[0].find("resolves to no callees") != std::string::npos);
}

TEST_CASE("memcpy moves pointee contents") {
    SirModule m = parse_sir(R"(
define @f() {
entry:
  %obj = alloca 8
  %src = alloca 8
  %dst = alloca 8
  store %obj, %src
  memcpy %dst, %src, 8
  %v = load %dst
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    ValueId v = by_name(m, 0, "%v");
    REQUIRE(pts.pts(v).size() == 1);
    CHECK(pts.sites[pts.pts(v)[0]].label == "%obj@f");
    check_against_naive(m, nullptr, pts);
}

TEST_CASE("unknown externals merge through one blob") {
    SirModule m = parse_sir(R"(
declare @mystery(ptr) -> ptr
define @f() {
entry:
  %p = alloca 8
  %q = call @mystery(%p)
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    ValueId q = by_name(m, 1, "%q");
    bool has_blob = false;
    for (uint32_t s : pts.pts(q)) has_blob |= pts.sites[s].is_extern_blob;
    CHECK(has_blob);
    check_against_naive(m, nullptr, pts);
}

TEST_CASE("fixpoint is order independent") {
    const char* text = R"(
declare @malloc(val) -> ptr
define @h(%x: ptr) {
entry:
  %s = alloca 8
  store %x, %s
  %y = load %s
  ret %y
}
define @f(%c: val) {
entry:
  %a = alloca 8
  %b = call @malloc(4)
  %p = alloca 8
  store %a, %p
  store %b, %p
  %v = load %p
  %w = call @h(%v)
  condbr %c, l, r
l:
  br join
r:
  br join
join:
  %m = phi [%v, l], [%w, r]
  memcpy %p, %p, 8
  ret
}
)";
    SirModule m = parse_sir(text);
    PointsToResult base = solve_points_to(m);
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        PointsToResult shuffled = solve_points_to(m, nullptr, seed);
        for (ValueId v = 0; v < m.values.size(); ++v) {
            CAPTURE(seed);
            CAPTURE(m.value_label(v));
            CHECK(base.pts(v) == shuffled.pts(v));
        }
    }
}

TEST_CASE("pts is empty for value-shaped results") {
    SirModule m = parse_sir(R"(
define @f(%a: val) {
entry:
  %p = alloca 8
  %x = add %a, 1
  %c = icmp eq %p, null
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    CHECK(pts.pts(by_name(m, 0, "%x")).empty());
    CHECK(pts.pts(by_name(m, 0, "%c")).empty());
}

TEST_CASE("null_candidates: unchecked malloc is flagged") {
    SirModule m = parse_sir(R"(
declare @malloc(val) -> ptr
define @f(%k: val) {
entry:
  %p = call @malloc(16)
  store %k, %p
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    auto cands = null_candidates(m, pts);
    REQUIRE(cands.size() == 1);
    CHECK(*cands.begin() == by_name(m, 1, "%p"));
}

TEST_CASE("null_candidates: direct icmp check clears the flag") {
    SirModule m = parse_sir(R"(
declare @malloc(val) -> ptr
define @f(%k: val) {
entry:
  %p = call @malloc(16)
  %c = icmp eq %p, null
  condbr %c, err, ok
err:
  ret
ok:
  store %k, %p
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    CHECK(null_candidates(m, pts).empty());
}

TEST_CASE("null_candidates: checks through bitcast chains count") {
    SirModule m = parse_sir(R"(
declare @malloc(val) -> ptr
define @f() {
entry:
  %p = call @malloc(16)
  %q = bitcast %p
  %c = icmp eq %q, null
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    CHECK(null_candidates(m, pts).empty());
}

TEST_CASE("null_candidates: gep-derived compares do not count as checks") {
    SirModule m = parse_sir(R"(
declare @malloc(val) -> ptr
define @f() {
entry:
  %p = call @malloc(16)
  %g = gep %p, 1
  %c = icmp eq %g, null
  ret
}
)");
    PointsToResult pts = solve_points_to(m);
    CHECK(null_candidates(m, pts).size() == 1);
}

TEST_SUITE_END();
