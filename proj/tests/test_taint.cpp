#include <algorithm>
#include <random>

#include "doctest.h"
#include "enclave_taint/generator.hpp"
#include "enclave_taint/taint.hpp"
#include "test_util.hpp"

using namespace etaint;
using namespace etaint::testutil;

TEST_SUITE_BEGIN("taint");

namespace {

struct Built {
    EdlInterface iface;
    SirModule m;
    PointsToResult pts;
    CallGraph cg;
    ValueFlowGraph vfg;
};

Built build(const std::string& sir, const std::string& edl = "trusted { };") {
    Built b;
    b.iface = parse_edl(edl);
    b.m = parse_sir(sir);
    REQUIRE(verify_module(b.m).empty());
    b.pts = solve_points_to(b.m, &b.iface);
    b.cg = build_call_graph(b.m, b.pts);
    b.vfg = build_vfg(b.m, b.cg, b.pts);
    return b;
}

ValueId by_name(const SirModule& m, const std::string& fn,
                const std::string& name) {
    uint32_t fi = m.function_index(fn);
    for (ValueId v = 0; v < m.values.size(); ++v)
        if (m.values[v].func == fi && m.values[v].name == name) return v;
    REQUIRE(false);
    return kNoValue;
}

std::vector<TaintSink> taint_from(Built& b, ValueId seed, TaintState& state) {
    TaintSeed s{seed, LeakPattern::P2, std::nullopt, kNoSite, 0};
    return ptr_taint(s, b.m, b.vfg, state);
}

void check_oracle_equivalence(Built& b, ValueId seed) {
    TaintState state;
    auto sinks = taint_from(b, seed, state);
    OracleResult oracle = taint_closure_oracle(seed, b.m, &b.pts, 4096);
    CAPTURE(b.m.value_label(seed));
    CHECK(state.tainted == oracle.tainted);
    CHECK(sink_instrs(b.vfg, sinks) == oracle.sinks);
}

} // namespace

TEST_CASE("bitcast chain: store to derived pointer is a sink") {
    Built b = build(R"(
define @f(%uc: ptr, %sec: val) {
entry:
  %q = bitcast %uc
  store %sec, %q
  ret
}
)");
    TaintState state;
    ValueId uc = by_name(b.m, "f", "%uc");
    auto sinks = taint_from(b, uc, state);
    REQUIRE(sinks.size() == 1);
    CHECK(b.vfg.nodes[sinks[0].node].kind == VfgKind::Store);
    CHECK(state.tainted ==
          std::set<ValueId>{uc, by_name(b.m, "f", "%q")});
    check_oracle_equivalence(b, uc);
}

TEST_CASE("gep-derived pointer: store through the offset is a sink") {
    Built b = build(R"(
define @f(%p: ptr, %sec: val) {
entry:
  %g = gep %p, 4
  store %sec, %g
  ret
}
)");
    TaintState state;
    auto sinks = taint_from(b, by_name(b.m, "f", "%p"), state);
    REQUIRE(sinks.size() == 1);
    check_oracle_equivalence(b, by_name(b.m, "f", "%p"));
}

TEST_CASE("taint flows through memory: stored pointer reloaded elsewhere") {
    Built b = build(R"(
define @f(%p: ptr, %sec: val) {
entry:
  %slot = alloca 8
  store %p, %slot
  %q = load %slot
  store %sec, %q
  ret
}
)");
    TaintState state;
    ValueId p = by_name(b.m, "f", "%p");
    auto sinks = taint_from(b, p, state);
    REQUIRE(sinks.size() == 1);
    const VfgNode& sink = b.vfg.nodes[sinks[0].node];
    CHECK(sink.stored_value == by_name(b.m, "f", "%sec"));
    CHECK(state.tainted.count(by_name(b.m, "f", "%q")));
    CHECK(state.tainted.count(by_name(b.m, "f", "%slot")));
    check_oracle_equivalence(b, p);
}

TEST_CASE("seed with no stores taints only itself") {
    Built b = build(R"(
define @f(%p: ptr) {
entry:
  %c = icmp eq %p, null
  ret
}
)");
    TaintState state;
    ValueId p = by_name(b.m, "f", "%p");
    auto sinks = taint_from(b, p, state);
    CHECK(sinks.empty());
    CHECK(state.tainted == std::set<ValueId>{p});
    // Comparisons never carry taint.
    CHECK_FALSE(state.tainted.count(by_name(b.m, "f", "%c")));
}

TEST_CASE("taint crosses call boundaries in both directions") {
    Built b = build(R"(
define @sink_helper(%hp: ptr, %hsec: val) {
entry:
  store %hsec, %hp
  ret %hp
}
define @ecall_f(%out: ptr, %sec: val) {
entry:
  %r = call @sink_helper(%out, %sec)
  store %sec, %r
  ret
}
)");
    TaintState state;
    ValueId out = by_name(b.m, "ecall_f", "%out");
    auto sinks = taint_from(b, out, state);
    CHECK(state.tainted.count(by_name(b.m, "sink_helper", "%hp")));
    CHECK(state.tainted.count(by_name(b.m, "ecall_f", "%r")));
    CHECK(sinks.size() == 2);  // one inside the helper, one at the caller
    check_oracle_equivalence(b, out);
}

TEST_CASE("store of a tainted value propagates instead of sinking") {
    Built b = build(R"(
define @f(%p: ptr) {
entry:
  %slot = alloca 8
  store %p, %slot
  ret
}
)");
    TaintState state;
    auto sinks = taint_from(b, by_name(b.m, "f", "%p"), state);
    CHECK(sinks.empty());
    CHECK(state.tainted.count(by_name(b.m, "f", "%slot")));
}

TEST_CASE("find_sinks: out-parameter memcpy produces one P1 sink") {
    Built b = build(R"(
define @ecall_out_leak(%out: ptr, %n: val) {
entry:
  %secret = alloca 32
  memcpy %out, %secret, 32
  ret
}
)",
                    "trusted { public void ecall_out_leak([out, size=n] void* "
                    "out, int n); };");
    auto tuples = extract_key_parameters(b.iface);
    auto sinks = find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts,
                            ExecMode::Serial);
    REQUIRE(sinks.size() == 1);
    CHECK(sinks[0].pattern == LeakPattern::P1);
    CHECK(b.vfg.nodes[sinks[0].node].is_memcpy);
}

TEST_CASE("find_sinks: OCALL in pointer argument is an explicit P3 sink") {
    Built b = build(R"(
declare @ocall_save(ptr, val)
define @ecall_f(%n: val) {
entry:
  %buf = alloca 16
  store %n, %buf
  call @ocall_save(%buf, 16)
  ret
}
)",
                    "trusted { public void ecall_f(int n); };\n"
                    "untrusted { void ocall_save([in, size=len] void* buf, int "
                    "len); };");
    auto tuples = extract_key_parameters(b.iface);
    auto sinks = find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts,
                            ExecMode::Serial);
    REQUIRE(sinks.size() == 1);
    CHECK(sinks[0].pattern == LeakPattern::P3);
    CHECK(b.vfg.nodes[sinks[0].node].kind == VfgKind::ActualParam);
    CHECK(sinks[0].stored_value == by_name(b.m, "ecall_f", "%buf"));
}

TEST_CASE("find_sinks: clean program yields nothing") {
    Built b = build(R"(
define @ecall_clean(%n: val) {
entry:
  %local = alloca 8
  store %n, %local
  %v = load %local
  ret
}
)",
                    "trusted { public void ecall_clean(int n); };");
    auto tuples = extract_key_parameters(b.iface);
    CHECK(find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts, ExecMode::Serial)
              .empty());
}

TEST_CASE("find_sinks: P4 seeds every pointer-returning OCALL call site") {
    Built b = build(R"(
declare @ocall_malloc() -> ptr
define @ecall_f(%sec: val) {
entry:
  %m1 = call @ocall_malloc()
  %m2 = call @ocall_malloc()
  store %sec, %m1
  store %sec, %m2
  ret
}
)",
                    "trusted { public void ecall_f(int sec); };\n"
                    "untrusted { void* ocall_malloc(); };");
    auto tuples = extract_key_parameters(b.iface);
    auto sinks = find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts,
                            ExecMode::Serial);
    REQUIRE(sinks.size() == 2);
    CHECK(sinks[0].pattern == LeakPattern::P4);
    CHECK(sinks[1].pattern == LeakPattern::P4);
    CHECK(sinks[0].node != sinks[1].node);
}

TEST_CASE("find_sinks: P5 via unchecked malloc") {
    Built b = build(R"(
declare @malloc(val) -> ptr
define @ecall_f(%k: val) {
entry:
  %p = call @malloc(16)
  store %k, %p
  ret
}
)",
                    "trusted { public void ecall_f(int k); };");
    auto tuples = extract_key_parameters(b.iface);
    auto sinks = find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts,
                            ExecMode::Serial);
    REQUIRE(sinks.size() == 1);
    CHECK(sinks[0].pattern == LeakPattern::P5);
    CHECK(sinks[0].seed.malloc_site != kNoSite);
}

TEST_CASE("find_sinks: struct P2 seeds the loaded pointer fields only") {
    Built b = build(R"(
define @ecall_box(%box: ptr, %sec: val) {
entry:
  %fp_addr = gep %box, 1
  %fp = load %fp_addr
  store %sec, %fp
  %len_addr = gep %box, 0
  %len = load %len_addr
  %dbl = add %len, %len
  ret
}
)",
                    "struct keybox { int len; char* buf; };\n"
                    "trusted { public void ecall_box([in, size=16] struct "
                    "keybox* box, int sec); };");
    auto tuples = extract_key_parameters(b.iface);
    REQUIRE(tuples.size() == 1);
    CHECK(tuples[0].pattern == LeakPattern::P2);
    auto sinks = find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts,
                            ExecMode::Serial);
    // Only the store through the loaded field pointer sinks; the struct
    // buffer itself lives inside the enclave.
    REQUIRE(sinks.size() == 1);
    CHECK(sinks[0].seed.value == by_name(b.m, "ecall_box", "%fp"));
}

TEST_CASE("find_sinks: EDL functions missing from the module are diagnosed") {
    Built b = build("define @other() {\nentry:\n  ret\n}\n",
                    "trusted { public void ghost([out, size=4] int* p); };");
    Diagnostics diags;
    auto sinks = find_sinks(extract_key_parameters(b.iface), b.iface, b.m, b.cg,
                            b.vfg, b.pts, ExecMode::Serial, &diags);
    CHECK(sinks.empty());
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].find("ghost") != std::string::npos);
}

TEST_CASE("sink minimality: dropping the seed removes its sinks") {
    const char* sir = R"(
define @ecall_f(%out: ptr, %sec: val) {
entry:
  store %sec, %out
  ret
}
)";
    Built leak = build(sir,
                       "trusted { public void ecall_f([out, size=4] int* out, "
                       "int sec); };");
    Built clean = build(sir,
                        "trusted { public void ecall_f([in, size=4] int* out, "
                        "int sec); };");
    auto leak_sinks =
        find_sinks(extract_key_parameters(leak.iface), leak.iface, leak.m,
                   leak.cg, leak.vfg, leak.pts, ExecMode::Serial);
    auto clean_sinks =
        find_sinks(extract_key_parameters(clean.iface), clean.iface, clean.m,
                   clean.cg, clean.vfg, clean.pts, ExecMode::Serial);
    CHECK(leak_sinks.size() == 1);
    CHECK(clean_sinks.empty());
}

TEST_CASE("worklist order independence: shuffled edges, same fixpoint") {
    Built b = build(R"(
define @h(%x: ptr) {
entry:
  %hs = alloca 8
  store %x, %hs
  %hv = load %hs
  ret %hv
}
define @f(%p: ptr, %sec: val, %c: val) {
entry:
  %slot = alloca 8
  %q = bitcast %p
  store %q, %slot
  %r = load %slot
  %w = call @h(%r)
  store %sec, %w
  %g = gep %r, 2
  store %sec, %g
  ret
}
)");
    ValueId p = by_name(b.m, "f", "%p");
    TaintState base_state;
    auto base_sinks = taint_from(b, p, base_state);
    for (uint64_t seed = 1; seed <= 6; ++seed) {
        ValueFlowGraph shuffled = b.vfg;
        std::mt19937_64 rng(seed);
        for (auto& succ : shuffled.succ)
            std::shuffle(succ.begin(), succ.end(), rng);
        TaintState state;
        TaintSeed s{p, LeakPattern::P2, std::nullopt, kNoSite, 0};
        auto sinks = ptr_taint(s, b.m, shuffled, state);
        CHECK(state.tainted == base_state.tainted);
        CHECK(sink_instrs(shuffled, sinks) == sink_instrs(b.vfg, base_sinks));
    }
    check_oracle_equivalence(b, p);
}

TEST_CASE("oracle equivalence on random programs") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        GeneratedProgram prog = generate_program(seed, 50 + seed % 150);
        CAPTURE(seed);
        Built b = build(prog.sir_text, prog.edl_text);
        for (const auto& fn : b.m.functions) {
            if (!fn.defined) continue;
            for (ValueId param : fn.params)
                if (b.m.values[param].shape != Shape::Val)
                    check_oracle_equivalence(b, param);
        }
        for (const auto& fn : b.m.functions)
            for (const auto& blk : fn.blocks)
                for (const auto& in : blk.insts)
                    if (in.op == Opcode::Call && in.result != kNoValue &&
                        in.callee_fn != kNoFunc &&
                        is_malloc_name(b.m.functions[in.callee_fn].name))
                        check_oracle_equivalence(b, in.result);
    }
}

TEST_CASE("serial and parallel sink search agree") {
    GeneratedProgram prog = generate_program(42, 180);
    Built b = build(prog.sir_text, prog.edl_text);
    auto tuples = extract_key_parameters(b.iface);
    auto serial = find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts,
                             ExecMode::Serial);
    auto parallel = find_sinks(tuples, b.iface, b.m, b.cg, b.vfg, b.pts,
                               ExecMode::Parallel);
    REQUIRE(serial.size() == parallel.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].node == parallel[i].node);
        CHECK(serial[i].pattern == parallel[i].pattern);
        CHECK(serial[i].seed.order == parallel[i].seed.order);
    }
}

TEST_SUITE_END();
