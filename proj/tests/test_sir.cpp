#include "doctest.h"
#include "enclave_taint/sir.hpp"

using namespace etaint;

TEST_SUITE_BEGIN("sir");

TEST_CASE("parses a minimal load/store pair") {
    SirModule m = parse_sir(R"(
define @f(%k: val) {
entry:
  %p = alloca 8
  store %k, %p
  %v = load %p
  ret %v
}
)");
    REQUIRE(m.functions.size() == 1);
    const SirFunction& f = m.functions[0];
    CHECK(f.defined);
    REQUIRE(f.blocks.size() == 1);
    CHECK(f.blocks[0].insts.size() == 4);
    CHECK(f.blocks[0].insts[0].op == Opcode::Alloca);
    CHECK(f.blocks[0].insts[1].op == Opcode::Store);
    CHECK(verify_module(m).empty());
}

TEST_CASE("parses the full grammar surface") {
    SirModule m = parse_sir(R"(
global @g : ptr
declare @malloc(val) -> ptr

define @f(%a0: ptr, %a1: val) {
entry:
  %p = alloca 16            !loc "enc.c:12"
  %q = bitcast %p
  %gp = gep %p, 2
  store %a1, %q
  %v = load %gp
  %s = add %v, %a1
  %n = neg %v
  %c = icmp eq %p, null
  condbr %c, bb1, bb2
bb1:
  %r = call @malloc(16)
  memcpy %p, %q, 8
  annotate %p, "INSENSITIVE"
  br bb2
bb2:
  %m = phi [%v, bb1], [%s, entry]
  store %m, @g
  ret %m
}
)");
    CHECK(m.globals.size() == 1);
    CHECK(m.functions.size() == 2);
    const SirInstruction& alloca = m.functions[1].blocks[0].insts[0];
    CHECK(alloca.loc.file == "enc.c");
    CHECK(alloca.loc.line == 12);
    CHECK(m.loc_str({1, 0, 0}) == "enc.c:12");
    CHECK(m.loc_str({1, 0, 1}) == "f:#1");
    CHECK(verify_module(m).empty());
}

TEST_CASE("parse errors carry position and reason") {
    CHECK_THROWS_WITH_AS(
        parse_sir("define @f() {\nentry:\n  %q = load %p\n  ret\n}\n"),
        doctest::Contains("undefined value"), ParseError);
    CHECK_THROWS_WITH_AS(parse_sir("define @f() {\nentry:\n  %a = alloca 8\n  "
                                   "%a = alloca 8\n  ret\n}\n"),
                         doctest::Contains("multiply-defined"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse_sir("define @f() {\nentry:\n  frobnicate %a\n  ret\n}\n"),
        doctest::Contains("unknown opcode"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse_sir("define @f() {\nentry:\n  %p = alloca 8\n  store %p\n  ret\n}\n"),
        doctest::Contains("expected"), ParseError);
    CHECK_THROWS_WITH_AS(parse_sir("define @f() {\nentry:\n  %p = alloca 8\n}\n"),
                         doctest::Contains("terminator"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse_sir("define @f() {\nentry:\n  call @nope()\n  ret\n}\n"),
        doctest::Contains("unknown function"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse_sir("declare @e(val)\ndefine @f() {\nentry:\n  call @e(1, 2)\n  "
                  "ret\n}\n"),
        doctest::Contains("expects 1 arguments"), ParseError);
}

TEST_CASE("verifier flags arity violations on hand-built modules") {
    SirModule m = parse_sir(
        "define @f() {\nentry:\n  %p = alloca 8\n  store 1, %p\n  ret\n}\n");
    // Break the store's arity behind the parser's back.
    m.functions[0].blocks[0].insts[1].operands.pop_back();
    Diagnostics diags = verify_module(m);
    REQUIRE_FALSE(diags.empty());
    CHECK(diags[0].find("store arity") != std::string::npos);
}

TEST_CASE("verifier checks phi incoming blocks against predecessors") {
    SirModule m = parse_sir(R"(
define @f(%c: val) {
entry:
  condbr %c, a, b
a:
  br join
b:
  br join
join:
  %m = phi [1, a], [2, b]
  ret %m
}
)");
    CHECK(verify_module(m).empty());
    // Recompute predecessor counts after dropping one incoming entry.
    m.functions[0].blocks[3].insts[0].operands.pop_back();
    m.functions[0].blocks[3].insts[0].phi_blocks.pop_back();
    Diagnostics diags = verify_module(m);
    REQUIRE_FALSE(diags.empty());
    CHECK(diags[0].find("phi incoming blocks") != std::string::npos);
}

TEST_CASE("verifier enforces SSA dominance") {
    SirModule m = parse_sir(R"(
define @f(%c: val) {
entry:
  condbr %c, a, join
a:
  %x = add %c, 1
  br join
join:
  %y = add %x, 1
  ret %y
}
)");
    Diagnostics diags = verify_module(m);
    REQUIRE_FALSE(diags.empty());
    CHECK(diags[0].find("dominated") != std::string::npos);
}

TEST_CASE("verifier flags stores through definite values") {
    SirModule m = parse_sir(R"(
define @f(%x: val) {
entry:
  store 1, %x
  ret
}
)");
    Diagnostics diags = verify_module(m);
    REQUIRE_FALSE(diags.empty());
    CHECK(diags[0].find("store address") != std::string::npos);
}

TEST_CASE("collect_insensitive gathers annotated allocation sites") {
    Diagnostics warnings;
    SirModule m = parse_sir(R"(
declare @malloc(val) -> ptr
define @f() {
entry:
  %user_id = alloca 4
  annotate %user_id, "INSENSITIVE"
  %t = alloca 4
  annotate %t, "OTHER"
  %h = call @malloc(8)
  annotate %h, "INSENSITIVE"
  %v = load %t
  annotate %v, "INSENSITIVE"
  ret
}
)");
    InsensitiveDataTable table = collect_insensitive(m, &warnings);
    CHECK(table.entries.size() == 2);
    ValueId user_id = m.functions[1].blocks[0].insts[0].result;
    ValueId heap = m.functions[1].blocks[0].insts[4].result;
    ValueId t = m.functions[1].blocks[0].insts[2].result;
    CHECK(table.contains(user_id));
    CHECK(table.contains(heap));
    CHECK_FALSE(table.contains(t));  // "OTHER" annotation ignored
    REQUIRE(warnings.size() == 1);   // %v is not an allocation site
    CHECK(warnings[0].find("%v@f") != std::string::npos);
}

TEST_CASE("module with no annotations yields an empty table") {
    SirModule m = parse_sir("define @f() {\nentry:\n  ret\n}\n");
    CHECK(collect_insensitive(m).entries.empty());
}

TEST_CASE("parse determinism: identical text gives identical structure") {
    const char* text = R"(
define @f(%a: ptr) {
entry:
  %p = alloca 8
  store %a, %p
  ret
}
)";
    SirModule a = parse_sir(text);
    SirModule b = parse_sir(text);
    CHECK(a.values.size() == b.values.size());
    for (size_t i = 0; i < a.values.size(); ++i) {
        CHECK(a.values[i].name == b.values[i].name);
        CHECK(a.values[i].shape == b.values[i].shape);
    }
}

TEST_CASE("shape inference propagates through calls and phis") {
    SirModule m = parse_sir(R"(
define @mk() {
entry:
  %p = alloca 8
  ret %p
}
define @f(%c: val) {
entry:
  %a = call @mk()
  %b = alloca 8
  condbr %c, l, r
l:
  br join
r:
  br join
join:
  %m = phi [%a, l], [%b, r]
  %i = add %c, 1
  ret
}
)");
    CHECK(m.functions[0].ret_shape == Shape::Ptr);
    ValueId mval = m.functions[1].blocks[3].insts[0].result;
    CHECK(m.values[mval].shape == Shape::Ptr);
    ValueId ival = m.functions[1].blocks[3].insts[1].result;
    CHECK(m.values[ival].shape == Shape::Val);
}

TEST_SUITE_END();
