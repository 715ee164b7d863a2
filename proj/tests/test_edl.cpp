#include "doctest.h"
#include "enclave_taint/edl.hpp"

using namespace etaint;

TEST_SUITE_BEGIN("edl");

static const char* kFooBar = R"(
trusted {
    public void foo([in, size=10] void* in_ptr, [out, size=10] void* out_ptr,
                    [user_check] void* uc_ptr);
};
untrusted {
    void* bar();
};
)";

TEST_CASE("parses trusted/untrusted declarations with attributes") {
    EdlInterface iface = parse_edl(kFooBar);
    REQUIRE(iface.functions.size() == 2);
    const EdlFunction& foo = iface.functions[0];
    CHECK(foo.name == "foo");
    CHECK(foo.is_ecall());
    CHECK(foo.is_public);
    REQUIRE(foo.params.size() == 3);
    CHECK(foo.params[0].direction == PtrDirection::In);
    CHECK(foo.params[0].is_pointer);
    REQUIRE(foo.params[0].size_expr.has_value());
    CHECK(foo.params[0].size_expr->literal() == 10);
    CHECK(foo.params[1].direction == PtrDirection::Out);
    CHECK(foo.params[2].direction == PtrDirection::UserCheck);
    const EdlFunction& bar = iface.functions[1];
    CHECK_FALSE(bar.is_ecall());
    CHECK(bar.returns_pointer);
    CHECK(bar.params.empty());
}

TEST_CASE("empty trusted block yields an empty interface") {
    EdlInterface iface = parse_edl("trusted { };");
    CHECK(iface.functions.empty());
    CHECK(extract_key_parameters(iface).empty());
}

TEST_CASE("out pointer without a size is accepted and recorded") {
    EdlInterface iface = parse_edl("trusted { public void f([out] int* p); };");
    REQUIRE(iface.functions.size() == 1);
    CHECK(iface.functions[0].params[0].direction == PtrDirection::Out);
    CHECK_FALSE(iface.functions[0].params[0].size_expr.has_value());
}

TEST_CASE("size may reference a sibling parameter") {
    EdlInterface iface = parse_edl(
        "trusted { public void f([out, size=n] char* p, int n); };");
    REQUIRE(iface.functions[0].params[0].size_expr.has_value());
    CHECK(iface.functions[0].params[0].size_expr->name() == "n");
}

TEST_CASE("rejects unsupported and malformed input") {
    CHECK_THROWS_WITH_AS(parse_edl("trusted { void f([string] char* s); };"),
                         doctest::Contains("unsupported attribute"), ParseError);
    CHECK_THROWS_WITH_AS(parse_edl("trusted { void f([count=4] int* p); };"),
                         doctest::Contains("unsupported attribute"), ParseError);
    CHECK_THROWS_WITH_AS(parse_edl("trusted { void f(int x); void f(int y); };"),
                         doctest::Contains("duplicate function"), ParseError);
    CHECK_THROWS_WITH_AS(parse_edl("trusted { void f(int x, char* x); };"),
                         doctest::Contains("duplicate parameter"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse_edl("trusted { void f([out, size=m] char* p, int n); };"),
        doctest::Contains("unresolved size reference"), ParseError);
    CHECK_THROWS_WITH_AS(parse_edl("trusted { void f([in] int x); };"),
                         doctest::Contains("non-pointer"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse_edl("trusted { void f([user_check, in] int* p); };"),
        doctest::Contains("user_check"), ParseError);
    CHECK_THROWS_AS(parse_edl("trusted { void f(int x) };"), ParseError);
}

TEST_CASE("comments are skipped") {
    EdlInterface iface = parse_edl(
        "// line comment\ntrusted { /* block */ public void f(int x); };");
    CHECK(iface.functions.size() == 1);
}

TEST_CASE("key-parameter tuples for a mixed ECALL") {
    EdlInterface iface = parse_edl(
        "trusted { public void ecall_func([user_check] void* uc_ptr, "
        "[out, size=size] void* out_ptr, int size); };");
    auto tuples = extract_key_parameters(iface);
    REQUIRE(tuples.size() == 2);
    CHECK(tuples[0] == LeakTuple{"ecall_func", 0, LeakPattern::P2});
    CHECK(tuples[1] == LeakTuple{"ecall_func", 1, LeakPattern::P1});
}

TEST_CASE("pointer-returning OCALL yields a return tuple") {
    EdlInterface iface = parse_edl("untrusted { void* bar(); };");
    auto tuples = extract_key_parameters(iface);
    REQUIRE(tuples.size() == 1);
    CHECK(tuples[0] == LeakTuple{"bar", kReturnIndex, LeakPattern::P4});
}

TEST_CASE("value-only ECALL yields no tuples") {
    EdlInterface iface = parse_edl("trusted { public int f(int x); };");
    CHECK(extract_key_parameters(iface).empty());
}

TEST_CASE("in,out pointers classify as P1 on ECALLs and P3 on OCALLs") {
    EdlInterface iface = parse_edl(
        "trusted { void e([in, out, size=8] char* p); };\n"
        "untrusted { void o([in, out, size=8] char* q); };");
    auto tuples = extract_key_parameters(iface);
    REQUIRE(tuples.size() == 2);
    CHECK(tuples[0].pattern == LeakPattern::P1);
    CHECK(tuples[1].pattern == LeakPattern::P3);
}

TEST_CASE("in pointer to a struct with pointer fields becomes P2") {
    const char* text = R"(
struct keybox { int len; char* buf; };
struct plain { int a; int b; };
trusted {
    void f([in, size=16] struct keybox* k);
    void g([in, size=8] struct plain* p);
};
)";
    EdlInterface iface = parse_edl(text);
    auto tuples = extract_key_parameters(iface);
    REQUIRE(tuples.size() == 1);
    CHECK(tuples[0] == LeakTuple{"f", 0, LeakPattern::P2});
}

TEST_CASE("OCALL in pointers produce P3 tuples in declaration order") {
    EdlInterface iface = parse_edl(
        "untrusted { void* save([in, size=n] void* a, [out, size=n] void* b, "
        "[in, size=n] void* c, int n); };");
    auto tuples = extract_key_parameters(iface);
    REQUIRE(tuples.size() == 3);
    CHECK(tuples[0] == LeakTuple{"save", 0, LeakPattern::P3});
    CHECK(tuples[1] == LeakTuple{"save", 2, LeakPattern::P3});
    CHECK(tuples[2] == LeakTuple{"save", kReturnIndex, LeakPattern::P4});
}

TEST_CASE("round trip: parse, pretty-print, parse is stable") {
    const char* samples[] = {
        kFooBar,
        "struct s { int n; char* p; };\ntrusted { void f([in, size=4] struct s* "
        "x, [user_check] void* u); };\nuntrusted { void* o([in, size=2] char* b); "
        "};\ntrusted { public int g(int v); };",
        "trusted { };",
    };
    for (const char* text : samples) {
        EdlInterface a = parse_edl(text);
        EdlInterface b = parse_edl(pretty_print(a));
        CHECK(structurally_equal(a, b));
        // Printing is canonical: a second round trip is byte-stable.
        CHECK(pretty_print(a) == pretty_print(b));
    }
}

TEST_CASE("tuple extraction is deterministic") {
    EdlInterface iface = parse_edl(
        "trusted { void a([out, size=4] int* p, [user_check] int* q); }\n"
        "untrusted { void* b([in, size=4] int* r); };");
    auto t1 = extract_key_parameters(iface);
    auto t2 = extract_key_parameters(iface);
    CHECK(t1.size() == 4);
    CHECK(std::equal(t1.begin(), t1.end(), t2.begin()));
}

TEST_SUITE_END();
