//===- edl.hpp - enclave interface definition (EDL) frontend --------------===//
//
// Parses the EDL subset this analyzer understands (trusted/untrusted blocks,
// in/out/user_check/size attributes, struct definitions) and derives the
// (function, parameter index, leak pattern) tuples that seed taint analysis.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "enclave_taint/diag.hpp"

namespace etaint {

enum class PtrDirection { None, In, Out, InOut, UserCheck };

enum class LeakPattern { P1, P2, P3, P4, P5 };

const char* to_string(LeakPattern p);
const char* to_string(PtrDirection d);

// Size attribute payload: either a reference to a sibling parameter or a
// literal byte count.
struct SizeExpr {
    std::variant<std::string, int64_t> value;

    bool is_name() const { return value.index() == 0; }
    const std::string& name() const { return std::get<std::string>(value); }
    int64_t literal() const { return std::get<int64_t>(value); }
};

struct EdlParam {
    std::string name;
    std::string base_type;  // opaque C type name, e.g. "void", "struct keybox"
    bool is_pointer = false;
    PtrDirection direction = PtrDirection::None;
    std::optional<SizeExpr> size_expr;
    int position = 0;
};

enum class EdlFunctionKind { Trusted, Untrusted };  // ECALL vs OCALL

struct EdlFunction {
    std::string name;
    EdlFunctionKind kind = EdlFunctionKind::Trusted;
    std::vector<EdlParam> params;
    std::string return_type;
    bool returns_pointer = false;
    bool is_public = false;

    bool is_ecall() const { return kind == EdlFunctionKind::Trusted; }
};

struct EdlStructDef {
    struct Field {
        std::string name;
        std::string base_type;
        bool is_pointer = false;
    };
    std::string name;
    std::vector<Field> fields;

    bool has_pointer_field() const {
        for (const auto& f : fields)
            if (f.is_pointer) return true;
        return false;
    }
};

struct EdlInterface {
    std::vector<EdlFunction> functions;    // declaration order
    std::vector<EdlStructDef> structs;

    const EdlFunction* find(const std::string& name) const;
    const EdlStructDef* find_struct(const std::string& base_type) const;
    bool is_untrusted(const std::string& name) const;
};

// Distinguished parameter index standing for "the function's return pointer".
inline constexpr int kReturnIndex = -1;

struct LeakTuple {
    std::string funcname;
    int index = 0;  // parameter position, or kReturnIndex for P4
    LeakPattern pattern = LeakPattern::P1;

    bool operator==(const LeakTuple& o) const {
        return funcname == o.funcname && index == o.index && pattern == o.pattern;
    }
    std::string str() const;
};

// Parses EDL text. Throws ParseError with line/column on malformed input,
// unsupported attributes, duplicate names, or unresolved size references.
EdlInterface parse_edl(const std::string& text);

// Canonical text form; parse(pretty_print(iface)) reproduces the model.
std::string pretty_print(const EdlInterface& iface);

// Walks the interface in declaration order and emits one tuple per
// leak-capable pointer: ECALL out/inout -> P1, ECALL user_check (and in
// pointers to structs with pointer fields) -> P2, OCALL in/inout -> P3,
// pointer-returning OCALL -> P4.
std::vector<LeakTuple> extract_key_parameters(const EdlInterface& iface);

bool structurally_equal(const EdlInterface& a, const EdlInterface& b);

} // namespace etaint
