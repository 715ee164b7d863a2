//===- edl.cpp - EDL parsing and key-parameter extraction -----------------===//

#include "enclave_taint/edl.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace etaint {

const char* to_string(LeakPattern p) {
    switch (p) {
    case LeakPattern::P1: return "P1";
    case LeakPattern::P2: return "P2";
    case LeakPattern::P3: return "P3";
    case LeakPattern::P4: return "P4";
    case LeakPattern::P5: return "P5";
    }
    return "?";
}

const char* to_string(PtrDirection d) {
    switch (d) {
    case PtrDirection::None: return "none";
    case PtrDirection::In: return "in";
    case PtrDirection::Out: return "out";
    case PtrDirection::InOut: return "in,out";
    case PtrDirection::UserCheck: return "user_check";
    }
    return "?";
}

std::string LeakTuple::str() const {
    std::string idx = index == kReturnIndex ? "RETURN" : std::to_string(index);
    return "(" + funcname + "," + idx + "," + to_string(pattern) + ")";
}

const EdlFunction* EdlInterface::find(const std::string& name) const {
    for (const auto& f : functions)
        if (f.name == name) return &f;
    return nullptr;
}

const EdlStructDef* EdlInterface::find_struct(const std::string& base_type) const {
    std::string name = base_type;
    if (name.rfind("struct ", 0) == 0) name = name.substr(7);
    for (const auto& s : structs)
        if (s.name == name) return &s;
    return nullptr;
}

bool EdlInterface::is_untrusted(const std::string& name) const {
    const EdlFunction* f = find(name);
    return f && !f->is_ecall();
}

namespace {

enum class Tok { Ident, Int, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    int64_t number = 0;
    int line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& text) : text_(text) { advance(); }

    const Token& cur() const { return cur_; }

    struct State {
        size_t pos;
        int line, col;
        Token cur;
    };
    State save() const { return {pos_, line_, col_, cur_}; }
    void restore(const State& s) {
        pos_ = s.pos;
        line_ = s.line;
        col_ = s.col;
        cur_ = s.cur;
    }

    void advance() {
        skip_ws();
        cur_.line = line_;
        cur_.col = col_;
        if (pos_ >= text_.size()) {
            cur_.kind = Tok::End;
            cur_.text.clear();
            return;
        }
        char c = text_[pos_];
        if (std::isalpha((unsigned char)c) || c == '_') {
            size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum((unsigned char)text_[pos_]) || text_[pos_] == '_'))
                bump();
            cur_.kind = Tok::Ident;
            cur_.text = text_.substr(start, pos_ - start);
            return;
        }
        if (std::isdigit((unsigned char)c)) {
            size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit((unsigned char)text_[pos_]))
                bump();
            cur_.kind = Tok::Int;
            cur_.text = text_.substr(start, pos_ - start);
            cur_.number = std::stoll(cur_.text);
            return;
        }
        cur_.kind = Tok::Punct;
        cur_.text = std::string(1, c);
        bump();
    }

private:
    void bump() {
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_ws() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                bump();
            } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
                while (pos_ < text_.size() && text_[pos_] != '\n') bump();
            } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '*') {
                bump();
                bump();
                while (pos_ + 1 < text_.size() &&
                       !(text_[pos_] == '*' && text_[pos_ + 1] == '/'))
                    bump();
                if (pos_ + 1 >= text_.size())
                    throw ParseError("unterminated block comment", line_, col_);
                bump();
                bump();
            } else {
                break;
            }
        }
    }

    const std::string& text_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token cur_;
};

const std::set<std::string> kUnsupportedAttrs = {"string", "wstring", "count",
                                                 "isptr",  "isary",   "readonly"};

class EdlParser {
public:
    explicit EdlParser(const std::string& text) : lex_(text) {}

    EdlInterface parse() {
        while (!at_end()) {
            if (is_ident("struct")) {
                parse_struct_def();
            } else if (is_ident("trusted") || is_ident("untrusted")) {
                parse_block();
            } else {
                fail("expected 'trusted', 'untrusted' or 'struct'");
            }
        }
        return std::move(iface_);
    }

private:
    [[noreturn]] void fail(const std::string& msg) {
        throw ParseError(msg, lex_.cur().line, lex_.cur().col);
    }

    bool at_end() const { return lex_.cur().kind == Tok::End; }
    bool is_ident(const char* s) const {
        return lex_.cur().kind == Tok::Ident && lex_.cur().text == s;
    }
    bool is_punct(char c) const {
        return lex_.cur().kind == Tok::Punct && lex_.cur().text[0] == c;
    }

    std::string expect_ident(const char* what) {
        if (lex_.cur().kind != Tok::Ident) fail(std::string("expected ") + what);
        std::string s = lex_.cur().text;
        lex_.advance();
        return s;
    }

    void expect_punct(char c) {
        if (!is_punct(c)) fail(std::string("expected '") + c + "'");
        lex_.advance();
    }

    bool accept_punct(char c) {
        if (is_punct(c)) {
            lex_.advance();
            return true;
        }
        return false;
    }

    void parse_struct_def() {
        lex_.advance();  // struct
        EdlStructDef def;
        def.name = expect_ident("struct name");
        for (const auto& s : iface_.structs)
            if (s.name == def.name) fail("duplicate struct name '" + def.name + "'");
        expect_punct('{');
        while (!is_punct('}')) {
            EdlStructDef::Field field;
            auto [base, ptr] = parse_type();
            field.base_type = base;
            field.is_pointer = ptr;
            field.name = expect_ident("field name");
            for (const auto& f : def.fields)
                if (f.name == field.name)
                    fail("duplicate field name '" + field.name + "'");
            expect_punct(';');
            def.fields.push_back(std::move(field));
        }
        expect_punct('}');
        expect_punct(';');
        iface_.structs.push_back(std::move(def));
    }

    void parse_block() {
        EdlFunctionKind kind =
            is_ident("trusted") ? EdlFunctionKind::Trusted : EdlFunctionKind::Untrusted;
        lex_.advance();
        expect_punct('{');
        while (!is_punct('}')) {
            if (is_ident("struct")) {
                // Could be a struct definition or a declaration with a struct
                // return type; a '{' after the name means definition.
                Lexer::State save = lex_.save();
                lex_.advance();
                expect_ident("struct name");
                bool is_def = is_punct('{');
                lex_.restore(save);
                if (is_def) {
                    parse_struct_def();
                    continue;
                }
            }
            parse_decl(kind);
        }
        expect_punct('}');
        accept_punct(';');
    }

    // type := ident {"*"} | "struct" ident {"*"}
    std::pair<std::string, bool> parse_type() {
        std::string base;
        if (is_ident("struct")) {
            lex_.advance();
            base = "struct " + expect_ident("struct type name");
        } else {
            base = expect_ident("type name");
        }
        bool pointer = false;
        while (is_punct('*')) {
            pointer = true;
            lex_.advance();
        }
        return {base, pointer};
    }

    void parse_decl(EdlFunctionKind kind) {
        EdlFunction fn;
        fn.kind = kind;
        if (is_ident("public")) {
            fn.is_public = true;
            lex_.advance();
        }
        auto [ret, ret_ptr] = parse_type();
        fn.return_type = ret;
        fn.returns_pointer = ret_ptr;
        fn.name = expect_ident("function name");
        if (iface_.find(fn.name))
            fail("duplicate function name '" + fn.name + "'");
        expect_punct('(');
        if (!is_punct(')')) {
            do {
                fn.params.push_back(parse_param((int)fn.params.size()));
            } while (accept_punct(','));
        }
        expect_punct(')');
        expect_punct(';');
        validate_function(fn);
        iface_.functions.push_back(std::move(fn));
    }

    EdlParam parse_param(int position) {
        EdlParam p;
        p.position = position;
        bool saw_in = false, saw_out = false;
        if (accept_punct('[')) {
            do {
                if (lex_.cur().kind != Tok::Ident) fail("expected attribute name");
                std::string attr = lex_.cur().text;
                if (kUnsupportedAttrs.count(attr))
                    fail("unsupported attribute '" + attr + "'");
                lex_.advance();
                if (attr == "in") {
                    saw_in = true;
                } else if (attr == "out") {
                    saw_out = true;
                } else if (attr == "user_check") {
                    if (p.direction != PtrDirection::None || saw_in || saw_out)
                        fail("user_check cannot be combined with in/out");
                    p.direction = PtrDirection::UserCheck;
                } else if (attr == "size") {
                    expect_punct('=');
                    SizeExpr se;
                    if (lex_.cur().kind == Tok::Ident) {
                        se.value = lex_.cur().text;
                    } else if (lex_.cur().kind == Tok::Int) {
                        se.value = lex_.cur().number;
                    } else {
                        fail("expected size value");
                    }
                    lex_.advance();
                    p.size_expr = se;
                } else {
                    fail("unknown attribute '" + attr + "'");
                }
            } while (accept_punct(','));
            expect_punct(']');
        }
        if ((saw_in || saw_out) && p.direction == PtrDirection::UserCheck)
            fail("user_check cannot be combined with in/out");
        if (saw_in && saw_out)
            p.direction = PtrDirection::InOut;
        else if (saw_in)
            p.direction = PtrDirection::In;
        else if (saw_out)
            p.direction = PtrDirection::Out;
        auto [base, ptr] = parse_type();
        p.base_type = base;
        p.is_pointer = ptr;
        p.name = expect_ident("parameter name");
        if (p.direction != PtrDirection::None && !p.is_pointer)
            fail("direction attribute on non-pointer parameter '" + p.name + "'");
        if (p.size_expr && !p.is_pointer)
            fail("size attribute on non-pointer parameter '" + p.name + "'");
        return p;
    }

    void validate_function(const EdlFunction& fn) {
        std::set<std::string> names;
        for (const auto& p : fn.params) {
            if (!names.insert(p.name).second)
                fail("duplicate parameter name '" + p.name + "' in " + fn.name);
        }
        for (const auto& p : fn.params) {
            if (p.size_expr && p.size_expr->is_name() &&
                !names.count(p.size_expr->name()))
                fail("unresolved size reference '" + p.size_expr->name() +
                     "' in parameter '" + p.name + "'");
        }
    }

    Lexer lex_;
    EdlInterface iface_;
};

void print_type(std::ostringstream& out, const std::string& base, bool pointer) {
    out << base;
    if (pointer) out << "*";
}

void print_param(std::ostringstream& out, const EdlParam& p) {
    std::vector<std::string> attrs;
    switch (p.direction) {
    case PtrDirection::In: attrs.push_back("in"); break;
    case PtrDirection::Out: attrs.push_back("out"); break;
    case PtrDirection::InOut:
        attrs.push_back("in");
        attrs.push_back("out");
        break;
    case PtrDirection::UserCheck: attrs.push_back("user_check"); break;
    case PtrDirection::None: break;
    }
    if (p.size_expr) {
        if (p.size_expr->is_name())
            attrs.push_back("size=" + p.size_expr->name());
        else
            attrs.push_back("size=" + std::to_string(p.size_expr->literal()));
    }
    if (!attrs.empty()) {
        out << "[";
        for (size_t i = 0; i < attrs.size(); ++i) {
            if (i) out << ", ";
            out << attrs[i];
        }
        out << "] ";
    }
    print_type(out, p.base_type, p.is_pointer);
    out << " " << p.name;
}

} // namespace

EdlInterface parse_edl(const std::string& text) {
    return EdlParser(text).parse();
}

std::string pretty_print(const EdlInterface& iface) {
    std::ostringstream out;
    for (const auto& s : iface.structs) {
        out << "struct " << s.name << " {\n";
        for (const auto& f : s.fields) {
            out << "    ";
            print_type(out, f.base_type, f.is_pointer);
            out << " " << f.name << ";\n";
        }
        out << "};\n";
    }
    // Functions keep their declaration order; a new block starts whenever the
    // trusted/untrusted kind flips.
    size_t i = 0;
    while (i < iface.functions.size()) {
        EdlFunctionKind kind = iface.functions[i].kind;
        out << (kind == EdlFunctionKind::Trusted ? "trusted" : "untrusted") << " {\n";
        for (; i < iface.functions.size() && iface.functions[i].kind == kind; ++i) {
            const EdlFunction& fn = iface.functions[i];
            out << "    ";
            if (fn.is_public) out << "public ";
            print_type(out, fn.return_type, fn.returns_pointer);
            out << " " << fn.name << "(";
            for (size_t j = 0; j < fn.params.size(); ++j) {
                if (j) out << ", ";
                print_param(out, fn.params[j]);
            }
            out << ");\n";
        }
        out << "};\n";
    }
    return out.str();
}

std::vector<LeakTuple> extract_key_parameters(const EdlInterface& iface) {
    std::vector<LeakTuple> tuples;
    for (const auto& fn : iface.functions) {
        if (fn.is_ecall()) {
            for (const auto& p : fn.params) {
                if (!p.is_pointer) continue;
                if (p.direction == PtrDirection::Out ||
                    p.direction == PtrDirection::InOut) {
                    tuples.push_back({fn.name, p.position, LeakPattern::P1});
                } else if (p.direction == PtrDirection::UserCheck) {
                    tuples.push_back({fn.name, p.position, LeakPattern::P2});
                } else if (p.direction == PtrDirection::In) {
                    // A shallow-copied struct leaves its pointer fields
                    // unchecked, so they behave like user_check pointers.
                    const EdlStructDef* s = iface.find_struct(p.base_type);
                    if (s && s->has_pointer_field())
                        tuples.push_back({fn.name, p.position, LeakPattern::P2});
                }
            }
        } else {
            for (const auto& p : fn.params) {
                if (p.is_pointer && (p.direction == PtrDirection::In ||
                                     p.direction == PtrDirection::InOut))
                    tuples.push_back({fn.name, p.position, LeakPattern::P3});
            }
            if (fn.returns_pointer)
                tuples.push_back({fn.name, kReturnIndex, LeakPattern::P4});
        }
    }
    return tuples;
}

bool structurally_equal(const EdlInterface& a, const EdlInterface& b) {
    auto param_eq = [](const EdlParam& x, const EdlParam& y) {
        bool size_eq = x.size_expr.has_value() == y.size_expr.has_value();
        if (size_eq && x.size_expr)
            size_eq = x.size_expr->value == y.size_expr->value;
        return x.name == y.name && x.base_type == y.base_type &&
               x.is_pointer == y.is_pointer && x.direction == y.direction &&
               x.position == y.position && size_eq;
    };
    if (a.functions.size() != b.functions.size() ||
        a.structs.size() != b.structs.size())
        return false;
    for (size_t i = 0; i < a.functions.size(); ++i) {
        const auto& fa = a.functions[i];
        const auto& fb = b.functions[i];
        if (fa.name != fb.name || fa.kind != fb.kind ||
            fa.return_type != fb.return_type ||
            fa.returns_pointer != fb.returns_pointer ||
            fa.is_public != fb.is_public || fa.params.size() != fb.params.size())
            return false;
        for (size_t j = 0; j < fa.params.size(); ++j)
            if (!param_eq(fa.params[j], fb.params[j])) return false;
    }
    for (size_t i = 0; i < a.structs.size(); ++i) {
        const auto& sa = a.structs[i];
        const auto& sb = b.structs[i];
        if (sa.name != sb.name || sa.fields.size() != sb.fields.size()) return false;
        for (size_t j = 0; j < sa.fields.size(); ++j) {
            if (sa.fields[j].name != sb.fields[j].name ||
                sa.fields[j].base_type != sb.fields[j].base_type ||
                sa.fields[j].is_pointer != sb.fields[j].is_pointer)
                return false;
        }
    }
    return true;
}

} // namespace etaint
