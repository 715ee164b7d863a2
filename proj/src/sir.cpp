//===- sir.cpp - SIR parsing, shape inference, and verification -----------===//

#include "enclave_taint/sir.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <sstream>

namespace etaint {

const char* to_string(Opcode op) {
    switch (op) {
    case Opcode::Alloca: return "alloca";
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::Gep: return "gep";
    case Opcode::Bitcast: return "bitcast";
    case Opcode::Phi: return "phi";
    case Opcode::BinOp: return "binop";
    case Opcode::UnOp: return "unop";
    case Opcode::Icmp: return "icmp";
    case Opcode::Call: return "call";
    case Opcode::Memcpy: return "memcpy";
    case Opcode::Annotate: return "annotate";
    case Opcode::Ret: return "ret";
    case Opcode::Br: return "br";
    case Opcode::CondBr: return "condbr";
    }
    return "?";
}

bool is_malloc_name(const std::string& name) { return name == "malloc"; }

std::string SirModule::loc_str(const InstrRef& r) const {
    const SirInstruction& in = instr(r);
    if (in.loc.valid()) return in.loc.str();
    return functions[r.fn].name + ":#" + std::to_string(in.index_in_func);
}

std::string SirModule::value_label(ValueId v) const {
    const ValueInfo& info = values[v];
    if (info.func != kNoFunc)
        return info.name + "@" + functions[info.func].name;
    return info.name;
}

namespace {

enum class Tk { LocalId, GlobalId, Ident, Int, Str, Punct, Arrow, End };

struct Token {
    Tk kind = Tk::End;
    std::string text;   // without the %/@ sigil for ids
    int64_t number = 0;
    int line = 1, col = 1;
};

std::vector<Token> lex(const std::string& text) {
    std::vector<Token> toks;
    size_t pos = 0;
    int line = 1, col = 1;
    auto bump = [&] {
        if (text[pos] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        ++pos;
    };
    auto ident_char = [](char c) {
        return std::isalnum((unsigned char)c) || c == '_' || c == '.';
    };
    while (pos < text.size()) {
        char c = text[pos];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            bump();
            continue;
        }
        if (c == ';') {
            while (pos < text.size() && text[pos] != '\n') bump();
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (c == '%' || c == '@') {
            t.kind = c == '%' ? Tk::LocalId : Tk::GlobalId;
            bump();
            size_t start = pos;
            while (pos < text.size() && ident_char(text[pos])) bump();
            if (pos == start) throw ParseError("empty identifier", t.line, t.col);
            t.text = text.substr(start, pos - start);
        } else if (std::isalpha((unsigned char)c) || c == '_' || c == '!') {
            bool bang = c == '!';
            if (bang) bump();
            size_t start = pos;
            while (pos < text.size() && ident_char(text[pos])) bump();
            t.kind = Tk::Ident;
            t.text = (bang ? "!" : "") + text.substr(start, pos - start);
        } else if (std::isdigit((unsigned char)c) ||
                   (c == '-' && pos + 1 < text.size() &&
                    std::isdigit((unsigned char)text[pos + 1]))) {
            size_t start = pos;
            bump();
            while (pos < text.size() && std::isdigit((unsigned char)text[pos])) bump();
            t.kind = Tk::Int;
            t.text = text.substr(start, pos - start);
            t.number = std::stoll(t.text);
        } else if (c == '"') {
            bump();
            size_t start = pos;
            while (pos < text.size() && text[pos] != '"') bump();
            if (pos >= text.size())
                throw ParseError("unterminated string literal", t.line, t.col);
            t.kind = Tk::Str;
            t.text = text.substr(start, pos - start);
            bump();
        } else if (c == '-' && pos + 1 < text.size() && text[pos + 1] == '>') {
            t.kind = Tk::Arrow;
            t.text = "->";
            bump();
            bump();
        } else {
            t.kind = Tk::Punct;
            t.text = std::string(1, c);
            bump();
        }
        toks.push_back(std::move(t));
    }
    Token end;
    end.line = line;
    end.col = col;
    toks.push_back(end);
    return toks;
}

const std::set<std::string> kBinOps = {"add", "sub", "mul", "div", "and",
                                       "or",  "xor", "shl", "shr"};
const std::set<std::string> kUnOps = {"neg", "not"};
const std::set<std::string> kIcmpPreds = {"eq", "ne", "lt", "le", "gt", "ge"};

class SirParser {
public:
    explicit SirParser(const std::string& text) : toks_(lex(text)) {}

    SirModule parse() {
        // Pass 1: register globals, declarations, and function headers so
        // bodies can reference symbols defined later in the file.
        std::vector<std::pair<uint32_t, size_t>> bodies;  // (fn index, token pos)
        while (!at_end()) {
            if (is_ident("global")) {
                parse_global();
            } else if (is_ident("declare")) {
                parse_declare();
            } else if (is_ident("define")) {
                uint32_t fn = parse_define_header();
                bodies.emplace_back(fn, pos_);
                skip_body();
            } else {
                fail("expected 'define', 'declare' or 'global'");
            }
        }
        // Function-object values, in function order.
        fn_values_.resize(m_.functions.size(), kNoValue);
        for (uint32_t i = 0; i < m_.functions.size(); ++i) {
            ValueInfo vi;
            vi.kind = ValueKind::Function;
            vi.name = "@" + m_.functions[i].name;
            vi.shape = Shape::Ptr;
            vi.const_val = i;
            fn_values_[i] = add_value(std::move(vi));
        }
        // Pass 2: parse bodies.
        for (auto& [fn, start] : bodies) {
            pos_ = start;
            parse_body(fn);
        }
        infer_shapes();
        return std::move(m_);
    }

private:
    const Token& cur() const { return toks_[pos_]; }
    bool at_end() const { return cur().kind == Tk::End; }
    void advance() { ++pos_; }

    [[noreturn]] void fail(const std::string& msg) {
        throw ParseError(msg, cur().line, cur().col);
    }

    bool is_ident(const char* s) const {
        return cur().kind == Tk::Ident && cur().text == s;
    }
    bool is_punct(char c) const {
        return cur().kind == Tk::Punct && cur().text[0] == c;
    }
    void expect_punct(char c) {
        if (!is_punct(c)) fail(std::string("expected '") + c + "'");
        advance();
    }
    bool accept_punct(char c) {
        if (is_punct(c)) {
            advance();
            return true;
        }
        return false;
    }
    std::string expect_global_name() {
        if (cur().kind != Tk::GlobalId) fail("expected @name");
        std::string s = cur().text;
        advance();
        return s;
    }
    std::string expect_local_name() {
        if (cur().kind != Tk::LocalId) fail("expected %name");
        std::string s = cur().text;
        advance();
        return s;
    }
    Shape expect_shape() {
        if (is_ident("ptr")) {
            advance();
            return Shape::Ptr;
        }
        if (is_ident("val")) {
            advance();
            return Shape::Val;
        }
        fail("expected 'ptr' or 'val'");
    }
    int64_t expect_int() {
        if (cur().kind != Tk::Int) fail("expected integer");
        int64_t v = cur().number;
        advance();
        return v;
    }

    ValueId add_value(ValueInfo vi) {
        m_.values.push_back(std::move(vi));
        return (ValueId)(m_.values.size() - 1);
    }

    void parse_global() {
        advance();  // global
        std::string name = expect_global_name();
        expect_punct(':');
        Shape pointee = expect_shape();
        if (global_names_.count(name)) fail("duplicate global '@" + name + "'");
        ValueInfo vi;
        vi.kind = ValueKind::Global;
        vi.name = "@" + name;
        vi.shape = Shape::Ptr;
        ValueId v = add_value(std::move(vi));
        global_names_[name] = v;
        m_.globals.push_back(v);
        m_.global_pointee[name] = pointee;
    }

    uint32_t register_function(const std::string& name, bool defined) {
        if (m_.func_by_name.count(name))
            fail("duplicate function '@" + name + "'");
        if (global_names_.count(name))
            fail("'@" + name + "' already defined as a global");
        SirFunction fn;
        fn.name = name;
        fn.defined = defined;
        m_.functions.push_back(std::move(fn));
        uint32_t idx = (uint32_t)(m_.functions.size() - 1);
        m_.func_by_name[name] = idx;
        return idx;
    }

    void parse_declare() {
        advance();  // declare
        std::string name = expect_global_name();
        uint32_t idx = register_function(name, false);
        SirFunction& fn = m_.functions[idx];
        expect_punct('(');
        if (!is_punct(')')) {
            do {
                fn.param_shapes.push_back(expect_shape());
            } while (accept_punct(','));
        }
        expect_punct(')');
        if (cur().kind == Tk::Arrow) {
            advance();
            fn.ret_shape = expect_shape();
            fn.has_ret_value = true;
        }
    }

    uint32_t parse_define_header() {
        advance();  // define
        std::string name = expect_global_name();
        uint32_t idx = register_function(name, true);
        SirFunction& fn = m_.functions[idx];
        expect_punct('(');
        std::set<std::string> seen;
        if (!is_punct(')')) {
            do {
                std::string pname = expect_local_name();
                if (!seen.insert(pname).second)
                    fail("duplicate parameter '%" + pname + "'");
                expect_punct(':');
                Shape sh = expect_shape();
                ValueInfo vi;
                vi.kind = ValueKind::Param;
                vi.name = "%" + pname;
                vi.func = idx;
                vi.shape = sh;
                vi.param_index = (uint32_t)fn.params.size();
                fn.params.push_back(add_value(std::move(vi)));
                fn.param_shapes.push_back(sh);
            } while (accept_punct(','));
        }
        expect_punct(')');
        if (!is_punct('{')) fail("expected '{'");
        return idx;
    }

    void skip_body() {
        expect_punct('{');
        int depth = 1;
        while (depth > 0) {
            if (at_end()) fail("unterminated function body");
            if (is_punct('{')) ++depth;
            if (is_punct('}')) --depth;
            advance();
        }
    }

    // --- body parsing ----------------------------------------------------

    struct RawOperand {
        enum Kind { Local, Global, Int, Null } kind = Local;
        std::string name;
        int64_t number = 0;
        int line = 1, col = 1;
    };

    struct RawInst {
        std::string result;  // empty when the instruction defines no value
        std::string opcode;
        std::vector<RawOperand> operands;
        std::string detail;
        int64_t imm = 0;
        std::string callee;             // direct call target
        bool indirect_call = false;     // callee is operands[0]
        std::vector<std::string> labels;  // phi incoming / branch targets
        SourceLoc loc;
        int line = 1, col = 1;
    };

    RawOperand parse_raw_operand() {
        RawOperand op;
        op.line = cur().line;
        op.col = cur().col;
        if (cur().kind == Tk::LocalId) {
            op.kind = RawOperand::Local;
            op.name = cur().text;
        } else if (cur().kind == Tk::GlobalId) {
            op.kind = RawOperand::Global;
            op.name = cur().text;
        } else if (cur().kind == Tk::Int) {
            op.kind = RawOperand::Int;
            op.number = cur().number;
        } else if (is_ident("null")) {
            op.kind = RawOperand::Null;
        } else {
            fail("expected operand");
        }
        advance();
        return op;
    }

    std::string expect_label() {
        if (cur().kind != Tk::Ident) fail("expected block label");
        std::string s = cur().text;
        advance();
        return s;
    }

    void parse_body(uint32_t fn_idx) {
        SirFunction& fn = m_.functions[fn_idx];
        expect_punct('{');
        std::vector<std::vector<RawInst>> raw_blocks;
        std::vector<std::string> block_labels;
        std::map<std::string, uint32_t> label_index;
        while (!is_punct('}')) {
            if (at_end()) fail("unterminated function body");
            // Block header: label ':'
            if (cur().kind != Tk::Ident || toks_[pos_ + 1].kind != Tk::Punct ||
                toks_[pos_ + 1].text != ":")
                fail("expected block label");
            std::string label = cur().text;
            if (label_index.count(label)) fail("duplicate block label '" + label + "'");
            advance();
            advance();
            label_index[label] = (uint32_t)raw_blocks.size();
            block_labels.push_back(label);
            raw_blocks.emplace_back();
            auto& insts = raw_blocks.back();
            bool terminated = false;
            while (!is_punct('}') &&
                   !(cur().kind == Tk::Ident && toks_[pos_ + 1].kind == Tk::Punct &&
                     toks_[pos_ + 1].text == ":")) {
                if (at_end()) fail("unterminated function body");
                if (terminated)
                    fail("instruction after block terminator");
                RawInst ri = parse_raw_inst();
                terminated = ri.opcode == "ret" || ri.opcode == "br" ||
                             ri.opcode == "condbr";
                insts.push_back(std::move(ri));
            }
            if (!terminated)
                fail("block '" + label + "' lacks a terminator");
        }
        expect_punct('}');
        if (raw_blocks.empty())
            fail("function '@" + fn.name + "' has an empty body");
        build_function(fn_idx, raw_blocks, block_labels, label_index);
    }

    RawInst parse_raw_inst() {
        RawInst ri;
        ri.line = cur().line;
        ri.col = cur().col;
        if (cur().kind == Tk::LocalId) {
            ri.result = cur().text;
            advance();
            if (!is_punct('=')) fail("expected '='");
            advance();
        }
        if (cur().kind != Tk::Ident) fail("expected opcode");
        std::string op = cur().text;
        ri.opcode = op;
        advance();
        if (op == "alloca") {
            ri.imm = expect_int();
        } else if (op == "load" || op == "bitcast") {
            ri.operands.push_back(parse_raw_operand());
        } else if (op == "store") {
            ri.operands.push_back(parse_raw_operand());
            expect_punct(',');
            ri.operands.push_back(parse_raw_operand());
        } else if (op == "gep") {
            ri.operands.push_back(parse_raw_operand());
            expect_punct(',');
            ri.imm = expect_int();
        } else if (op == "memcpy") {
            for (int i = 0; i < 3; ++i) {
                if (i) expect_punct(',');
                ri.operands.push_back(parse_raw_operand());
            }
        } else if (op == "annotate") {
            ri.operands.push_back(parse_raw_operand());
            expect_punct(',');
            if (cur().kind != Tk::Str) fail("expected string literal");
            ri.detail = cur().text;
            advance();
        } else if (op == "phi") {
            do {
                expect_punct('[');
                ri.operands.push_back(parse_raw_operand());
                expect_punct(',');
                ri.labels.push_back(expect_label());
                expect_punct(']');
            } while (accept_punct(','));
        } else if (kBinOps.count(op)) {
            ri.detail = op;
            ri.opcode = "binop";
            ri.operands.push_back(parse_raw_operand());
            expect_punct(',');
            ri.operands.push_back(parse_raw_operand());
        } else if (kUnOps.count(op)) {
            ri.detail = op;
            ri.opcode = "unop";
            ri.operands.push_back(parse_raw_operand());
        } else if (op == "icmp") {
            if (cur().kind != Tk::Ident || !kIcmpPreds.count(cur().text))
                fail("expected icmp predicate");
            ri.detail = cur().text;
            advance();
            ri.operands.push_back(parse_raw_operand());
            expect_punct(',');
            ri.operands.push_back(parse_raw_operand());
        } else if (op == "call") {
            if (cur().kind == Tk::GlobalId) {
                ri.callee = cur().text;
                advance();
            } else if (cur().kind == Tk::LocalId) {
                ri.indirect_call = true;
                ri.operands.push_back(parse_raw_operand());
            } else {
                fail("expected call target");
            }
            expect_punct('(');
            if (!is_punct(')')) {
                do {
                    ri.operands.push_back(parse_raw_operand());
                } while (accept_punct(','));
            }
            expect_punct(')');
        } else if (op == "ret") {
            if (cur().kind == Tk::LocalId || cur().kind == Tk::GlobalId ||
                cur().kind == Tk::Int || is_ident("null"))
                ri.operands.push_back(parse_raw_operand());
        } else if (op == "br") {
            ri.labels.push_back(expect_label());
        } else if (op == "condbr") {
            ri.operands.push_back(parse_raw_operand());
            expect_punct(',');
            ri.labels.push_back(expect_label());
            expect_punct(',');
            ri.labels.push_back(expect_label());
        } else {
            throw ParseError("unknown opcode '" + op + "'", ri.line, ri.col);
        }
        if (is_ident("!loc")) {
            advance();
            if (cur().kind != Tk::Str) fail("expected location string");
            std::string s = cur().text;
            advance();
            size_t colon = s.rfind(':');
            if (colon == std::string::npos)
                throw ParseError("malformed !loc, want \"file:line\"", ri.line,
                                 ri.col);
            ri.loc.file = s.substr(0, colon);
            ri.loc.line = std::atoi(s.c_str() + colon + 1);
        }
        return ri;
    }

    ValueId const_int(int64_t v) {
        auto it = const_ints_.find(v);
        if (it != const_ints_.end()) return it->second;
        ValueInfo vi;
        vi.kind = ValueKind::ConstInt;
        vi.name = std::to_string(v);
        vi.shape = Shape::Val;
        vi.const_val = v;
        ValueId id = add_value(std::move(vi));
        const_ints_[v] = id;
        return id;
    }

    ValueId const_null() {
        if (null_value_ == kNoValue) {
            ValueInfo vi;
            vi.kind = ValueKind::ConstNull;
            vi.name = "null";
            vi.shape = Shape::Ptr;
            null_value_ = add_value(std::move(vi));
        }
        return null_value_;
    }

    void build_function(uint32_t fn_idx, std::vector<std::vector<RawInst>>& raw_blocks,
                        std::vector<std::string>& block_labels,
                        std::map<std::string, uint32_t>& label_index) {
        SirFunction& fn = m_.functions[fn_idx];
        // Register every result name first; phi operands may reference values
        // defined later in the body.
        std::map<std::string, ValueId> locals;
        for (uint32_t i = 0; i < fn.params.size(); ++i)
            locals[m_.values[fn.params[i]].name.substr(1)] = fn.params[i];
        uint32_t index_in_func = 0;
        for (uint32_t b = 0; b < raw_blocks.size(); ++b) {
            for (uint32_t i = 0; i < raw_blocks[b].size(); ++i) {
                RawInst& ri = raw_blocks[b][i];
                if (ri.result.empty()) continue;
                if (ri.opcode == "store" || ri.opcode == "memcpy" ||
                    ri.opcode == "annotate" || ri.opcode == "ret" ||
                    ri.opcode == "br" || ri.opcode == "condbr")
                    throw ParseError("'" + ri.opcode + "' defines no value", ri.line,
                                     ri.col);
                if (locals.count(ri.result))
                    throw ParseError("multiply-defined value '%" + ri.result + "'",
                                     ri.line, ri.col);
                ValueInfo vi;
                vi.kind = ValueKind::Inst;
                vi.name = "%" + ri.result;
                vi.func = fn_idx;
                vi.def = {fn_idx, b, i};
                locals[ri.result] = add_value(std::move(vi));
            }
        }
        auto resolve = [&](const RawOperand& op) -> ValueId {
            switch (op.kind) {
            case RawOperand::Local: {
                auto it = locals.find(op.name);
                if (it == locals.end())
                    throw ParseError("use of undefined value '%" + op.name + "'",
                                     op.line, op.col);
                return it->second;
            }
            case RawOperand::Global: {
                auto git = global_names_.find(op.name);
                if (git != global_names_.end()) return git->second;
                auto fit = m_.func_by_name.find(op.name);
                if (fit != m_.func_by_name.end()) return fn_values_[fit->second];
                throw ParseError("unknown symbol '@" + op.name + "'", op.line,
                                 op.col);
            }
            case RawOperand::Int: return const_int(op.number);
            case RawOperand::Null: return const_null();
            }
            return kNoValue;
        };
        for (uint32_t b = 0; b < raw_blocks.size(); ++b) {
            fn.blocks.emplace_back();
            fn.blocks.back().label = block_labels[b];
        }
        for (uint32_t b = 0; b < raw_blocks.size(); ++b) {
            for (uint32_t i = 0; i < raw_blocks[b].size(); ++i) {
                RawInst& ri = raw_blocks[b][i];
                SirInstruction inst;
                inst.loc = ri.loc;
                inst.imm = ri.imm;
                inst.detail = ri.detail;
                inst.index_in_func = index_in_func++;
                if (!ri.result.empty()) inst.result = locals[ri.result];
                if (ri.opcode == "alloca") inst.op = Opcode::Alloca;
                else if (ri.opcode == "load") inst.op = Opcode::Load;
                else if (ri.opcode == "store") inst.op = Opcode::Store;
                else if (ri.opcode == "gep") inst.op = Opcode::Gep;
                else if (ri.opcode == "bitcast") inst.op = Opcode::Bitcast;
                else if (ri.opcode == "phi") inst.op = Opcode::Phi;
                else if (ri.opcode == "binop") inst.op = Opcode::BinOp;
                else if (ri.opcode == "unop") inst.op = Opcode::UnOp;
                else if (ri.opcode == "icmp") inst.op = Opcode::Icmp;
                else if (ri.opcode == "call") inst.op = Opcode::Call;
                else if (ri.opcode == "memcpy") inst.op = Opcode::Memcpy;
                else if (ri.opcode == "annotate") inst.op = Opcode::Annotate;
                else if (ri.opcode == "ret") inst.op = Opcode::Ret;
                else if (ri.opcode == "br") inst.op = Opcode::Br;
                else if (ri.opcode == "condbr") inst.op = Opcode::CondBr;
                else assert(false && "unreachable");
                for (const auto& op : ri.operands)
                    inst.operands.push_back(resolve(op));
                if (inst.op == Opcode::Call) {
                    if (ri.indirect_call) {
                        inst.callee_value = inst.operands.front();
                        inst.operands.erase(inst.operands.begin());
                        if (m_.values[inst.callee_value].shape == Shape::Val)
                            throw ParseError("indirect call through a non-pointer",
                                             ri.line, ri.col);
                    } else {
                        auto fit = m_.func_by_name.find(ri.callee);
                        if (fit == m_.func_by_name.end())
                            throw ParseError("call to unknown function '@" +
                                                 ri.callee + "'",
                                             ri.line, ri.col);
                        inst.callee_fn = fit->second;
                        const SirFunction& callee = m_.functions[fit->second];
                        size_t want = callee.defined ? callee.params.size()
                                                     : callee.param_shapes.size();
                        if (inst.operands.size() != want)
                            throw ParseError(
                                "call to '@" + ri.callee + "' expects " +
                                    std::to_string(want) + " arguments, got " +
                                    std::to_string(inst.operands.size()),
                                ri.line, ri.col);
                        if (inst.result != kNoValue && !callee.defined &&
                            !callee.has_ret_value)
                            throw ParseError("'@" + ri.callee +
                                                 "' does not return a value",
                                             ri.line, ri.col);
                    }
                }
                if (inst.op == Opcode::Phi || inst.op == Opcode::Br ||
                    inst.op == Opcode::CondBr) {
                    for (const auto& lbl : ri.labels) {
                        auto lit = label_index.find(lbl);
                        if (lit == label_index.end())
                            throw ParseError("unknown block label '" + lbl + "'",
                                             ri.line, ri.col);
                        if (inst.op == Opcode::Phi)
                            inst.phi_blocks.push_back(lit->second);
                        else
                            inst.succ_blocks.push_back(lit->second);
                    }
                }
                fn.blocks[b].insts.push_back(std::move(inst));
            }
        }
        for (const auto& blk : fn.blocks)
            for (const auto& in : blk.insts)
                if (in.op == Opcode::Ret && !in.operands.empty())
                    fn.has_ret_value = true;
    }

    // Shape inference: iterate until stable so call results and phis settle.
    void infer_shapes() {
        auto join = [](Shape a, Shape b) {
            if (a == b) return a;
            return Shape::Unknown;
        };
        bool changed = true;
        int rounds = 0;
        while (changed && rounds++ < 16) {
            changed = false;
            for (auto& fn : m_.functions) {
                if (!fn.defined) continue;
                for (auto& blk : fn.blocks) {
                    for (auto& in : blk.insts) {
                        if (in.result == kNoValue) continue;
                        ValueInfo& vi = m_.values[in.result];
                        Shape next = vi.shape;
                        switch (in.op) {
                        case Opcode::Alloca:
                        case Opcode::Gep: next = Shape::Ptr; break;
                        case Opcode::Bitcast:
                            next = m_.values[in.operands[0]].shape;
                            break;
                        case Opcode::Load: next = Shape::Unknown; break;
                        case Opcode::Phi: {
                            bool first = true;
                            for (ValueId v : in.operands) {
                                Shape s = m_.values[v].shape;
                                next = first ? s : join(next, s);
                                first = false;
                            }
                            break;
                        }
                        case Opcode::BinOp:
                        case Opcode::UnOp:
                        case Opcode::Icmp: next = Shape::Val; break;
                        case Opcode::Call:
                            if (in.callee_fn != kNoFunc)
                                next = m_.functions[in.callee_fn].ret_shape;
                            else
                                next = Shape::Unknown;
                            break;
                        default: break;
                        }
                        if (next != vi.shape) {
                            vi.shape = next;
                            changed = true;
                        }
                    }
                }
                // Defined-function return shape: join over ret operands.
                Shape rs = fn.ret_shape;
                bool first = !fn.has_ret_value;
                Shape acc = Shape::Unknown;
                bool any = false;
                for (auto& blk : fn.blocks) {
                    for (auto& in : blk.insts) {
                        if (in.op != Opcode::Ret || in.operands.empty()) continue;
                        Shape s = m_.values[in.operands[0]].shape;
                        acc = any ? join(acc, s) : s;
                        any = true;
                    }
                }
                (void)first;
                if (any && acc != rs) {
                    fn.ret_shape = acc;
                    changed = true;
                }
            }
        }
    }

    std::vector<Token> toks_;
    size_t pos_ = 0;
    SirModule m_;
    std::map<std::string, ValueId> global_names_;
    std::map<int64_t, ValueId> const_ints_;
    ValueId null_value_ = kNoValue;
    std::vector<ValueId> fn_values_;
};

// --- verification ---------------------------------------------------------

struct Cfg {
    std::vector<std::vector<uint32_t>> preds, succs;
    std::vector<bool> reachable;
    std::vector<std::set<uint32_t>> dom;  // dominator sets over reachable blocks

    bool dominates(uint32_t a, uint32_t b) const {
        return b < dom.size() && dom[b].count(a) != 0;
    }
};

Cfg build_cfg(const SirFunction& fn) {
    Cfg cfg;
    size_t n = fn.blocks.size();
    cfg.preds.resize(n);
    cfg.succs.resize(n);
    cfg.reachable.assign(n, false);
    for (uint32_t b = 0; b < n; ++b) {
        if (fn.blocks[b].insts.empty()) continue;
        const SirInstruction& term = fn.blocks[b].insts.back();
        for (uint32_t s : term.succ_blocks) {
            cfg.succs[b].push_back(s);
            cfg.preds[s].push_back(b);
        }
    }
    std::vector<uint32_t> work = {0};
    if (n > 0) cfg.reachable[0] = true;
    while (!work.empty()) {
        uint32_t b = work.back();
        work.pop_back();
        for (uint32_t s : cfg.succs[b]) {
            if (!cfg.reachable[s]) {
                cfg.reachable[s] = true;
                work.push_back(s);
            }
        }
    }
    // Iterative dominator sets; small CFGs keep this cheap.
    cfg.dom.resize(n);
    std::set<uint32_t> all;
    for (uint32_t b = 0; b < n; ++b)
        if (cfg.reachable[b]) all.insert(b);
    for (uint32_t b = 0; b < n; ++b)
        if (cfg.reachable[b]) cfg.dom[b] = b == 0 ? std::set<uint32_t>{0} : all;
    bool changed = true;
    while (changed) {
        changed = false;
        for (uint32_t b = 1; b < n; ++b) {
            if (!cfg.reachable[b]) continue;
            std::set<uint32_t> next;
            bool first = true;
            for (uint32_t p : cfg.preds[b]) {
                if (!cfg.reachable[p]) continue;
                if (first) {
                    next = cfg.dom[p];
                    first = false;
                } else {
                    std::set<uint32_t> merged;
                    std::set_intersection(next.begin(), next.end(),
                                          cfg.dom[p].begin(), cfg.dom[p].end(),
                                          std::inserter(merged, merged.begin()));
                    next = std::move(merged);
                }
            }
            next.insert(b);
            if (next != cfg.dom[b]) {
                cfg.dom[b] = std::move(next);
                changed = true;
            }
        }
    }
    return cfg;
}

size_t expected_arity(Opcode op) {
    switch (op) {
    case Opcode::Alloca: return 0;
    case Opcode::Load: return 1;
    case Opcode::Store: return 2;
    case Opcode::Gep: return 1;
    case Opcode::Bitcast: return 1;
    case Opcode::BinOp: return 2;
    case Opcode::UnOp: return 1;
    case Opcode::Icmp: return 2;
    case Opcode::Memcpy: return 3;
    case Opcode::Annotate: return 1;
    case Opcode::CondBr: return 1;
    default: return SIZE_MAX;  // variable arity
    }
}

} // namespace

SirModule parse_sir(const std::string& text) { return SirParser(text).parse(); }

Diagnostics verify_module(const SirModule& m) {
    Diagnostics diags;
    auto report = [&](const SirFunction& fn, const SirInstruction& in,
                      const std::string& msg) {
        diags.push_back("@" + fn.name + " #" + std::to_string(in.index_in_func) +
                        " (" + to_string(in.op) + "): " + msg);
    };
    for (uint32_t fi = 0; fi < m.functions.size(); ++fi) {
        const SirFunction& fn = m.functions[fi];
        if (!fn.defined) continue;
        if (fn.blocks.empty()) {
            diags.push_back("@" + fn.name + ": empty body");
            continue;
        }
        Cfg cfg = build_cfg(fn);
        for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
            const SirBlock& blk = fn.blocks[b];
            if (blk.insts.empty() || !blk.insts.back().is_terminator()) {
                diags.push_back("@" + fn.name + " block '" + blk.label +
                                "': missing terminator");
                continue;
            }
            bool past_phis = false;
            for (uint32_t i = 0; i < blk.insts.size(); ++i) {
                const SirInstruction& in = blk.insts[i];
                if (in.is_terminator() && i + 1 != blk.insts.size())
                    report(fn, in, "terminator in the middle of a block");
                if (in.op == Opcode::Phi) {
                    if (past_phis)
                        report(fn, in, "phi after non-phi instruction");
                } else {
                    past_phis = true;
                }
                size_t want = expected_arity(in.op);
                if (want != SIZE_MAX && in.operands.size() != want)
                    report(fn, in, std::string(to_string(in.op)) + " arity: want " +
                                       std::to_string(want) + ", got " +
                                       std::to_string(in.operands.size()));
                for (ValueId v : in.operands) {
                    if (v == kNoValue || v >= m.values.size()) {
                        report(fn, in, "operand references no value");
                        continue;
                    }
                    const ValueInfo& vi = m.values[v];
                    if ((vi.kind == ValueKind::Inst || vi.kind == ValueKind::Param) &&
                        vi.func != fi)
                        report(fn, in, "operand " + vi.name +
                                           " belongs to another function");
                }
                // Shape positions: definite-val values cannot act as addresses.
                auto addr_ok = [&](ValueId v) {
                    return v < m.values.size() && m.values[v].shape != Shape::Val;
                };
                switch (in.op) {
                case Opcode::Load:
                    if (in.operands.size() == 1 && !addr_ok(in.operands[0]))
                        report(fn, in, "load address has value shape");
                    break;
                case Opcode::Store:
                    if (in.operands.size() == 2 && !addr_ok(in.operands[1]))
                        report(fn, in, "store address has value shape");
                    break;
                case Opcode::Gep:
                    if (in.operands.size() == 1 && !addr_ok(in.operands[0]))
                        report(fn, in, "gep base has value shape");
                    break;
                case Opcode::Memcpy:
                    if (in.operands.size() == 3) {
                        if (!addr_ok(in.operands[0]))
                            report(fn, in, "memcpy destination has value shape");
                        if (!addr_ok(in.operands[1]))
                            report(fn, in, "memcpy source has value shape");
                    }
                    break;
                case Opcode::CondBr:
                    if (in.operands.size() == 1 &&
                        m.values[in.operands[0]].shape == Shape::Ptr)
                        report(fn, in, "condbr condition has pointer shape");
                    break;
                case Opcode::Phi: {
                    if (in.operands.size() != in.phi_blocks.size()) {
                        report(fn, in, "phi operand/label count mismatch");
                        break;
                    }
                    std::set<uint32_t> incoming(in.phi_blocks.begin(),
                                                in.phi_blocks.end());
                    if (incoming.size() != in.phi_blocks.size())
                        report(fn, in, "phi lists a predecessor twice");
                    std::set<uint32_t> preds(cfg.preds[b].begin(),
                                             cfg.preds[b].end());
                    if (incoming != preds)
                        report(fn, in,
                               "phi incoming blocks do not match predecessors (" +
                                   std::to_string(incoming.size()) + " vs " +
                                   std::to_string(preds.size()) + ")");
                    break;
                }
                case Opcode::Call: {
                    if (in.callee_fn != kNoFunc) {
                        const SirFunction& callee = m.functions[in.callee_fn];
                        size_t want = callee.defined ? callee.params.size()
                                                     : callee.param_shapes.size();
                        if (in.operands.size() != want) {
                            report(fn, in, "call arity mismatch");
                            break;
                        }
                        for (size_t a = 0; a < in.operands.size(); ++a) {
                            Shape ps = callee.param_shapes[a];
                            Shape as = m.values[in.operands[a]].shape;
                            if ((ps == Shape::Ptr && as == Shape::Val) ||
                                (ps == Shape::Val && as == Shape::Ptr))
                                report(fn, in, "argument " + std::to_string(a) +
                                                   " shape mismatch");
                        }
                    }
                    break;
                }
                default: break;
                }
                // SSA dominance for instruction-defined operands.
                if (!cfg.reachable[b]) continue;
                for (size_t oi = 0; oi < in.operands.size(); ++oi) {
                    ValueId v = in.operands[oi];
                    if (v >= m.values.size()) continue;
                    const ValueInfo& vi = m.values[v];
                    if (vi.kind != ValueKind::Inst || vi.func != fi) continue;
                    uint32_t db = vi.def.block, di = vi.def.index;
                    bool ok;
                    if (in.op == Opcode::Phi) {
                        uint32_t pred = in.phi_blocks.size() > oi ? in.phi_blocks[oi]
                                                                  : UINT32_MAX;
                        ok = pred != UINT32_MAX &&
                             (db == pred || cfg.dominates(db, pred));
                    } else if (db == b) {
                        ok = di < i;
                    } else {
                        ok = cfg.dominates(db, b);
                    }
                    if (!ok)
                        report(fn, in, "use of " + vi.name +
                                           " is not dominated by its definition");
                }
            }
        }
        // Return-value consistency.
        bool has_val = false, has_void = false;
        for (const auto& blk : fn.blocks)
            for (const auto& in : blk.insts)
                if (in.op == Opcode::Ret)
                    (in.operands.empty() ? has_void : has_val) = true;
        if (has_val && has_void)
            diags.push_back("@" + fn.name + ": mixes 'ret value' and bare 'ret'");
    }
    return diags;
}

InsensitiveDataTable collect_insensitive(const SirModule& m, Diagnostics* warnings) {
    InsensitiveDataTable table;
    for (const auto& fn : m.functions) {
        for (const auto& blk : fn.blocks) {
            for (const auto& in : blk.insts) {
                if (in.op != Opcode::Annotate || in.detail != "INSENSITIVE")
                    continue;
                ValueId target = in.operands.empty() ? kNoValue : in.operands[0];
                if (target == kNoValue) continue;
                const ValueInfo& vi = m.values[target];
                bool is_alloc = false;
                if (vi.kind == ValueKind::Global) {
                    is_alloc = true;
                } else if (vi.kind == ValueKind::Inst) {
                    const SirInstruction& def = m.instr(vi.def);
                    if (def.op == Opcode::Alloca) {
                        is_alloc = true;
                    } else if (def.op == Opcode::Call && def.callee_fn != kNoFunc &&
                               is_malloc_name(m.functions[def.callee_fn].name)) {
                        is_alloc = true;
                    }
                }
                if (is_alloc) {
                    table.entries.insert(target);
                } else if (warnings) {
                    warnings->push_back("annotate target " + m.value_label(target) +
                                        " is not an allocation site; entry skipped");
                }
            }
        }
    }
    return table;
}

} // namespace etaint
