//===- sir.hpp - the analyzer's SSA intermediate representation -----------===//
//
// SIR is a small LLVM-flavored SSA language covering exactly the operations
// the leak analysis needs: alloca/load/store/gep/bitcast/phi, unary and
// binary arithmetic, icmp, direct and indirect calls, memcpy, and a
// first-class `annotate` instruction for sensitivity annotations. Modules are
// immutable after parse + verify and shared read-only by every analysis.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "enclave_taint/diag.hpp"

namespace etaint {

using ValueId = uint32_t;
inline constexpr ValueId kNoValue = UINT32_MAX;
inline constexpr uint32_t kNoFunc = UINT32_MAX;

// Two-shape type system: "val" (no pointer structure) and "ptr". Load and
// call results may be either, so they carry Unknown until context narrows it.
enum class Shape { Val, Ptr, Unknown };

enum class Opcode {
    Alloca,
    Load,
    Store,
    Gep,
    Bitcast,
    Phi,
    BinOp,
    UnOp,
    Icmp,
    Call,
    Memcpy,
    Annotate,
    Ret,
    Br,
    CondBr,
};

const char* to_string(Opcode op);

// Reference to one instruction: (function, block, index within block).
struct InstrRef {
    uint32_t fn = kNoFunc;
    uint32_t block = 0;
    uint32_t index = 0;

    bool valid() const { return fn != kNoFunc; }
    auto operator<=>(const InstrRef&) const = default;
};

struct SirInstruction {
    Opcode op;
    ValueId result = kNoValue;
    std::vector<ValueId> operands;
    // Operand layout:
    //   Load    {address}            Store   {value, address}
    //   Gep     {base} + imm index   Bitcast {src}
    //   Memcpy  {dst, src, len}      Annotate{target} + detail string
    //   BinOp   {lhs, rhs}           UnOp    {src}
    //   Icmp    {lhs, rhs}           Call    {args...} (+callee_value if indirect)
    //   Ret     {} or {value}        CondBr  {cond} + succ_blocks
    std::string detail;       // binop/unop name, icmp predicate, annotate text
    int64_t imm = 0;          // alloca size, gep field index
    uint32_t callee_fn = kNoFunc;   // direct call target (function index)
    ValueId callee_value = kNoValue;  // indirect call target operand
    std::vector<uint32_t> phi_blocks; // phi: incoming block per operand
    std::vector<uint32_t> succ_blocks;
    SourceLoc loc;
    uint32_t index_in_func = 0;  // position for "func:#idx" fallback locations

    bool is_terminator() const {
        return op == Opcode::Ret || op == Opcode::Br || op == Opcode::CondBr;
    }
};

struct SirBlock {
    std::string label;
    std::vector<SirInstruction> insts;
};

struct SirFunction {
    std::string name;
    bool defined = false;  // false: external declaration
    std::vector<ValueId> params;
    std::vector<Shape> param_shapes;
    Shape ret_shape = Shape::Val;
    bool has_ret_value = false;  // declares: annotated; defines: inferred
    std::vector<SirBlock> blocks;  // blocks[0] is the entry
};

enum class ValueKind { Inst, Param, Global, Function, ConstInt, ConstNull };

struct ValueInfo {
    ValueKind kind = ValueKind::Inst;
    std::string name;  // "%x", "@g", "@f", or a literal spelling
    uint32_t func = kNoFunc;
    Shape shape = Shape::Unknown;
    InstrRef def;            // defining instruction for Inst values
    uint32_t param_index = 0;
    int64_t const_val = 0;
};

struct SirModule {
    std::vector<SirFunction> functions;  // parse order, defines and declares
    std::map<std::string, uint32_t> func_by_name;
    std::vector<ValueInfo> values;
    std::vector<ValueId> globals;        // parse order
    std::map<std::string, Shape> global_pointee;

    const SirFunction* find_function(const std::string& name) const {
        auto it = func_by_name.find(name);
        return it == func_by_name.end() ? nullptr : &functions[it->second];
    }
    uint32_t function_index(const std::string& name) const {
        auto it = func_by_name.find(name);
        return it == func_by_name.end() ? kNoFunc : it->second;
    }
    const SirInstruction& instr(const InstrRef& r) const {
        return functions[r.fn].blocks[r.block].insts[r.index];
    }
    const ValueInfo& value(ValueId v) const { return values[v]; }
    bool is_pointer_like(ValueId v) const {
        return values[v].shape != Shape::Val;
    }
    // "file:line" when a !loc is present, else "func:#idx".
    std::string loc_str(const InstrRef& r) const;
    std::string value_label(ValueId v) const;  // e.g. "%key@ecall_seal"
};

struct InsensitiveDataTable {
    // Allocation sites identified by the value that defines them: an alloca
    // result, a global, or a malloc call result.
    std::set<ValueId> entries;

    bool contains(ValueId v) const { return entries.count(v) != 0; }
};

// Parses SIR text. Throws ParseError on syntax errors, use-before-def,
// multiply-defined value ids, unknown opcodes, and arity violations.
SirModule parse_sir(const std::string& text);

// Structural checks beyond what the parser enforces: SSA dominance, phi
// incoming lists vs. CFG predecessors, operand shape positions, call
// signature consistency. Returns diagnostics; empty means well-formed.
Diagnostics verify_module(const SirModule& m);

// Collects every allocation site annotated "INSENSITIVE". Annotations on
// non-allocation values produce a warning and are skipped.
InsensitiveDataTable collect_insensitive(const SirModule& m,
                                         Diagnostics* warnings = nullptr);

// True when called with a name the module resolves to the C allocator.
bool is_malloc_name(const std::string& name);

} // namespace etaint
