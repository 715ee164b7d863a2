//===- generator.cpp - seeded random program construction ------------------===//

#include "enclave_taint/generator.hpp"

#include <cassert>
#include <random>
#include <sstream>
#include <vector>

namespace etaint {

namespace {

struct Var {
    std::string name;  // without the % sigil
    int shape;         // 0 = val, 1 = ptr, 2 = unknown (load/call results)
};

class ProgramGen {
public:
    ProgramGen(uint64_t seed, size_t budget) : rng_(seed), budget_(budget) {}

    GeneratedProgram run(uint64_t seed) {
        nfuncs_ = 1 + (int)(rng_() % 4);
        while (budget_ / nfuncs_ < 6 && nfuncs_ > 1) --nfuncs_;
        use_ocall_sink_ = rng_() % 2 == 0;
        use_ocall_getbuf_ = rng_() % 2 == 0;

        // Helper signatures, generated before bodies so calls can be typed.
        fn_params_.resize(nfuncs_);
        fn_has_ret_.resize(nfuncs_);
        fn_ret_ptr_.resize(nfuncs_);
        for (int f = 0; f < nfuncs_; ++f) {
            int nparams = (int)(rng_() % 4);
            if (f == 0 && nparams == 0) nparams = 1;
            for (int p = 0; p < nparams; ++p)
                fn_params_[f].push_back(rng_() % 2 == 0 ? 1 : 0);
            fn_has_ret_[f] = f == 0 ? true : rng_() % 4 != 0;
            fn_ret_ptr_[f] = fn_has_ret_[f] && rng_() % 4 == 0;
        }

        out_ << "declare @malloc(val) -> ptr\n";
        if (use_ocall_sink_) out_ << "declare @ocall_sink(ptr, val)\n";
        if (use_ocall_getbuf_) out_ << "declare @ocall_getbuf() -> ptr\n";
        out_ << "\n";
        for (int f = 0; f < nfuncs_; ++f) emit_function(f);

        GeneratedProgram prog;
        prog.seed = seed;
        prog.sir_text = out_.str();
        std::ostringstream edl;
        edl << "trusted {\n    public void " << fname(0) << "(";
        for (size_t p = 0; p < fn_params_[0].size(); ++p) {
            if (p) edl << ", ";
            if (fn_params_[0][p] == 1)
                edl << (p % 2 == 0 ? "[user_check] " : "[out, size=8] ")
                    << "void* a" << p;
            else
                edl << "int a" << p;
        }
        edl << ");\n};\n";
        if (use_ocall_sink_ || use_ocall_getbuf_) {
            edl << "untrusted {\n";
            if (use_ocall_sink_)
                edl << "    void ocall_sink([in, size=len] void* buf, int len);\n";
            if (use_ocall_getbuf_) edl << "    void* ocall_getbuf();\n";
            edl << "};\n";
        }
        prog.edl_text = edl.str();
        return prog;
    }

private:
    std::string fname(int f) const {
        return f == 0 ? "ecall_entry" : "helper" + std::to_string(f);
    }

    std::string fresh() { return "v" + std::to_string(counter_++); }

    uint64_t pick(uint64_t n) { return rng_() % n; }

    // Values usable at the current point: everything in scopes_.
    const Var* pick_var(int shape_mask) {
        std::vector<const Var*> cands;
        for (const auto& scope : scopes_)
            for (const auto& v : scope)
                if (shape_mask & (1 << v.shape)) cands.push_back(&v);
        if (cands.empty()) return nullptr;
        return cands[pick(cands.size())];
    }

    std::string val_operand() {
        // Literal or any val/unknown-shaped variable.
        if (pick(3) == 0) return std::to_string((int64_t)pick(64));
        const Var* v = pick_var(0b101);
        return v ? "%" + v->name : std::to_string((int64_t)pick(64));
    }

    void define(const std::string& name, int shape) {
        scopes_.back().push_back({name, shape});
    }

    void line(const std::string& s) {
        out_ << "  " << s << "\n";
        --budget_left_;
    }

    // One random non-terminator instruction; returns false if nothing fit.
    bool emit_random_inst() {
        int tries = 6;
        while (tries-- > 0) {
            switch (pick(12)) {
            case 0: {  // alloca
                std::string r = fresh();
                line("%" + r + " = alloca " + std::to_string(8 + pick(4) * 8));
                define(r, 1);
                return true;
            }
            case 1: {  // store
                const Var* p = pick_var(0b110);
                if (!p) break;
                line("store " + val_operand() + ", %" + p->name);
                return true;
            }
            case 2: {  // load
                const Var* p = pick_var(0b110);
                if (!p) break;
                std::string r = fresh();
                line("%" + r + " = load %" + p->name);
                define(r, 2);
                return true;
            }
            case 3: {  // gep
                const Var* p = pick_var(0b010);
                if (!p) break;
                std::string r = fresh();
                line("%" + r + " = gep %" + p->name + ", " +
                     std::to_string(pick(4)));
                define(r, 1);
                return true;
            }
            case 4: {  // bitcast
                const Var* v = pick_var(0b111);
                if (!v) break;
                std::string r = fresh();
                line("%" + r + " = bitcast %" + v->name);
                define(r, v->shape);
                return true;
            }
            case 5: {  // binop
                std::string r = fresh();
                const char* ops[] = {"add", "sub", "mul", "xor", "and"};
                line("%" + r + " = " + ops[pick(5)] + " " + val_operand() + ", " +
                     val_operand());
                define(r, 0);
                return true;
            }
            case 6: {  // unop
                const Var* v = pick_var(0b101);
                if (!v) break;
                std::string r = fresh();
                line("%" + r + " = " + (pick(2) ? "neg %" : "not %") + v->name);
                define(r, 0);
                return true;
            }
            case 7: {  // icmp over values
                std::string r = fresh();
                line("%" + r + " = icmp lt " + val_operand() + ", " +
                     val_operand());
                define(r, 0);
                return true;
            }
            case 8: {  // malloc, sometimes null-checked
                std::string r = fresh();
                line("%" + r + " = call @malloc(" + std::to_string(8 + pick(8)) +
                     ")");
                define(r, 1);
                if (budget_left_ > 1 && pick(2) == 0) {
                    std::string c = fresh();
                    line("%" + c + " = icmp eq %" + r + ", null");
                    define(c, 0);
                }
                return true;
            }
            case 9: {  // call a later helper
                std::vector<int> callable;
                for (int f = cur_fn_ + 1; f < nfuncs_; ++f) callable.push_back(f);
                if (callable.empty()) break;
                int callee = callable[pick(callable.size())];
                std::vector<std::string> args;
                bool ok = true;
                for (int ps : fn_params_[callee]) {
                    if (ps == 1) {
                        const Var* p = pick_var(0b110);
                        if (!p) {
                            ok = false;
                            break;
                        }
                        args.push_back("%" + p->name);
                    } else {
                        args.push_back(val_operand());
                    }
                }
                if (!ok) break;
                std::string call = "call @" + fname(callee) + "(";
                for (size_t a = 0; a < args.size(); ++a)
                    call += (a ? ", " : "") + args[a];
                call += ")";
                if (fn_has_ret_[callee]) {
                    std::string r = fresh();
                    line("%" + r + " = " + call);
                    define(r, fn_ret_ptr_[callee] ? 1 : 0);
                } else {
                    line(call);
                }
                return true;
            }
            case 10: {  // ocall uses
                if (use_ocall_sink_ && pick(2) == 0) {
                    const Var* p = pick_var(0b110);
                    if (!p) break;
                    line("call @ocall_sink(%" + p->name + ", " + val_operand() +
                         ")");
                    return true;
                }
                if (use_ocall_getbuf_) {
                    std::string r = fresh();
                    line("%" + r + " = call @ocall_getbuf()");
                    define(r, 1);
                    return true;
                }
                break;
            }
            case 11: {  // memcpy or annotate
                const Var* d = pick_var(0b010);
                const Var* s = pick_var(0b010);
                if (d && s && pick(3) != 0) {
                    line("memcpy %" + d->name + ", %" + s->name + ", 8");
                    return true;
                }
                if (d && pick(4) == 0) {
                    line("annotate %" + d->name + ", \"INSENSITIVE\"");
                    return true;
                }
                break;
            }
            }
        }
        return false;
    }

    void emit_straight(size_t count) {
        for (size_t i = 0; i < count && budget_left_ > 0; ++i)
            if (!emit_random_inst()) break;
    }

    // if/else with an optional phi at the merge point.
    void emit_diamond() {
        std::string c = fresh();
        line("%" + c + " = icmp lt " + val_operand() + ", " + val_operand());
        define(c, 0);
        int id = block_counter_++;
        std::string then_b = "then" + std::to_string(id);
        std::string else_b = "else" + std::to_string(id);
        std::string join_b = "join" + std::to_string(id);
        out_ << "  condbr %" << c << ", " << then_b << ", " << else_b << "\n";
        --budget_left_;

        out_ << then_b << ":\n";
        scopes_.emplace_back();
        emit_straight(1 + pick(3));
        const Var* tv = pick_var(0b001);
        std::string then_val = tv ? tv->name : "";
        scopes_.pop_back();
        out_ << "  br " << join_b << "\n";
        --budget_left_;

        out_ << else_b << ":\n";
        scopes_.emplace_back();
        emit_straight(1 + pick(3));
        const Var* ev = pick_var(0b001);
        std::string else_val = ev ? ev->name : "";
        scopes_.pop_back();
        out_ << "  br " << join_b << "\n";
        --budget_left_;

        out_ << join_b << ":\n";
        if (!then_val.empty() && !else_val.empty() && budget_left_ > 0) {
            std::string r = fresh();
            line("%" + r + " = phi [%" + then_val + ", " + then_b + "], [%" +
                 else_val + ", " + else_b + "]");
            define(r, 0);
        }
    }

    // Counted loop; the trip count is a small constant so interpretation
    // always terminates.
    void emit_loop() {
        int id = block_counter_++;
        std::string head = "head" + std::to_string(id);
        std::string body = "body" + std::to_string(id);
        std::string exit = "exit" + std::to_string(id);
        std::string iv = fresh(), ivn = fresh(), cond = fresh();
        out_ << "  br " << head << "\n";
        --budget_left_;
        std::string prev = cur_block_;
        out_ << head << ":\n";
        line("%" + iv + " = phi [0, " + prev + "], [%" + ivn + ", " + body + "]");
        define(iv, 0);
        line("%" + cond + " = icmp lt %" + iv + ", " +
             std::to_string(1 + pick(3)));
        define(cond, 0);
        out_ << "  condbr %" << cond << ", " << body << ", " << exit << "\n";
        --budget_left_;
        out_ << body << ":\n";
        scopes_.emplace_back();
        emit_straight(1 + pick(3));
        scopes_.pop_back();
        line("%" + ivn + " = add %" + iv + ", 1");
        out_ << "  br " << head << "\n";
        --budget_left_;
        out_ << exit << ":\n";
        cur_block_ = exit;
    }

    void emit_function(int f) {
        cur_fn_ = f;
        budget_left_ = (int64_t)(budget_ / nfuncs_);
        scopes_.clear();
        scopes_.emplace_back();
        out_ << "define @" << fname(f) << "(";
        for (size_t p = 0; p < fn_params_[f].size(); ++p) {
            std::string pn = "a" + std::to_string(p);
            if (p) out_ << ", ";
            out_ << "%" << pn << ": " << (fn_params_[f][p] == 1 ? "ptr" : "val");
            define(pn, fn_params_[f][p]);
        }
        out_ << ") {\nentry:\n";
        cur_block_ = "entry";
        // Always anchor the body with one alloca so memory rules fire.
        std::string base = fresh();
        line("%" + base + " = alloca 8");
        define(base, 1);
        while (budget_left_ > 4) {
            uint64_t roll = pick(10);
            if (roll == 0 && budget_left_ >= 12) {
                emit_diamond();
                cur_block_ = "join" + std::to_string(block_counter_ - 1);
            } else if (roll == 1 && budget_left_ >= 12) {
                emit_loop();
            } else {
                emit_straight(1 + pick(4));
            }
        }
        if (fn_has_ret_[f]) {
            if (fn_ret_ptr_[f]) {
                const Var* p = pick_var(0b010);
                out_ << "  ret " << (p ? "%" + p->name : "null") << "\n";
            } else {
                out_ << "  ret " << val_operand() << "\n";
            }
        } else {
            out_ << "  ret\n";
        }
        out_ << "}\n\n";
    }

    std::mt19937_64 rng_;
    size_t budget_;
    int64_t budget_left_ = 0;
    int nfuncs_ = 1;
    int cur_fn_ = 0;
    bool use_ocall_sink_ = false, use_ocall_getbuf_ = false;
    std::vector<std::vector<int>> fn_params_;
    std::vector<bool> fn_has_ret_, fn_ret_ptr_;
    std::ostringstream out_;
    std::vector<std::vector<Var>> scopes_;
    uint64_t counter_ = 0;
    int block_counter_ = 0;
    std::string cur_block_ = "entry";
};

} // namespace

GeneratedProgram generate_program(uint64_t seed, size_t budget) {
    assert(budget >= 1 && budget <= 200);
    if (budget < 6) {
        // Tiny budgets degenerate to a single minimal function.
        GeneratedProgram prog;
        prog.seed = seed;
        prog.sir_text = "define @ecall_entry(%a0: val) {\nentry:\n  ret %a0\n}\n";
        prog.edl_text = "trusted {\n    public int ecall_entry(int a0);\n};\n";
        return prog;
    }
    return ProgramGen(seed, budget).run(seed);
}

GeneratedProgram make_scaled_program(size_t instructions, size_t entries) {
    std::ostringstream sir, edl;
    sir << "declare @malloc(val) -> ptr\n";
    sir << "declare @ocall_sink(ptr, val)\n\n";
    edl << "trusted {\n";
    size_t per_entry = instructions / entries;
    if (per_entry < 12) per_entry = 12;
    for (size_t e = 0; e < entries; ++e) {
        std::string fn = "ecall_" + std::to_string(e);
        edl << "    public void " << fn
            << "([user_check] void* uc, [out, size=64] void* outp, int n);\n";
        sir << "define @" << fn << "(%uc: ptr, %outp: ptr, %n: val) {\nentry:\n";
        sir << "  %secret = alloca 32\n";
        sir << "  %buf = alloca 64\n";
        sir << "  store %n, %secret\n";
        size_t body = per_entry > 8 ? per_entry - 8 : 4;
        std::string last = "%n";
        for (size_t i = 0; i < body; ++i) {
            std::string r = "%t" + std::to_string(i);
            switch (i % 4) {
            case 0: sir << "  " << r << " = add " << last << ", 1\n"; break;
            case 1: sir << "  " << r << " = load %secret\n"; break;
            case 2: sir << "  " << r << " = xor " << last << ", 7\n"; break;
            case 3:
                sir << "  store " << last << ", %buf\n";
                sir << "  " << r << " = load %buf\n";
                break;
            }
            last = r;
        }
        sir << "  store " << last << ", %outp\n";
        sir << "  call @ocall_sink(%buf, %n)\n";
        if (e % 8 == 0) {
            sir << "  %m = call @malloc(16)\n";
            sir << "  store " << last << ", %m\n";
        }
        sir << "  ret\n}\n\n";
    }
    edl << "};\nuntrusted {\n    void ocall_sink([in, size=len] void* buf, int "
           "len);\n};\n";
    GeneratedProgram prog;
    prog.sir_text = sir.str();
    prog.edl_text = edl.str();
    return prog;
}

} // namespace etaint
