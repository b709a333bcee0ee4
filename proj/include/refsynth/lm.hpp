#pragma once

#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "refsynth/synthesis.hpp"

namespace refsynth::lm {

// --- AST ------------------------------------------------------------------------

struct LockedTarget {
    std::string name;
    int ordinal = 1; // the k-th declaration named `name`, in pre-order
};

struct LmRef {
    std::vector<std::string> path;       // concrete dotted reference
    std::optional<LockedTarget> locked;  // or a locked reference [[name#k]]
    int lock_index = -1;                 // dense index among locks, parse order
};

struct LmExpr;
using LmExprPtr = std::shared_ptr<LmExpr>;

struct LmExpr {
    enum class Kind { Num, Add, Ref } kind;
    long value = 0;       // Num
    LmExprPtr lhs, rhs;   // Add
    LmRef ref;            // Ref
};

struct LmDecl;

struct LmModBody {
    std::vector<LmRef> imports;
    std::vector<LmDecl> members;
};

struct LmDecl {
    enum class Kind { Var, Mod } kind;
    std::string name;
    LmExprPtr expr;                    // Var
    std::shared_ptr<LmModBody> body;   // Mod
};

struct LmProgram {
    std::vector<LmDecl> decls;
    int lock_count = 0;
};

struct LmParseError {
    enum class Kind { Parse, UnknownLockTarget } kind = Kind::Parse;
    int line = 1, col = 1;
    std::string message;
};

using LmParseResult = std::variant<LmProgram, LmParseError>;

// --- parser --------------------------------------------------------------------

namespace detail {

struct LmLexer {
    std::string_view text;
    size_t pos = 0;
    int line = 1, col = 1;

    void advance(size_t n) {
        for (size_t i = 0; i < n && pos < text.size(); ++i, ++pos) {
            if (text[pos] == '\n') {
                line++;
                col = 1;
            } else {
                col++;
            }
        }
    }
    void skip_ws() {
        while (pos < text.size()) {
            if (std::isspace(static_cast<unsigned char>(text[pos]))) {
                advance(1);
            } else if (text[pos] == '/' && pos + 1 < text.size() && text[pos + 1] == '/') {
                while (pos < text.size() && text[pos] != '\n') advance(1);
            } else {
                break;
            }
        }
    }
    bool eof() {
        skip_ws();
        return pos >= text.size();
    }
    bool peek_sym(std::string_view s) {
        skip_ws();
        return text.substr(pos, s.size()) == s;
    }
    bool consume_sym(std::string_view s) {
        if (!peek_sym(s)) return false;
        advance(s.size());
        return true;
    }
    std::optional<std::string> peek_ident() {
        skip_ws();
        size_t p = pos;
        if (p >= text.size() || (!std::isalpha(static_cast<unsigned char>(text[p]))))
            return std::nullopt;
        size_t start = p;
        while (p < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[p])) || text[p] == '_'))
            p++;
        return std::string(text.substr(start, p - start));
    }
    std::optional<std::string> ident() {
        auto w = peek_ident();
        if (w) advance(w->size());
        return w;
    }
    std::optional<long> integer() {
        skip_ws();
        size_t p = pos;
        if (p >= text.size() || !std::isdigit(static_cast<unsigned char>(text[p])))
            return std::nullopt;
        long v = 0;
        while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p])))
            v = v * 10 + (text[p++] - '0');
        advance(p - pos);
        return v;
    }
};

struct LmParser {
    LmLexer lx;
    std::optional<LmParseError> error;
    int lock_count = 0;

    bool fail(std::string msg) {
        if (!error) error = LmParseError{LmParseError::Kind::Parse, lx.line, lx.col, std::move(msg)};
        return false;
    }

    std::optional<LmRef> parse_ref() {
        if (lx.consume_sym("[[")) {
            auto name = lx.ident();
            if (!name) {
                fail("expected name in locked reference");
                return std::nullopt;
            }
            if (!lx.consume_sym("#")) {
                fail("expected '#' in locked reference");
                return std::nullopt;
            }
            auto ord = lx.integer();
            if (!ord) {
                fail("expected ordinal in locked reference");
                return std::nullopt;
            }
            if (!lx.consume_sym("]]")) {
                fail("expected ']]' after locked reference");
                return std::nullopt;
            }
            LmRef r;
            r.locked = LockedTarget{*name, static_cast<int>(*ord)};
            r.lock_index = lock_count++;
            return r;
        }
        auto first = lx.ident();
        if (!first) {
            fail("expected reference");
            return std::nullopt;
        }
        LmRef r;
        r.path.push_back(*first);
        while (lx.peek_sym(".")) {
            // '.' binds a qualified name; "::" is handled by the import syntax
            lx.consume_sym(".");
            auto next = lx.ident();
            if (!next) {
                fail("expected identifier after '.'");
                return std::nullopt;
            }
            r.path.push_back(*next);
        }
        return r;
    }

    LmExprPtr parse_atom() {
        if (auto n = lx.integer()) {
            auto e = std::make_shared<LmExpr>();
            e->kind = LmExpr::Kind::Num;
            e->value = *n;
            return e;
        }
        auto r = parse_ref();
        if (!r) return nullptr;
        auto e = std::make_shared<LmExpr>();
        e->kind = LmExpr::Kind::Ref;
        e->ref = std::move(*r);
        return e;
    }

    LmExprPtr parse_expr() {
        auto l = parse_atom();
        if (!l) return nullptr;
        while (lx.peek_sym("+")) {
            lx.consume_sym("+");
            auto r = parse_atom();
            if (!r) return nullptr;
            auto e = std::make_shared<LmExpr>();
            e->kind = LmExpr::Kind::Add;
            e->lhs = std::move(l);
            e->rhs = std::move(r);
            l = std::move(e);
        }
        return l;
    }

    std::optional<LmDecl> parse_decl() {
        auto kw = lx.peek_ident();
        if (!kw) {
            fail("expected 'var' or 'mod'");
            return std::nullopt;
        }
        if (*kw == "var") {
            lx.ident();
            auto name = lx.ident();
            if (!name) {
                fail("expected variable name");
                return std::nullopt;
            }
            if (!lx.consume_sym("=")) {
                fail("expected '=' in var declaration");
                return std::nullopt;
            }
            auto e = parse_expr();
            if (!e) return std::nullopt;
            LmDecl d;
            d.kind = LmDecl::Kind::Var;
            d.name = *name;
            d.expr = std::move(e);
            return d;
        }
        if (*kw == "mod") {
            lx.ident();
            auto name = lx.ident();
            if (!name) {
                fail("expected module name");
                return std::nullopt;
            }
            if (!lx.consume_sym("{")) {
                fail("expected '{' after module name");
                return std::nullopt;
            }
            LmDecl d;
            d.kind = LmDecl::Kind::Mod;
            d.name = *name;
            d.body = std::make_shared<LmModBody>();
            // imports come first (M-Mod lists imports before members)
            while (true) {
                auto w = lx.peek_ident();
                if (!w || *w != "import") break;
                lx.ident();
                auto r = parse_ref();
                if (!r) return std::nullopt;
                if (!lx.consume_sym("::")) {
                    fail("expected '::*' after import reference");
                    return std::nullopt;
                }
                if (!lx.consume_sym("*")) {
                    fail("expected '*' after '::'");
                    return std::nullopt;
                }
                d.body->imports.push_back(std::move(*r));
            }
            while (!lx.peek_sym("}")) {
                if (lx.eof()) {
                    fail("unexpected end of file in module body");
                    return std::nullopt;
                }
                auto w = lx.peek_ident();
                if (w && *w == "import") {
                    fail("imports must precede member declarations");
                    return std::nullopt;
                }
                auto m = parse_decl();
                if (!m) return std::nullopt;
                d.body->members.push_back(std::move(*m));
            }
            lx.consume_sym("}");
            return d;
        }
        fail("expected 'var' or 'mod', got '" + *kw + "'");
        return std::nullopt;
    }

    std::optional<LmProgram> parse_program() {
        LmProgram p;
        while (!lx.eof()) {
            auto d = parse_decl();
            if (!d) return std::nullopt;
            p.decls.push_back(std::move(*d));
        }
        p.lock_count = lock_count;
        return p;
    }
};

inline void count_decls(const LmDecl& d, std::map<std::string, int>& counts) {
    counts[d.name]++;
    if (d.kind == LmDecl::Kind::Mod)
        for (const auto& m : d.body->members) count_decls(m, counts);
}

inline bool validate_locks_expr(const LmExpr& e, const std::map<std::string, int>& counts,
                                std::optional<LmParseError>& error);

inline bool validate_lock(const LmRef& r, const std::map<std::string, int>& counts,
                          std::optional<LmParseError>& error) {
    if (!r.locked) return true;
    auto it = counts.find(r.locked->name);
    int available = it == counts.end() ? 0 : it->second;
    if (r.locked->ordinal < 1 || r.locked->ordinal > available) {
        error = LmParseError{LmParseError::Kind::UnknownLockTarget, 1, 1,
                             "locked reference [[" + r.locked->name + "#" +
                                 std::to_string(r.locked->ordinal) + "]] names no declaration"};
        return false;
    }
    return true;
}

inline bool validate_locks_decl(const LmDecl& d, const std::map<std::string, int>& counts,
                                std::optional<LmParseError>& error) {
    if (d.kind == LmDecl::Kind::Var) return validate_locks_expr(*d.expr, counts, error);
    for (const auto& imp : d.body->imports)
        if (!validate_lock(imp, counts, error)) return false;
    for (const auto& m : d.body->members)
        if (!validate_locks_decl(m, counts, error)) return false;
    return true;
}

inline bool validate_locks_expr(const LmExpr& e, const std::map<std::string, int>& counts,
                                std::optional<LmParseError>& error) {
    switch (e.kind) {
        case LmExpr::Kind::Num: return true;
        case LmExpr::Kind::Add:
            return validate_locks_expr(*e.lhs, counts, error) &&
                   validate_locks_expr(*e.rhs, counts, error);
        case LmExpr::Kind::Ref: return validate_lock(e.ref, counts, error);
    }
    return true;
}

} // namespace detail

inline LmParseResult parse_lm(std::string_view text) {
    detail::LmParser p;
    p.lx.text = text;
    auto prog = p.parse_program();
    if (!prog) return p.error ? *p.error : LmParseError{};
    std::map<std::string, int> counts;
    for (const auto& d : prog->decls) detail::count_decls(d, counts);
    std::optional<LmParseError> err;
    for (const auto& d : prog->decls)
        if (!detail::validate_locks_decl(d, counts, err)) return *err;
    return *prog;
}

// --- term encoding ---------------------------------------------------------------

// Declarations are encoded with occurrence tokens occ(name, k) so a locked
// target (name, ordinal) is locatable in scope data after initial solving.

struct GenResult {
    ConstraintPtr goal;
    std::map<HoleId, std::string> hole_vars;
    std::map<HoleId, TermPtr> target_tokens;
    std::map<HoleId, LockedTarget> targets;

    SynthesisInput input() const { return SynthesisInput{goal, hole_vars, target_tokens}; }
};

namespace detail {

inline TermPtr occ_token(const std::string& name, int ordinal) {
    return mk_app("occ", {mk_atom(name), mk_atom(std::to_string(ordinal))});
}

inline TermPtr ref_to_term(const LmRef& r, GenResult& gen) {
    if (r.locked) {
        TermPtr v = fresh_var("hole_" + r.locked->name);
        HoleId h{r.lock_index};
        gen.hole_vars[h] = v->name;
        gen.target_tokens[h] = occ_token(r.locked->name, r.locked->ordinal);
        gen.targets[h] = *r.locked;
        return v;
    }
    TermPtr t = mk_app("name", {mk_atom(r.path.front())});
    for (size_t i = 1; i < r.path.size(); ++i) t = mk_app("qual", {t, mk_atom(r.path[i])});
    return t;
}

inline TermPtr expr_to_term(const LmExpr& e, GenResult& gen) {
    switch (e.kind) {
        case LmExpr::Kind::Num: return mk_app("num", {mk_atom(std::to_string(e.value))});
        case LmExpr::Kind::Add:
            return mk_app("add", {expr_to_term(*e.lhs, gen), expr_to_term(*e.rhs, gen)});
        case LmExpr::Kind::Ref: return ref_to_term(e.ref, gen);
    }
    return nullptr;
}

inline TermPtr list_term(std::vector<TermPtr> items) {
    TermPtr t = mk_atom("nil");
    for (auto it = items.rbegin(); it != items.rend(); ++it) t = mk_app("cons", {*it, t});
    return t;
}

inline TermPtr decl_to_term(const LmDecl& d, std::map<std::string, int>& counter, GenResult& gen) {
    int ordinal = ++counter[d.name];
    if (d.kind == LmDecl::Kind::Var)
        return mk_app("vdef", {occ_token(d.name, ordinal), expr_to_term(*d.expr, gen)});
    std::vector<TermPtr> imports, members;
    for (const auto& imp : d.body->imports) imports.push_back(ref_to_term(imp, gen));
    for (const auto& m : d.body->members) members.push_back(decl_to_term(m, counter, gen));
    return mk_app("moddef",
                  {occ_token(d.name, ordinal), list_term(std::move(imports)),
                   list_term(std::move(members))});
}

} // namespace detail

// Emits the initial goal `init(program-term)`; locked references become fresh
// variables recorded per hole.
inline GenResult gen_constraint(const LmProgram& p, const std::string& init_symbol) {
    GenResult gen;
    std::map<std::string, int> counter;
    std::vector<TermPtr> decls;
    for (const auto& d : p.decls) decls.push_back(detail::decl_to_term(d, counter, gen));
    TermPtr prog = mk_app("program", {detail::list_term(std::move(decls))});
    gen.goal = mk_pred(init_symbol, {prog});
    return gen;
}

// --- reference rendering ------------------------------------------------------------

// Decodes a ground reference term (name/qual chain) into its dotted surface
// form; nullopt for non-reference terms.
inline std::optional<std::vector<std::string>> term_to_ref_path(const TermPtr& t) {
    if (t->kind != TermKind::App) return std::nullopt;
    if (t->name == "name" && t->args.size() == 1) {
        const auto& leaf = t->args[0];
        if (leaf->kind != TermKind::App || !leaf->args.empty()) return std::nullopt;
        return std::vector<std::string>{leaf->name};
    }
    if (t->name == "qual" && t->args.size() == 2) {
        auto prefix = term_to_ref_path(t->args[0]);
        if (!prefix) return std::nullopt;
        const auto& leaf = t->args[1];
        if (leaf->kind != TermKind::App || !leaf->args.empty()) return std::nullopt;
        prefix->push_back(leaf->name);
        return prefix;
    }
    return std::nullopt;
}

inline std::optional<std::string> pretty_ref(const TermPtr& t) {
    auto path = term_to_ref_path(t);
    if (!path) return std::nullopt;
    std::string out;
    for (size_t i = 0; i < path->size(); ++i) {
        if (i) out += '.';
        out += (*path)[i];
    }
    return out;
}

// --- pretty printer -------------------------------------------------------------------

namespace detail {

inline void print_ref(std::ostream& os, const LmRef& r) {
    if (r.locked) {
        os << "[[" << r.locked->name << '#' << r.locked->ordinal << "]]";
        return;
    }
    for (size_t i = 0; i < r.path.size(); ++i) {
        if (i) os << '.';
        os << r.path[i];
    }
}

inline void print_expr(std::ostream& os, const LmExpr& e) {
    switch (e.kind) {
        case LmExpr::Kind::Num: os << e.value; return;
        case LmExpr::Kind::Add:
            print_expr(os, *e.lhs);
            os << " + ";
            print_expr(os, *e.rhs);
            return;
        case LmExpr::Kind::Ref: print_ref(os, e.ref); return;
    }
}

inline void print_decl(std::ostream& os, const LmDecl& d, int indent) {
    std::string pad(static_cast<size_t>(indent) * 2, ' ');
    if (d.kind == LmDecl::Kind::Var) {
        os << pad << "var " << d.name << " = ";
        print_expr(os, *d.expr);
        os << '\n';
        return;
    }
    os << pad << "mod " << d.name << " {\n";
    for (const auto& imp : d.body->imports) {
        os << pad << "  import ";
        print_ref(os, imp);
        os << "::*\n";
    }
    for (const auto& m : d.body->members) print_decl(os, m, indent + 1);
    os << pad << "}\n";
}

} // namespace detail

inline std::string pretty_print(const LmProgram& p) {
    std::ostringstream os;
    for (const auto& d : p.decls) detail::print_decl(os, d, 0);
    return os.str();
}

// Replaces locked references by concrete reference terms (for --emit-program
// and the completeness oracle).  Terms must decode to dotted references.
inline bool substitute_locks_ref(LmRef& r, const std::map<int, TermPtr>& solutions) {
    if (!r.locked) return true;
    auto it = solutions.find(r.lock_index);
    if (it == solutions.end()) return false;
    auto path = term_to_ref_path(it->second);
    if (!path) return false;
    r.path = std::move(*path);
    r.locked.reset();
    r.lock_index = -1;
    return true;
}

inline bool substitute_locks_decl(LmDecl& d, const std::map<int, TermPtr>& solutions);

inline bool substitute_locks_expr(LmExpr& e, const std::map<int, TermPtr>& solutions) {
    switch (e.kind) {
        case LmExpr::Kind::Num: return true;
        case LmExpr::Kind::Add:
            return substitute_locks_expr(*e.lhs, solutions) &&
                   substitute_locks_expr(*e.rhs, solutions);
        case LmExpr::Kind::Ref: return substitute_locks_ref(e.ref, solutions);
    }
    return true;
}

inline bool substitute_locks_decl(LmDecl& d, const std::map<int, TermPtr>& solutions) {
    if (d.kind == LmDecl::Kind::Var) return substitute_locks_expr(*d.expr, solutions);
    for (auto& imp : d.body->imports)
        if (!substitute_locks_ref(imp, solutions)) return false;
    for (auto& m : d.body->members)
        if (!substitute_locks_decl(m, solutions)) return false;
    return true;
}

inline LmExprPtr clone_expr(const LmExpr& e) {
    auto out = std::make_shared<LmExpr>(e);
    if (e.lhs) out->lhs = clone_expr(*e.lhs);
    if (e.rhs) out->rhs = clone_expr(*e.rhs);
    return out;
}

inline LmDecl clone_decl(const LmDecl& d) {
    LmDecl out = d;
    if (d.expr) out.expr = clone_expr(*d.expr);
    if (d.body) {
        out.body = std::make_shared<LmModBody>(*d.body);
        for (auto& m : out.body->members) m = clone_decl(m);
    }
    return out;
}

// Deep-copies before substituting: expression nodes are shared pointers, and
// the caller's program must stay locked.
inline std::optional<LmProgram> substitute_locks(const LmProgram& p,
                                                 const std::map<int, TermPtr>& solutions) {
    LmProgram out;
    out.lock_count = 0;
    for (const auto& d : p.decls) out.decls.push_back(clone_decl(d));
    for (auto& d : out.decls)
        if (!substitute_locks_decl(d, solutions)) return std::nullopt;
    return out;
}

} // namespace refsynth::lm
