#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace refsynth {

// Scope graph node identity. Opaque integer; printed as $sN.
struct ScopeId {
    uint32_t value = 0;

    friend bool operator==(ScopeId a, ScopeId b) { return a.value == b.value; }
    friend bool operator!=(ScopeId a, ScopeId b) { return a.value != b.value; }
    friend bool operator<(ScopeId a, ScopeId b) { return a.value < b.value; }
};

enum class TermKind { Var, App, Label, Scope };

struct TermNode;
using TermPtr = std::shared_ptr<const TermNode>;

// First-order terms: variables, constructor applications, label literals,
// scope references. Immutable and freely shared between search branches.
struct TermNode {
    TermKind kind;
    std::string name;          // Var name, App constructor, or Label name
    std::vector<TermPtr> args; // App only
    ScopeId scope{};           // Scope only
};

inline TermPtr mk_var(std::string name) {
    return std::make_shared<TermNode>(TermNode{TermKind::Var, std::move(name), {}, {}});
}

inline TermPtr mk_app(std::string ctor, std::vector<TermPtr> args) {
    return std::make_shared<TermNode>(TermNode{TermKind::App, std::move(ctor), std::move(args), {}});
}

inline TermPtr mk_atom(std::string ctor) { return mk_app(std::move(ctor), {}); }

inline TermPtr mk_label(std::string name) {
    return std::make_shared<TermNode>(TermNode{TermKind::Label, std::move(name), {}, {}});
}

inline TermPtr mk_scope(ScopeId s) {
    return std::make_shared<TermNode>(TermNode{TermKind::Scope, {}, {}, s});
}

inline bool term_eq(const TermPtr& a, const TermPtr& b) {
    if (a.get() == b.get()) return true;
    if (!a || !b) return false;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case TermKind::Var:
        case TermKind::Label: return a->name == b->name;
        case TermKind::Scope: return a->scope == b->scope;
        case TermKind::App:
            if (a->name != b->name || a->args.size() != b->args.size()) return false;
            for (size_t i = 0; i < a->args.size(); ++i)
                if (!term_eq(a->args[i], b->args[i])) return false;
            return true;
    }
    return false;
}

inline bool is_ground(const TermPtr& t) {
    if (t->kind == TermKind::Var) return false;
    for (const auto& a : t->args)
        if (!is_ground(a)) return false;
    return true;
}

inline bool occurs(const std::string& var, const TermPtr& t) {
    if (t->kind == TermKind::Var) return t->name == var;
    for (const auto& a : t->args)
        if (occurs(var, a)) return true;
    return false;
}

inline void collect_vars(const TermPtr& t, std::set<std::string>& out) {
    if (t->kind == TermKind::Var) {
        out.insert(t->name);
        return;
    }
    for (const auto& a : t->args) collect_vars(a, out);
}

inline void collect_scopes(const TermPtr& t, std::set<ScopeId>& out) {
    if (t->kind == TermKind::Scope) {
        out.insert(t->scope);
        return;
    }
    for (const auto& a : t->args) collect_scopes(a, out);
}

// True iff probe occurs (as a whole term) anywhere inside t.
inline bool contains_subterm(const TermPtr& t, const TermPtr& probe) {
    if (term_eq(t, probe)) return true;
    for (const auto& a : t->args)
        if (contains_subterm(a, probe)) return true;
    return false;
}

// Set terms: a set variable or a flattened literal element sequence.
// Literal union is normalized to one sequence; duplicates are preserved.
struct SetTermNode {
    std::optional<std::string> var; // set iff this is a SetVariable
    std::vector<TermPtr> elems;     // Literal only
};
using SetTermPtr = std::shared_ptr<const SetTermNode>;

inline SetTermPtr mk_set_var(std::string name) {
    return std::make_shared<SetTermNode>(SetTermNode{std::move(name), {}});
}

inline SetTermPtr mk_set_lit(std::vector<TermPtr> elems) {
    return std::make_shared<SetTermNode>(SetTermNode{std::nullopt, std::move(elems)});
}

// --- canonical textual form ---------------------------------------------
// ctor(arg1, arg2) with nullary constructors printed bare; variables ?name;
// labels #LABEL; scopes $sN.

inline void print_term(std::ostream& os, const TermPtr& t) {
    switch (t->kind) {
        case TermKind::Var: os << '?' << t->name; return;
        case TermKind::Label: os << '#' << t->name; return;
        case TermKind::Scope: os << "$s" << t->scope.value; return;
        case TermKind::App:
            os << t->name;
            if (!t->args.empty()) {
                os << '(';
                for (size_t i = 0; i < t->args.size(); ++i) {
                    if (i) os << ", ";
                    print_term(os, t->args[i]);
                }
                os << ')';
            }
            return;
    }
}

inline std::string to_string(const TermPtr& t) {
    std::ostringstream os;
    print_term(os, t);
    return os.str();
}

inline std::string to_string(const SetTermPtr& st) {
    if (st->var) return "?" + *st->var;
    std::ostringstream os;
    os << '{';
    for (size_t i = 0; i < st->elems.size(); ++i) {
        if (i) os << ", ";
        print_term(os, st->elems[i]);
    }
    os << '}';
    return os.str();
}

// --- term parser ----------------------------------------------------------

namespace detail {

struct TermLexer {
    std::string_view text;
    size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) pos++;
    }
    bool eof() {
        skip_ws();
        return pos >= text.size();
    }
    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }
    bool consume(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            pos++;
            return true;
        }
        return false;
    }
    std::optional<std::string> ident() {
        skip_ws();
        size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            pos++;
        if (pos == start) return std::nullopt;
        return std::string(text.substr(start, pos - start));
    }
};

inline TermPtr parse_term_rec(TermLexer& lx) {
    if (lx.consume('?')) {
        auto n = lx.ident();
        if (!n) return nullptr;
        // fresh-variable suffix: ?x$17
        if (lx.pos < lx.text.size() && lx.text[lx.pos] == '$') {
            lx.pos++;
            auto suffix = lx.ident();
            if (!suffix) return nullptr;
            *n += "$" + *suffix;
        }
        return mk_var(*n);
    }
    if (lx.consume('#')) {
        auto n = lx.ident();
        return n ? mk_label(*n) : nullptr;
    }
    if (lx.consume('$')) {
        auto n = lx.ident();
        if (!n || n->size() < 2 || (*n)[0] != 's') return nullptr;
        uint32_t v = 0;
        for (size_t i = 1; i < n->size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>((*n)[i]))) return nullptr;
            v = v * 10 + static_cast<uint32_t>((*n)[i] - '0');
        }
        return mk_scope(ScopeId{v});
    }
    auto n = lx.ident();
    if (!n) return nullptr;
    std::vector<TermPtr> args;
    if (lx.consume('(')) {
        if (!lx.consume(')')) {
            while (true) {
                auto a = parse_term_rec(lx);
                if (!a) return nullptr;
                args.push_back(std::move(a));
                if (lx.consume(',')) continue;
                if (lx.consume(')')) break;
                return nullptr;
            }
        }
    }
    return mk_app(*n, std::move(args));
}

} // namespace detail

inline std::optional<TermPtr> parse_term(std::string_view text) {
    detail::TermLexer lx{text};
    auto t = detail::parse_term_rec(lx);
    if (!t || !lx.eof()) return std::nullopt;
    return t;
}

} // namespace refsynth
