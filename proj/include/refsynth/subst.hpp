#pragma once

#include <map>
#include <optional>

#include "refsynth/term.hpp"

namespace refsynth {

// Substitution over term variables and set variables.  Kept idempotent:
// compose() resolves bindings so that no domain variable survives in any
// range term, making a single application pass sufficient.
struct Substitution {
    std::map<std::string, TermPtr> terms;
    std::map<std::string, SetTermPtr> sets;

    bool empty() const { return terms.empty() && sets.empty(); }
};

inline TermPtr apply_subst(const Substitution& s, const TermPtr& t);

inline SetTermPtr apply_subst(const Substitution& s, const SetTermPtr& st) {
    if (st->var) {
        auto it = s.sets.find(*st->var);
        if (it != s.sets.end()) return apply_subst(s, it->second);
        return st;
    }
    std::vector<TermPtr> elems;
    elems.reserve(st->elems.size());
    bool changed = false;
    for (const auto& e : st->elems) {
        auto e2 = apply_subst(s, e);
        changed |= (e2.get() != e.get());
        elems.push_back(std::move(e2));
    }
    return changed ? mk_set_lit(std::move(elems)) : st;
}

// Replaces domain variables recursively until fixpoint, so triangular
// substitutions like {x -> y, y -> g()} still send x to g().  Assumes the
// substitution is acyclic (mgu output has the occurs check enforced).
inline TermPtr apply_subst(const Substitution& s, const TermPtr& t) {
    switch (t->kind) {
        case TermKind::Var: {
            auto it = s.terms.find(t->name);
            if (it == s.terms.end()) return t;
            return apply_subst(s, it->second);
        }
        case TermKind::Label:
        case TermKind::Scope: return t;
        case TermKind::App: {
            bool changed = false;
            std::vector<TermPtr> args;
            args.reserve(t->args.size());
            for (const auto& a : t->args) {
                auto a2 = apply_subst(s, a);
                changed |= (a2.get() != a.get());
                args.push_back(std::move(a2));
            }
            return changed ? mk_app(t->name, std::move(args)) : t;
        }
    }
    return t;
}

// Sequential composition: apply_subst(compose(f, g), t) == apply_subst(g, apply_subst(f, t)).
inline Substitution compose(const Substitution& first, const Substitution& second) {
    Substitution out;
    for (const auto& [x, t] : first.terms) out.terms[x] = apply_subst(second, t);
    for (const auto& [x, t] : second.terms)
        if (!out.terms.count(x)) out.terms[x] = t;
    for (const auto& [z, st] : first.sets) out.sets[z] = apply_subst(second, st);
    for (const auto& [z, st] : second.sets)
        if (!out.sets.count(z)) out.sets[z] = st;
    return out;
}

// Most general unifier with occurs check.  Failure is a value, not an
// exception.
inline std::optional<Substitution> unify(const TermPtr& a, const TermPtr& b) {
    Substitution theta;
    std::vector<std::pair<TermPtr, TermPtr>> stack{{a, b}};
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        x = apply_subst(theta, x);
        y = apply_subst(theta, y);
        if (term_eq(x, y)) continue;
        if (x->kind == TermKind::Var) {
            if (occurs(x->name, y)) return std::nullopt;
            Substitution bind;
            bind.terms[x->name] = y;
            theta = compose(theta, bind);
            continue;
        }
        if (y->kind == TermKind::Var) {
            if (occurs(y->name, x)) return std::nullopt;
            Substitution bind;
            bind.terms[y->name] = x;
            theta = compose(theta, bind);
            continue;
        }
        if (x->kind != y->kind) return std::nullopt;
        if (x->kind == TermKind::App) {
            if (x->name != y->name || x->args.size() != y->args.size()) return std::nullopt;
            for (size_t i = 0; i < x->args.size(); ++i)
                stack.emplace_back(x->args[i], y->args[i]);
            continue;
        }
        return std::nullopt; // distinct labels or scopes
    }
    return theta;
}

inline std::optional<Substitution> unify_seq(const std::vector<TermPtr>& as,
                                             const std::vector<TermPtr>& bs) {
    if (as.size() != bs.size()) return std::nullopt;
    Substitution theta;
    for (size_t i = 0; i < as.size(); ++i) {
        auto step = unify(apply_subst(theta, as[i]), apply_subst(theta, bs[i]));
        if (!step) return std::nullopt;
        theta = compose(theta, *step);
    }
    return theta;
}

// One-way matching: finds sigma with apply_subst(sigma, pattern) == t, binding only
// pattern variables.  Used by recursive-qualifier replay.
inline bool match_into(const TermPtr& pattern, const TermPtr& t, Substitution& sigma) {
    if (pattern->kind == TermKind::Var) {
        auto it = sigma.terms.find(pattern->name);
        if (it != sigma.terms.end()) return term_eq(it->second, t);
        sigma.terms[pattern->name] = t;
        return true;
    }
    if (pattern->kind != t->kind) return false;
    switch (pattern->kind) {
        case TermKind::Label: return pattern->name == t->name;
        case TermKind::Scope: return pattern->scope == t->scope;
        case TermKind::App: {
            if (pattern->name != t->name || pattern->args.size() != t->args.size()) return false;
            for (size_t i = 0; i < pattern->args.size(); ++i)
                if (!match_into(pattern->args[i], t->args[i], sigma)) return false;
            return true;
        }
        default: return false;
    }
}

inline std::string to_string(const Substitution& s) {
    std::ostringstream os;
    os << '{';
    bool first = true;
    for (const auto& [x, t] : s.terms) {
        if (!first) os << ", ";
        first = false;
        os << '?' << x << " -> ";
        print_term(os, t);
    }
    for (const auto& [z, st] : s.sets) {
        if (!first) os << ", ";
        first = false;
        os << '?' << z << " -> " << to_string(st);
    }
    os << '}';
    return os.str();
}

// --- fresh variable supply --------------------------------------------------
// Session-global monotonic counter, shared across forked configurations.

inline std::atomic<uint64_t>& fresh_counter() {
    static std::atomic<uint64_t> counter{0};
    return counter;
}

inline std::string fresh_name(std::string_view hint) {
    uint64_t n = fresh_counter().fetch_add(1, std::memory_order_relaxed);
    std::string base(hint);
    auto dollar = base.find('$');
    if (dollar != std::string::npos) base.resize(dollar); // re-freshening keeps hints readable
    return base + "$" + std::to_string(n);
}

inline TermPtr fresh_var(std::string_view hint) { return mk_var(fresh_name(hint)); }

} // namespace refsynth
