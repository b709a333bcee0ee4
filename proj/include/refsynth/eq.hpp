#pragma once

#include <memory>
#include <set>
#include <sstream>
#include <string>

#include "refsynth/subst.hpp"
#include "refsynth/term.hpp"

namespace refsynth {

// Equality constraints: the restricted constraint class usable in query data
// filters.  May inspect terms and scope data but never extend the graph.
enum class EqKind { Eq, DataOf, Conj, Exists };

struct EqNode;
using EqPtr = std::shared_ptr<const EqNode>;

struct EqNode {
    EqKind kind;
    TermPtr a, b;       // Eq(a = b), DataOf(a: scope term, b: data pattern)
    EqPtr e1, e2;       // Conj
    std::string binder; // Exists
};

inline EqPtr mk_eq(TermPtr a, TermPtr b) {
    return std::make_shared<EqNode>(EqNode{EqKind::Eq, std::move(a), std::move(b), nullptr, nullptr, {}});
}

inline EqPtr mk_dataof(TermPtr scope, TermPtr pattern) {
    return std::make_shared<EqNode>(
        EqNode{EqKind::DataOf, std::move(scope), std::move(pattern), nullptr, nullptr, {}});
}

inline EqPtr mk_econj(EqPtr e1, EqPtr e2) {
    return std::make_shared<EqNode>(EqNode{EqKind::Conj, nullptr, nullptr, std::move(e1), std::move(e2), {}});
}

inline EqPtr mk_eexists(std::string binder, EqPtr body) {
    return std::make_shared<EqNode>(
        EqNode{EqKind::Exists, nullptr, nullptr, std::move(body), nullptr, std::move(binder)});
}

inline void collect_free_vars(const EqPtr& e, std::set<std::string>& out,
                              std::set<std::string>& bound) {
    switch (e->kind) {
        case EqKind::Eq:
        case EqKind::DataOf: {
            std::set<std::string> vars;
            collect_vars(e->a, vars);
            collect_vars(e->b, vars);
            for (auto& v : vars)
                if (!bound.count(v)) out.insert(v);
            return;
        }
        case EqKind::Conj:
            collect_free_vars(e->e1, out, bound);
            collect_free_vars(e->e2, out, bound);
            return;
        case EqKind::Exists: {
            bool inserted = bound.insert(e->binder).second;
            collect_free_vars(e->e1, out, bound);
            if (inserted) bound.erase(e->binder);
            return;
        }
    }
}

inline std::set<std::string> free_vars(const EqPtr& e) {
    std::set<std::string> out, bound;
    collect_free_vars(e, out, bound);
    return out;
}

// Substitution on equality constraints; Exists binders shadow.
inline EqPtr apply_subst(const Substitution& s, const EqPtr& e) {
    switch (e->kind) {
        case EqKind::Eq: return mk_eq(apply_subst(s, e->a), apply_subst(s, e->b));
        case EqKind::DataOf: return mk_dataof(apply_subst(s, e->a), apply_subst(s, e->b));
        case EqKind::Conj: return mk_econj(apply_subst(s, e->e1), apply_subst(s, e->e2));
        case EqKind::Exists: {
            if (s.terms.count(e->binder)) {
                Substitution shadowed = s;
                shadowed.terms.erase(e->binder);
                return mk_eexists(e->binder, apply_subst(shadowed, e->e1));
            }
            return mk_eexists(e->binder, apply_subst(s, e->e1));
        }
    }
    return e;
}

// Total variable renaming, including binders.  Used when instantiating rules.
inline TermPtr rename_vars(const TermPtr& t, const std::map<std::string, std::string>& m) {
    switch (t->kind) {
        case TermKind::Var: {
            auto it = m.find(t->name);
            return it == m.end() ? t : mk_var(it->second);
        }
        case TermKind::Label:
        case TermKind::Scope: return t;
        case TermKind::App: {
            std::vector<TermPtr> args;
            args.reserve(t->args.size());
            for (const auto& a : t->args) args.push_back(rename_vars(a, m));
            return mk_app(t->name, std::move(args));
        }
    }
    return t;
}

inline EqPtr rename_vars(const EqPtr& e, const std::map<std::string, std::string>& m) {
    switch (e->kind) {
        case EqKind::Eq: return mk_eq(rename_vars(e->a, m), rename_vars(e->b, m));
        case EqKind::DataOf: return mk_dataof(rename_vars(e->a, m), rename_vars(e->b, m));
        case EqKind::Conj: return mk_econj(rename_vars(e->e1, m), rename_vars(e->e2, m));
        case EqKind::Exists: {
            auto it = m.find(e->binder);
            return mk_eexists(it == m.end() ? e->binder : it->second, rename_vars(e->e1, m));
        }
    }
    return e;
}

inline void print_eq(std::ostream& os, const EqPtr& e) {
    switch (e->kind) {
        case EqKind::Eq:
            print_term(os, e->a);
            os << " = ";
            print_term(os, e->b);
            return;
        case EqKind::DataOf:
            os << "dataOf(";
            print_term(os, e->a);
            os << ", ";
            print_term(os, e->b);
            os << ')';
            return;
        case EqKind::Conj:
            print_eq(os, e->e1);
            os << " * ";
            print_eq(os, e->e2);
            return;
        case EqKind::Exists:
            os << "exists ?" << e->binder << " . ";
            print_eq(os, e->e1);
            return;
    }
}

inline std::string to_string(const EqPtr& e) {
    std::ostringstream os;
    print_eq(os, e);
    return os.str();
}

} // namespace refsynth
