#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "refsynth/eq.hpp"
#include "refsynth/scope_graph.hpp"

namespace refsynth {

enum class CKind { Emp, False, Conj, Exists, Single, Forall, NewScope, NewEdge, Query, Eq, Pred };

struct ConstraintNode;
using ConstraintPtr = std::shared_ptr<const ConstraintNode>;

// Query constraint payload: resolve from source under the reachability regex
// and visibility order; result_var is bound to the answer set in cont.
struct QueryData {
    TermPtr source;
    RegexPtr regex;
    DataFilter filter;
    LabelOrder order;
    std::string order_name; // empty = the empty order
    std::string result_var; // set variable, bound exactly in cont
    ConstraintPtr cont;
};

struct ConstraintNode {
    CKind kind = CKind::Emp;
    ConstraintPtr c1, c2;                  // Conj; Exists/Forall body in c1
    std::string binder;                    // Exists / Forall
    TermPtr t1, t2;                        // Single(t1); NewScope(var t1, data t2); NewEdge(t1, t2)
    SetTermPtr set;                        // Single / Forall
    Label label;                           // NewEdge
    std::shared_ptr<const QueryData> query;
    EqPtr eq;                              // Eq
    std::string pred;                      // Pred symbol
    std::vector<TermPtr> args;             // Pred args
};

inline ConstraintPtr mk_emp() {
    static ConstraintPtr c = std::make_shared<ConstraintNode>();
    return c;
}
inline ConstraintPtr mk_false() {
    static ConstraintPtr c = [] {
        auto n = std::make_shared<ConstraintNode>();
        const_cast<ConstraintNode&>(*n).kind = CKind::False;
        return n;
    }();
    return c;
}
inline ConstraintPtr mk_conj(ConstraintPtr a, ConstraintPtr b) {
    ConstraintNode n;
    n.kind = CKind::Conj;
    n.c1 = std::move(a);
    n.c2 = std::move(b);
    return std::make_shared<ConstraintNode>(std::move(n));
}
inline ConstraintPtr mk_exists(std::string binder, ConstraintPtr body) {
    ConstraintNode n;
    n.kind = CKind::Exists;
    n.binder = std::move(binder);
    n.c1 = std::move(body);
    return std::make_shared<ConstraintNode>(std::move(n));
}
inline ConstraintPtr mk_single(TermPtr t, SetTermPtr s) {
    ConstraintNode n;
    n.kind = CKind::Single;
    n.t1 = std::move(t);
    n.set = std::move(s);
    return std::make_shared<ConstraintNode>(std::move(n));
}
inline ConstraintPtr mk_forall(std::string binder, SetTermPtr s, ConstraintPtr body) {
    ConstraintNode n;
    n.kind = CKind::Forall;
    n.binder = std::move(binder);
    n.set = std::move(s);
    n.c1 = std::move(body);
    return std::make_shared<ConstraintNode>(std::move(n));
}
inline ConstraintPtr mk_new_scope(TermPtr scope_var, TermPtr data) {
    ConstraintNode n;
    n.kind = CKind::NewScope;
    n.t1 = std::move(scope_var);
    n.t2 = std::move(data);
    return std::make_shared<ConstraintNode>(std::move(n));
}

inline ConstraintPtr mk_new_scope(std::string scope_var, TermPtr data) {
    return mk_new_scope(mk_var(std::move(scope_var)), std::move(data));
}
inline ConstraintPtr mk_new_edge(TermPtr src, Label l, TermPtr dst) {
    ConstraintNode n;
    n.kind = CKind::NewEdge;
    n.t1 = std::move(src);
    n.label = std::move(l);
    n.t2 = std::move(dst);
    return std::make_shared<ConstraintNode>(std::move(n));
}
inline ConstraintPtr mk_query(QueryData q) {
    ConstraintNode n;
    n.kind = CKind::Query;
    n.query = std::make_shared<const QueryData>(std::move(q));
    return std::make_shared<ConstraintNode>(std::move(n));
}
inline ConstraintPtr mk_eqc(EqPtr e) {
    ConstraintNode n;
    n.kind = CKind::Eq;
    n.eq = std::move(e);
    return std::make_shared<ConstraintNode>(std::move(n));
}
inline ConstraintPtr mk_pred(std::string symbol, std::vector<TermPtr> args) {
    ConstraintNode n;
    n.kind = CKind::Pred;
    n.pred = std::move(symbol);
    n.args = std::move(args);
    return std::make_shared<ConstraintNode>(std::move(n));
}

// --- free variables -----------------------------------------------------------

inline void collect_free_vars(const ConstraintPtr& c, std::set<std::string>& out,
                              std::set<std::string>& bound) {
    auto term_vars = [&](const TermPtr& t) {
        if (!t) return;
        std::set<std::string> vars;
        collect_vars(t, vars);
        for (auto& v : vars)
            if (!bound.count(v)) out.insert(v);
    };
    switch (c->kind) {
        case CKind::Emp:
        case CKind::False: return;
        case CKind::Conj:
            collect_free_vars(c->c1, out, bound);
            collect_free_vars(c->c2, out, bound);
            return;
        case CKind::Exists: {
            bool ins = bound.insert(c->binder).second;
            collect_free_vars(c->c1, out, bound);
            if (ins) bound.erase(c->binder);
            return;
        }
        case CKind::Single:
            term_vars(c->t1);
            if (c->set->var && !bound.count(*c->set->var)) out.insert(*c->set->var);
            for (const auto& e : c->set->elems) term_vars(e);
            return;
        case CKind::Forall: {
            if (c->set->var && !bound.count(*c->set->var)) out.insert(*c->set->var);
            for (const auto& e : c->set->elems) term_vars(e);
            bool ins = bound.insert(c->binder).second;
            collect_free_vars(c->c1, out, bound);
            if (ins) bound.erase(c->binder);
            return;
        }
        case CKind::NewScope:
            term_vars(c->t1);
            term_vars(c->t2);
            return;
        case CKind::NewEdge:
            term_vars(c->t1);
            term_vars(c->t2);
            return;
        case CKind::Query: {
            term_vars(c->query->source);
            bool fins = bound.insert(c->query->filter.binder).second;
            collect_free_vars(c->query->filter.body, out, bound);
            if (fins) bound.erase(c->query->filter.binder);
            bool zins = bound.insert(c->query->result_var).second;
            collect_free_vars(c->query->cont, out, bound);
            if (zins) bound.erase(c->query->result_var);
            return;
        }
        case CKind::Eq: collect_free_vars(c->eq, out, bound); return;
        case CKind::Pred:
            for (const auto& a : c->args) term_vars(a);
            return;
    }
}

inline std::set<std::string> free_vars(const ConstraintPtr& c) {
    std::set<std::string> out, bound;
    collect_free_vars(c, out, bound);
    return out;
}

// --- substitution ---------------------------------------------------------------

inline ConstraintPtr apply_subst(const Substitution& s, const ConstraintPtr& c) {
    auto shadowing = [&](const std::string& binder) {
        Substitution out = s;
        out.terms.erase(binder);
        out.sets.erase(binder);
        return out;
    };
    switch (c->kind) {
        case CKind::Emp:
        case CKind::False: return c;
        case CKind::Conj: return mk_conj(apply_subst(s, c->c1), apply_subst(s, c->c2));
        case CKind::Exists:
            if (s.terms.count(c->binder))
                return mk_exists(c->binder, apply_subst(shadowing(c->binder), c->c1));
            return mk_exists(c->binder, apply_subst(s, c->c1));
        case CKind::Single: return mk_single(apply_subst(s, c->t1), apply_subst(s, c->set));
        case CKind::Forall: {
            auto set2 = apply_subst(s, c->set);
            if (s.terms.count(c->binder))
                return mk_forall(c->binder, set2, apply_subst(shadowing(c->binder), c->c1));
            return mk_forall(c->binder, set2, apply_subst(s, c->c1));
        }
        case CKind::NewScope:
            // the scope variable is a use, bound by an enclosing exists
            return mk_new_scope(apply_subst(s, c->t1), apply_subst(s, c->t2));
        case CKind::NewEdge: return mk_new_edge(apply_subst(s, c->t1), c->label, apply_subst(s, c->t2));
        case CKind::Query: {
            QueryData q = *c->query;
            q.source = apply_subst(s, q.source);
            q.filter = apply_subst(s, q.filter);
            Substitution for_cont = s;
            for_cont.sets.erase(q.result_var);
            q.cont = apply_subst(for_cont, q.cont);
            return mk_query(std::move(q));
        }
        case CKind::Eq: return mk_eqc(apply_subst(s, c->eq));
        case CKind::Pred: {
            std::vector<TermPtr> args;
            args.reserve(c->args.size());
            for (const auto& a : c->args) args.push_back(apply_subst(s, a));
            return mk_pred(c->pred, std::move(args));
        }
    }
    return c;
}

// Total renaming including binders; used to alpha-rename rule instances.
inline ConstraintPtr rename_vars(const ConstraintPtr& c, const std::map<std::string, std::string>& m) {
    auto ren = [&](const std::string& v) {
        auto it = m.find(v);
        return it == m.end() ? v : it->second;
    };
    switch (c->kind) {
        case CKind::Emp:
        case CKind::False: return c;
        case CKind::Conj: return mk_conj(rename_vars(c->c1, m), rename_vars(c->c2, m));
        case CKind::Exists: return mk_exists(ren(c->binder), rename_vars(c->c1, m));
        case CKind::Single: {
            SetTermPtr set = c->set->var ? mk_set_var(ren(*c->set->var)) : c->set;
            return mk_single(rename_vars(c->t1, m), set);
        }
        case CKind::Forall: {
            SetTermPtr set = c->set->var ? mk_set_var(ren(*c->set->var)) : c->set;
            return mk_forall(ren(c->binder), set, rename_vars(c->c1, m));
        }
        case CKind::NewScope:
            return mk_new_scope(rename_vars(c->t1, m), rename_vars(c->t2, m));
        case CKind::NewEdge: return mk_new_edge(rename_vars(c->t1, m), c->label, rename_vars(c->t2, m));
        case CKind::Query: {
            QueryData q = *c->query;
            q.source = rename_vars(q.source, m);
            q.filter = DataFilter{ren(q.filter.binder), rename_vars(q.filter.body, m)};
            q.result_var = ren(q.result_var);
            q.cont = rename_vars(q.cont, m);
            return mk_query(std::move(q));
        }
        case CKind::Eq: return mk_eqc(rename_vars(c->eq, m));
        case CKind::Pred: {
            std::vector<TermPtr> args;
            args.reserve(c->args.size());
            for (const auto& a : c->args) args.push_back(rename_vars(a, m));
            return mk_pred(c->pred, std::move(args));
        }
    }
    return c;
}

inline void collect_all_vars(const ConstraintPtr& c, std::set<std::string>& out) {
    switch (c->kind) {
        case CKind::Emp:
        case CKind::False: return;
        case CKind::Conj:
            collect_all_vars(c->c1, out);
            collect_all_vars(c->c2, out);
            return;
        case CKind::Exists:
            out.insert(c->binder);
            collect_all_vars(c->c1, out);
            return;
        case CKind::Single:
            collect_vars(c->t1, out);
            if (c->set->var) out.insert(*c->set->var);
            for (const auto& e : c->set->elems) collect_vars(e, out);
            return;
        case CKind::Forall:
            out.insert(c->binder);
            if (c->set->var) out.insert(*c->set->var);
            for (const auto& e : c->set->elems) collect_vars(e, out);
            collect_all_vars(c->c1, out);
            return;
        case CKind::NewScope:
            collect_vars(c->t1, out);
            collect_vars(c->t2, out);
            return;
        case CKind::NewEdge:
            collect_vars(c->t1, out);
            collect_vars(c->t2, out);
            return;
        case CKind::Query: {
            collect_vars(c->query->source, out);
            out.insert(c->query->filter.binder);
            std::set<std::string> ebound;
            collect_free_vars(c->query->filter.body, out, ebound);
            // exists binders inside the filter stay local; free vars suffice here
            out.insert(c->query->result_var);
            collect_all_vars(c->query->cont, out);
            return;
        }
        case CKind::Eq: {
            std::set<std::string> bound;
            collect_free_vars(c->eq, out, bound);
            return;
        }
        case CKind::Pred:
            for (const auto& a : c->args) collect_vars(a, out);
            return;
    }
}

// --- printing -------------------------------------------------------------------

inline void print_constraint(std::ostream& os, const ConstraintPtr& c) {
    switch (c->kind) {
        case CKind::Emp: os << "emp"; return;
        case CKind::False: os << "false"; return;
        case CKind::Conj:
            print_constraint(os, c->c1);
            os << " * ";
            print_constraint(os, c->c2);
            return;
        case CKind::Exists:
            os << "exists ?" << c->binder << " . ";
            print_constraint(os, c->c1);
            return;
        case CKind::Single:
            os << "single(";
            print_term(os, c->t1);
            os << ", " << to_string(c->set) << ')';
            return;
        case CKind::Forall:
            os << "forall ?" << c->binder << " in " << to_string(c->set) << " . ";
            print_constraint(os, c->c1);
            return;
        case CKind::NewScope:
            os << "new ";
            print_term(os, c->t1);
            os << " -> ";
            print_term(os, c->t2);
            return;
        case CKind::NewEdge:
            print_term(os, c->t1);
            os << " -[" << c->label.name << "]-> ";
            print_term(os, c->t2);
            return;
        case CKind::Query:
            os << "query ";
            print_term(os, c->query->source);
            os << " regex ";
            print_regex(os, c->query->regex);
            if (!c->query->order_name.empty()) os << " order " << c->query->order_name;
            os << " filter (?" << c->query->filter.binder << ") => ";
            print_eq(os, c->query->filter.body);
            os << " as ?" << c->query->result_var << " . ";
            print_constraint(os, c->query->cont);
            return;
        case CKind::Eq: print_eq(os, c->eq); return;
        case CKind::Pred: {
            os << c->pred << '(';
            for (size_t i = 0; i < c->args.size(); ++i) {
                if (i) os << ", ";
                print_term(os, c->args[i]);
            }
            os << ')';
            return;
        }
    }
}

inline std::string to_string(const ConstraintPtr& c) {
    std::ostringstream os;
    print_constraint(os, c);
    return os.str();
}

// --- rules and specifications ------------------------------------------------------

struct Rule {
    std::string name;
    std::string head_symbol;
    std::vector<TermPtr> head_patterns;
    ConstraintPtr body;
};

struct Specification {
    std::set<Label> alphabet;
    std::map<std::string, size_t> predicates; // symbol -> arity
    std::map<std::string, LabelOrder> orders;
    std::vector<Rule> rules;
    std::string initial_predicate;

    const Rule* rule_named(const std::string& name) const {
        for (const auto& r : rules)
            if (r.name == name) return &r;
        return nullptr;
    }
};

// Alpha-renames every variable of a rule (head and body, binders included)
// with globally fresh names.
inline Rule rename_rule(const Rule& r) {
    std::set<std::string> vars;
    for (const auto& p : r.head_patterns) collect_vars(p, vars);
    collect_all_vars(r.body, vars);
    std::map<std::string, std::string> m;
    for (const auto& v : vars) m[v] = fresh_name(v);
    Rule out;
    out.name = r.name;
    out.head_symbol = r.head_symbol;
    for (const auto& p : r.head_patterns) out.head_patterns.push_back(rename_vars(p, m));
    out.body = rename_vars(r.body, m);
    return out;
}

// All rules whose freshly renamed head unifies with the goal arguments, in
// specification order, paired with the head unifier.
inline std::vector<std::pair<Rule, Substitution>> matching_rules(const Specification& spec,
                                                                 const std::string& symbol,
                                                                 const std::vector<TermPtr>& args) {
    std::vector<std::pair<Rule, Substitution>> out;
    for (const auto& r : spec.rules) {
        if (r.head_symbol != symbol) continue;
        Rule renamed = rename_rule(r);
        if (auto theta = unify_seq(args, renamed.head_patterns))
            out.emplace_back(std::move(renamed), std::move(*theta));
    }
    return out;
}

} // namespace refsynth
