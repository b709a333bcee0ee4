#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "refsynth/constraint.hpp"
#include "refsynth/scope_graph.hpp"

namespace refsynth {

// Hole identity: one per locked reference, with its lock-key provenance.
struct HoleId {
    int value = 0;

    friend bool operator==(HoleId a, HoleId b) { return a.value == b.value; }
    friend bool operator!=(HoleId a, HoleId b) { return a.value != b.value; }
    friend bool operator<(HoleId a, HoleId b) { return a.value < b.value; }
};

// One solved query step of a composite path, kept for re-validation: the
// query ran from `source` and its chosen answer path ended at `target`.
struct QueryStep {
    ScopeId source;
    RegexPtr regex;
    DataFilter filter; // ground at record time
    LabelOrder order;
    ScopeId target;
};

// Per-hole synthesis state: the composite-path scopes traversed so far (head
// is the current target), the query evidence per consecutive pair, and the
// term built for the hole.
struct HoleState {
    std::vector<ScopeId> path;    // nonempty; ground by construction
    std::vector<QueryStep> steps; // steps.size() == path.size() - 1
    TermPtr term;
};

struct PendingConstraint {
    ConstraintPtr c;
    uint64_t age = 0;
};

// Solver state (G | C* | U | H).
struct Configuration {
    ScopeGraph graph;
    std::vector<PendingConstraint> constraints;
    std::map<std::string, HoleId> u; // variable -> hole
    std::map<HoleId, HoleState> h;   // hole -> state
    uint64_t next_age = 0;

    void push_back(ConstraintPtr c) { constraints.push_back({std::move(c), next_age++}); }

    // Replaces the constraint at idx with the given ones, preserving queue
    // position; rewrites stay at the front of the work list.
    void replace_at(size_t idx, std::vector<ConstraintPtr> with) {
        std::vector<PendingConstraint> items;
        items.reserve(with.size());
        for (auto& c : with) items.push_back({std::move(c), next_age++});
        constraints.erase(constraints.begin() + static_cast<long>(idx));
        constraints.insert(constraints.begin() + static_cast<long>(idx),
                           std::make_move_iterator(items.begin()),
                           std::make_move_iterator(items.end()));
    }

    // Applies a substitution configuration-wide: graph data, constraints, the
    // term component of H, and U per the U[t/x] side condition.  Returns
    // nullopt when U[t/x] is undefined (a variable would link two holes).
    std::optional<Configuration> applied(const Substitution& theta) const {
        Configuration out = *this;
        for (const auto& [x, t] : theta.terms) {
            auto ux = out.u.find(x);
            if (ux == out.u.end()) continue;
            std::set<std::string> tvars;
            collect_vars(t, tvars);
            for (const auto& y : tvars) {
                auto uy = out.u.find(y);
                if (uy != out.u.end() && uy->second != ux->second) return std::nullopt;
            }
            for (const auto& y : tvars) out.u[y] = ux->second;
        }
        out.graph.apply_subst(theta);
        for (auto& pc : out.constraints) pc.c = apply_subst(theta, pc.c);
        for (auto& [hole, st] : out.h) st.term = apply_subst(theta, st.term);
        return out;
    }
};

// --- path and answer reification ------------------------------------------------

inline TermPtr path_to_term(const ResolutionPath& p) {
    TermPtr steps = mk_atom("nil");
    for (auto it = p.steps.rbegin(); it != p.steps.rend(); ++it)
        steps = mk_app("cons", {mk_app("step", {mk_label(it->first.name), mk_scope(it->second)}),
                                steps});
    return mk_app("path", {mk_scope(p.source), steps});
}

inline std::optional<ResolutionPath> term_to_path(const TermPtr& t) {
    if (t->kind != TermKind::App || t->name != "path" || t->args.size() != 2) return std::nullopt;
    if (t->args[0]->kind != TermKind::Scope) return std::nullopt;
    ResolutionPath p{t->args[0]->scope, {}};
    TermPtr cur = t->args[1];
    while (true) {
        if (cur->kind != TermKind::App) return std::nullopt;
        if (cur->name == "nil" && cur->args.empty()) break;
        if (cur->name != "cons" || cur->args.size() != 2) return std::nullopt;
        const auto& step = cur->args[0];
        if (step->kind != TermKind::App || step->name != "step" || step->args.size() != 2)
            return std::nullopt;
        if (step->args[0]->kind != TermKind::Label || step->args[1]->kind != TermKind::Scope)
            return std::nullopt;
        p.steps.emplace_back(Label{step->args[0]->name}, step->args[1]->scope);
        cur = cur->args[1];
    }
    return p;
}

// Rewrites tgt(p) projections whose argument is a ground path term.
inline TermPtr normalize_tgt(const TermPtr& t) {
    if (t->kind != TermKind::App) return t;
    std::vector<TermPtr> args;
    args.reserve(t->args.size());
    bool changed = false;
    for (const auto& a : t->args) {
        auto a2 = normalize_tgt(a);
        changed |= (a2.get() != a.get());
        args.push_back(std::move(a2));
    }
    if (t->name == "tgt" && args.size() == 1) {
        if (auto p = term_to_path(args[0])) return mk_scope(p->target());
    }
    return changed ? mk_app(t->name, std::move(args)) : t;
}

inline bool has_unresolved_tgt(const TermPtr& t) {
    if (t->kind == TermKind::App && t->name == "tgt") return true;
    for (const auto& a : t->args)
        if (has_unresolved_tgt(a)) return true;
    return false;
}

// --- potential edges (the C* -> (s, l) over-approximation) ------------------------

// Static per-predicate footprint: which edge labels a predicate's expansion
// may assert, attributed to a head argument position when the edge source is
// determinable, else unknown-scoped.
struct FootprintEntry {
    std::optional<size_t> arg_pos; // nullopt = unknown source
    Label label;

    friend bool operator<(const FootprintEntry& a, const FootprintEntry& b) {
        if (a.arg_pos.has_value() != b.arg_pos.has_value()) return !a.arg_pos.has_value();
        if (a.arg_pos && b.arg_pos && *a.arg_pos != *b.arg_pos) return *a.arg_pos < *b.arg_pos;
        return a.label < b.label;
    }
};

using Footprints = std::map<std::string, std::set<FootprintEntry>>;

namespace detail {

inline void collect_new_scope_vars(const ConstraintPtr& c, std::set<std::string>& out) {
    switch (c->kind) {
        case CKind::NewScope:
            if (c->t1->kind == TermKind::Var) out.insert(c->t1->name);
            return;
        case CKind::Conj:
            collect_new_scope_vars(c->c1, out);
            collect_new_scope_vars(c->c2, out);
            return;
        case CKind::Exists:
        case CKind::Forall: collect_new_scope_vars(c->c1, out); return;
        case CKind::Query: collect_new_scope_vars(c->query->cont, out); return;
        default: return;
    }
}

struct FootprintScan {
    const std::map<std::string, std::set<size_t>>& head_positions;
    const std::set<std::string>& fresh_vars;
    const Footprints& current;
    std::set<FootprintEntry>& out;
    bool& changed;

    void add(FootprintEntry e) {
        if (out.insert(e).second) changed = true;
    }

    void attribute(const TermPtr& source_term, const Label& l) {
        if (source_term->kind == TermKind::Var) {
            if (fresh_vars.count(source_term->name)) return; // edge from a fresh scope
            auto hp = head_positions.find(source_term->name);
            if (hp != head_positions.end()) {
                for (size_t pos : hp->second) add({pos, l});
                return;
            }
            add({std::nullopt, l});
            return;
        }
        if (is_ground(source_term)) return; // ground non-scope cannot name an existing scope
        add({std::nullopt, l});
    }

    void scan(const ConstraintPtr& c) {
        switch (c->kind) {
            case CKind::NewEdge: attribute(c->t1, c->label); return;
            case CKind::Conj:
                scan(c->c1);
                scan(c->c2);
                return;
            case CKind::Exists:
            case CKind::Forall: scan(c->c1); return;
            case CKind::Query: scan(c->query->cont); return;
            case CKind::Pred: {
                auto fp = current.find(c->pred);
                if (fp == current.end()) return;
                for (const auto& entry : fp->second) {
                    if (!entry.arg_pos) {
                        add({std::nullopt, entry.label});
                        continue;
                    }
                    if (*entry.arg_pos >= c->args.size()) continue;
                    attribute(c->args[*entry.arg_pos], entry.label);
                }
                return;
            }
            default: return;
        }
    }
};

} // namespace detail

inline Footprints compute_footprints(const Specification& spec) {
    Footprints fp;
    for (const auto& [p, arity] : spec.predicates) fp[p] = {};
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& r : spec.rules) {
            std::map<std::string, std::set<size_t>> head_positions;
            for (size_t i = 0; i < r.head_patterns.size(); ++i) {
                std::set<std::string> vars;
                collect_vars(r.head_patterns[i], vars);
                for (const auto& v : vars) head_positions[v].insert(i);
            }
            std::set<std::string> fresh;
            detail::collect_new_scope_vars(r.body, fresh);
            detail::FootprintScan scan{head_positions, fresh, fp, fp[r.head_symbol], changed};
            scan.scan(r.body);
        }
    }
    return fp;
}

namespace detail {

inline void collect_potential(const ConstraintPtr& c, const Footprints& fp,
                              std::set<PotentialEdge>& out) {
    switch (c->kind) {
        case CKind::NewEdge: {
            if (c->t1->kind == TermKind::Scope) {
                out.insert({c->t1->scope, c->label});
            } else if (!is_ground(c->t1)) {
                out.insert({std::nullopt, c->label});
            }
            return;
        }
        case CKind::Conj:
            collect_potential(c->c1, fp, out);
            collect_potential(c->c2, fp, out);
            return;
        case CKind::Exists:
        case CKind::Forall: collect_potential(c->c1, fp, out); return;
        case CKind::Query: collect_potential(c->query->cont, fp, out); return;
        case CKind::Pred: {
            auto it = fp.find(c->pred);
            if (it == fp.end()) return;
            for (const auto& entry : it->second) {
                if (!entry.arg_pos) {
                    out.insert({std::nullopt, entry.label});
                    continue;
                }
                if (*entry.arg_pos >= c->args.size()) continue;
                const auto& arg = c->args[*entry.arg_pos];
                std::set<ScopeId> scopes;
                collect_scopes(arg, scopes);
                for (ScopeId s : scopes) out.insert({s, entry.label});
                if (!is_ground(arg)) out.insert({std::nullopt, entry.label});
            }
            return;
        }
        default: return;
    }
}

} // namespace detail

// Union, over pending constraints, of the (scope, label) pairs an edge might
// still be added at.  Conservative: may report pairs that never materialize,
// never misses one that does.
inline std::set<PotentialEdge> potential_edges(const Footprints& fp, const Configuration& k,
                                               std::optional<size_t> exclude_idx = std::nullopt) {
    std::set<PotentialEdge> out;
    for (size_t i = 0; i < k.constraints.size(); ++i) {
        if (exclude_idx && *exclude_idx == i) continue;
        detail::collect_potential(k.constraints[i].c, fp, out);
    }
    return out;
}

// Critical edges of a query: (scope, label) pairs where the scope is visited
// during resolution with a residual regex whose first set contains the label.
inline std::set<std::pair<ScopeId, Label>> critical_edges(const ScopeGraph& g, ScopeId source,
                                                          const RegexPtr& r) {
    std::set<std::pair<ScopeId, Label>> out;
    std::set<std::pair<uint32_t, std::string>> seen;
    std::vector<std::pair<ScopeId, RegexPtr>> stack{{source, r}};
    while (!stack.empty()) {
        auto [s, residual] = stack.back();
        stack.pop_back();
        auto key = std::make_pair(s.value, to_string(residual));
        if (!seen.insert(key).second) continue;
        auto fs = first_set(residual);
        for (const auto& l : fs) out.insert({s, l});
        for (const auto& e : g.out_edges(s)) {
            if (!fs.count(e.label)) continue;
            stack.emplace_back(e.dst, derivative(residual, e.label));
        }
    }
    return out;
}

// The query guard: stable iff no pending constraint can add an edge at a
// critical (scope, label) pair.
inline bool guard_holds(const Footprints& fp, const Configuration& k, ScopeId source,
                        const RegexPtr& regex, size_t query_idx) {
    auto critical = critical_edges(k.graph, source, regex);
    if (critical.empty()) return true;
    auto potential = potential_edges(fp, k, query_idx);
    for (const auto& pe : potential) {
        for (const auto& [s, l] : critical) {
            if (pe.label != l) continue;
            if (!pe.scope || *pe.scope == s) return false;
        }
    }
    return true;
}

// --- stepping ----------------------------------------------------------------------

struct StepFail {
    std::string reason;
    std::string constraint;
};

enum class StepStatus { Progressed, Failed, Stuck };

struct StepResult {
    StepStatus status;
    Configuration next;     // Progressed
    StepFail fail;          // Failed
    std::string rule_name;  // Progressed: which Op-* fired
    std::string selected;   // the constraint the rule fired on
    Substitution theta;     // the substitution the step applied, if any
};

// Constraint selection order; FIFO by default, permutations for the
// confluence harness.
using StepPolicy = std::function<std::vector<size_t>(const Configuration&)>;

inline StepPolicy fifo_policy() {
    return [](const Configuration& k) {
        std::vector<size_t> idx(k.constraints.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return k.constraints[a].age < k.constraints[b].age;
        });
        return idx;
    };
}

inline StepPolicy seeded_policy(uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    return [rng](const Configuration& k) {
        std::vector<size_t> idx(k.constraints.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), *rng);
        return idx;
    };
}

namespace detail {

enum class TryStatus { NotApplicable, Applied, Failed };

struct TryOutcome {
    TryStatus status = TryStatus::NotApplicable;
    Configuration next;
    StepFail fail;
    std::string rule_name;
    Substitution theta;
};

inline TryOutcome try_fail(std::string reason, const ConstraintPtr& c) {
    TryOutcome o;
    o.status = TryStatus::Failed;
    o.fail = StepFail{std::move(reason), to_string(c)};
    return o;
}

inline TryOutcome try_apply(Configuration next, std::string rule) {
    TryOutcome o;
    o.status = TryStatus::Applied;
    o.next = std::move(next);
    o.rule_name = std::move(rule);
    return o;
}

// Attempts one Op-* rule on the constraint at idx.
inline TryOutcome try_step_at(const Specification& spec, const Footprints& fp,
                              const Configuration& k, size_t idx) {
    const ConstraintPtr& c = k.constraints[idx].c;
    switch (c->kind) {
        case CKind::Emp: {
            Configuration next = k;
            next.replace_at(idx, {});
            return try_apply(std::move(next), "Op-Emp");
        }
        case CKind::False: return try_fail("false constraint", c);
        case CKind::Conj: {
            Configuration next = k;
            next.replace_at(idx, {c->c1, c->c2});
            return try_apply(std::move(next), "Op-Conj");
        }
        case CKind::Exists: {
            Substitution freshen;
            std::string y = fresh_name(c->binder);
            freshen.terms[c->binder] = mk_var(y);
            Configuration next = k;
            next.replace_at(idx, {apply_subst(freshen, c->c1)});
            return try_apply(std::move(next), "Op-Exists");
        }
        case CKind::Single: {
            if (c->set->var) return {}; // set variable: stuck
            if (c->set->elems.size() != 1)
                return try_fail("single on a set of size " + std::to_string(c->set->elems.size()),
                                c);
            Configuration next = k;
            next.replace_at(idx, {mk_eqc(mk_eq(c->t1, c->set->elems[0]))});
            return try_apply(std::move(next), "Op-Singleton");
        }
        case CKind::Forall: {
            if (c->set->var) return {}; // set variable: stuck
            std::vector<ConstraintPtr> expanded;
            for (const auto& e : c->set->elems) {
                Substitution bind;
                bind.terms[c->binder] = e;
                expanded.push_back(apply_subst(bind, c->c1));
            }
            Configuration next = k;
            next.replace_at(idx, std::move(expanded));
            return try_apply(std::move(next), "Op-Forall");
        }
        case CKind::NewScope: {
            if (c->t1->kind != TermKind::Var)
                return try_fail("scope assertion on a non-variable", c);
            Configuration next = k;
            ScopeId s = next.graph.add_scope(c->t2);
            next.replace_at(idx, {});
            Substitution bind;
            bind.terms[c->t1->name] = mk_scope(s);
            auto applied = next.applied(bind);
            if (!applied) return try_fail("scope binding links two holes", c);
            auto outcome = try_apply(std::move(*applied), "Op-New-Scope");
            outcome.theta = std::move(bind);
            return outcome;
        }
        case CKind::NewEdge: {
            TermPtr a = normalize_tgt(c->t1);
            TermPtr b = normalize_tgt(c->t2);
            if (a->kind != TermKind::Scope || b->kind != TermKind::Scope) {
                if (!is_ground(a) || !is_ground(b) || has_unresolved_tgt(a) ||
                    has_unresolved_tgt(b))
                    return {}; // endpoints not determined yet: stuck
                return try_fail("edge endpoint is not a scope", c);
            }
            Configuration next = k;
            if (auto err = next.graph.add_edge(a->scope, c->label, b->scope))
                return try_fail("unknown scope $s" + std::to_string(err->scope.value), c);
            next.replace_at(idx, {});
            return try_apply(std::move(next), "Op-New-Edge");
        }
        case CKind::Eq: {
            const EqPtr& e = c->eq;
            switch (e->kind) {
                case EqKind::Conj: {
                    Configuration next = k;
                    next.replace_at(idx, {mk_eqc(e->e1), mk_eqc(e->e2)});
                    return try_apply(std::move(next), "Op-Eq-Conj");
                }
                case EqKind::Exists: {
                    Substitution freshen;
                    freshen.terms[e->binder] = fresh_var(e->binder);
                    Configuration next = k;
                    next.replace_at(idx, {mk_eqc(apply_subst(freshen, e->e1))});
                    return try_apply(std::move(next), "Op-Eq-Exists");
                }
                case EqKind::DataOf: {
                    TermPtr a = normalize_tgt(e->a);
                    if (a->kind == TermKind::Var || has_unresolved_tgt(a)) return {}; // stuck
                    if (a->kind != TermKind::Scope)
                        return try_fail("dataOf on non-scope term", c);
                    auto d = k.graph.data(a->scope);
                    if (!d) return try_fail("scope has no data", c);
                    Configuration next = k;
                    next.replace_at(idx, {mk_eqc(mk_eq(e->b, d))});
                    return try_apply(std::move(next), "Op-Data");
                }
                case EqKind::Eq: {
                    TermPtr a = normalize_tgt(e->a);
                    TermPtr b = normalize_tgt(e->b);
                    if (has_unresolved_tgt(a) || has_unresolved_tgt(b)) return {}; // wait for path
                    auto theta = unify(a, b);
                    if (!theta) return try_fail("unification failure", c);
                    Configuration next = k;
                    next.replace_at(idx, {});
                    auto applied = next.applied(*theta);
                    if (!applied) return try_fail("substitution links two holes", c);
                    auto outcome = try_apply(std::move(*applied), "Op-Eq");
                    outcome.theta = std::move(*theta);
                    return outcome;
                }
            }
            return {};
        }
        case CKind::Query: {
            const QueryData& q = *c->query;
            if (q.source->kind != TermKind::Scope) return {}; // source not ground
            std::set<std::string> filter_fv = free_vars(q.filter);
            if (!filter_fv.empty()) return {}; // filter not ground
            if (!guard_holds(fp, k, q.source->scope, q.regex, idx)) return {}; // unstable
            auto answers = resolve(k.graph, q.source->scope, q.regex, q.filter, q.order);
            std::vector<TermPtr> elems;
            elems.reserve(answers.size());
            for (const auto& a : answers) {
                TermPtr data = k.graph.data(a.path.target());
                elems.push_back(mk_app("ans", {path_to_term(a.path), data}));
            }
            Substitution bind;
            bind.sets[q.result_var] = mk_set_lit(std::move(elems));
            Configuration next = k;
            next.replace_at(idx, {apply_subst(bind, q.cont)});
            return try_apply(std::move(next), "Op-Query");
        }
        case CKind::Pred: {
            auto decl = spec.predicates.find(c->pred);
            if (decl == spec.predicates.end())
                return try_fail("undeclared predicate " + c->pred, c);
            auto rules = matching_rules(spec, c->pred, c->args);
            if (rules.empty()) return try_fail("no rule matches " + c->pred, c);
            if (rules.size() > 1) return {}; // several candidates: stuck (Op-Expand-Pred territory)
            Configuration next = k;
            next.replace_at(idx, {rules[0].first.body});
            auto applied = next.applied(rules[0].second);
            if (!applied) return try_fail("rule head unifier links two holes", c);
            auto outcome = try_apply(std::move(*applied), "Op-Pred (" + rules[0].first.name + ")");
            outcome.theta = rules[0].second;
            return outcome;
        }
    }
    return {};
}

} // namespace detail

// One step of the standard operational semantics. Constraint selection is
// FIFO by default; any non-stuck constraint may be chosen (confluence).
inline StepResult step(const Specification& spec, const Footprints& fp, const Configuration& k,
                       const StepPolicy& policy = fifo_policy()) {
    auto order = policy(k);
    for (size_t idx : order) {
        std::string selected = to_string(k.constraints[idx].c);
        auto outcome = detail::try_step_at(spec, fp, k, idx);
        switch (outcome.status) {
            case detail::TryStatus::NotApplicable: continue;
            case detail::TryStatus::Failed:
                return StepResult{StepStatus::Failed, {}, outcome.fail, {}, std::move(selected), {}};
            case detail::TryStatus::Applied:
                return StepResult{StepStatus::Progressed, std::move(outcome.next), {},
                                  outcome.rule_name, std::move(selected), std::move(outcome.theta)};
        }
    }
    return StepResult{StepStatus::Stuck, {}, {}, {}, {}, {}};
}

enum class SolveStatus { Success, Failure, Stuck, FuelExhausted };

struct SolveResult {
    SolveStatus status;
    Configuration config;
    StepFail fail;
};

using TraceSink = std::function<void(const std::string&)>;

// Applies step until no rule fires.  Success iff no constraints remain;
// Failure is terminal; otherwise Stuck.  The fuel budget bounds divergence on
// non-well-founded specs.
inline SolveResult solve_exhaustively(const Specification& spec, const Footprints& fp,
                                      Configuration k, const StepPolicy& policy = fifo_policy(),
                                      uint64_t fuel = 100000, const TraceSink& trace = {}) {
    for (uint64_t used = 0; used < fuel; ++used) {
        if (k.constraints.empty()) return SolveResult{SolveStatus::Success, std::move(k), {}};
        auto r = step(spec, fp, k, policy);
        switch (r.status) {
            case StepStatus::Progressed:
                if (trace)
                    trace(r.rule_name + " | " + r.selected +
                          (r.theta.empty() ? "" : " | " + to_string(r.theta)));
                k = std::move(r.next);
                break;
            case StepStatus::Failed:
                if (trace) trace("failed: " + r.fail.reason + " on " + r.fail.constraint);
                return SolveResult{SolveStatus::Failure, std::move(k), r.fail};
            case StepStatus::Stuck: return SolveResult{SolveStatus::Stuck, std::move(k), {}};
        }
    }
    return SolveResult{SolveStatus::FuelExhausted, std::move(k), {}};
}

} // namespace refsynth
