#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "refsynth/eq.hpp"
#include "refsynth/regex.hpp"
#include "refsynth/subst.hpp"
#include "refsynth/term.hpp"

namespace refsynth {

// Visibility policy: a strict partial order on labels, closed transitively at
// load.  (a, b) in prefers means a-labeled steps shadow b-labeled steps.  The
// reserved label name "$" stands for end-of-path; absent entries leave
// end-of-path incomparable with continuations.
struct LabelOrder {
    std::set<std::pair<std::string, std::string>> prefers;

    bool empty() const { return prefers.empty(); }

    bool strictly_prefers(const std::string& a, const std::string& b) const {
        return prefers.count({a, b}) > 0;
    }

    // Transitive closure; returns false on a cycle (not a strict order).
    bool close() {
        bool changed = true;
        while (changed) {
            changed = false;
            std::vector<std::pair<std::string, std::string>> add;
            for (const auto& [a, b] : prefers)
                for (const auto& [c, d] : prefers)
                    if (b == c && !prefers.count({a, d})) add.emplace_back(a, d);
            for (auto& p : add) {
                prefers.insert(p);
                changed = true;
            }
        }
        for (const auto& [a, b] : prefers)
            if (a == b) return false;
        return true;
    }
};

// Data well-formedness filter of a query: a lambda-bound scope variable and an
// equality-constraint body over it.
struct DataFilter {
    std::string binder;
    EqPtr body;
};

inline DataFilter apply_subst(const Substitution& s, const DataFilter& f) {
    if (s.terms.count(f.binder)) {
        Substitution shadowed = s;
        shadowed.terms.erase(f.binder);
        return DataFilter{f.binder, apply_subst(shadowed, f.body)};
    }
    return DataFilter{f.binder, apply_subst(s, f.body)};
}

inline std::set<std::string> free_vars(const DataFilter& f) {
    std::set<std::string> out, bound{f.binder};
    collect_free_vars(f.body, out, bound);
    return out;
}

// A resolution path: source scope plus labeled steps; the target is the last
// step's scope (or the source when empty).
struct ResolutionPath {
    ScopeId source;
    std::vector<std::pair<Label, ScopeId>> steps;

    ScopeId target() const { return steps.empty() ? source : steps.back().second; }

    std::vector<Label> word() const {
        std::vector<Label> w;
        w.reserve(steps.size());
        for (const auto& [l, s] : steps) w.push_back(l);
        return w;
    }

    bool visits(ScopeId s) const {
        if (source == s) return true;
        for (const auto& [l, t] : steps)
            if (t == s) return true;
        return false;
    }

    friend bool operator==(const ResolutionPath& a, const ResolutionPath& b) {
        return a.source == b.source && a.steps == b.steps;
    }
    friend bool operator<(const ResolutionPath& a, const ResolutionPath& b) {
        if (a.source != b.source) return a.source < b.source;
        return a.steps < b.steps;
    }
};

inline std::string to_string(const ResolutionPath& p) {
    std::ostringstream os;
    os << "$s" << p.source.value;
    for (const auto& [l, s] : p.steps) os << " -" << l.name << "-> $s" << s.value;
    return os.str();
}

struct UnknownScopeError {
    ScopeId scope;
};

// The scope graph: scopes, labeled edges, and the scope-to-data mapping rho.
// Grows monotonically during solving; copied on fork (terms inside are
// shared immutably).
class ScopeGraph {
  public:
    struct Edge {
        ScopeId src;
        Label label;
        ScopeId dst;

        friend bool operator<(const Edge& a, const Edge& b) {
            if (a.src != b.src) return a.src < b.src;
            if (a.label != b.label) return a.label < b.label;
            return a.dst < b.dst;
        }
        friend bool operator==(const Edge& a, const Edge& b) {
            return a.src == b.src && a.label == b.label && a.dst == b.dst;
        }
    };

    ScopeId add_scope(TermPtr data, std::string alias = {}) {
        ScopeId s{next_id_++};
        scopes_.insert(s);
        data_[s] = std::move(data);
        if (!alias.empty()) alias_[s] = std::move(alias);
        return s;
    }

    bool has_scope(ScopeId s) const { return scopes_.count(s) > 0; }

    std::optional<UnknownScopeError> add_edge(ScopeId src, const Label& l, ScopeId dst) {
        if (!has_scope(src)) return UnknownScopeError{src};
        if (!has_scope(dst)) return UnknownScopeError{dst};
        edges_.insert(Edge{src, l, dst}); // duplicate adds are idempotent
        return std::nullopt;
    }

    TermPtr data(ScopeId s) const {
        auto it = data_.find(s);
        return it == data_.end() ? nullptr : it->second;
    }

    const std::set<ScopeId>& scopes() const { return scopes_; }
    const std::set<Edge>& edges() const { return edges_; }
    const std::map<ScopeId, TermPtr>& data_map() const { return data_; }

    std::string alias(ScopeId s) const {
        auto it = alias_.find(s);
        return it == alias_.end() ? "" : it->second;
    }

    std::vector<Edge> out_edges(ScopeId s) const {
        std::vector<Edge> out;
        for (const auto& e : edges_)
            if (e.src == s) out.push_back(e);
        return out;
    }

    std::vector<Edge> in_edges(ScopeId s) const {
        std::vector<Edge> out;
        for (const auto& e : edges_)
            if (e.dst == s) out.push_back(e);
        return out;
    }

    void apply_subst(const Substitution& theta) {
        for (auto& [s, d] : data_) d = refsynth::apply_subst(theta, d);
    }

    friend bool operator==(const ScopeGraph& a, const ScopeGraph& b) {
        if (a.scopes_ != b.scopes_ || a.edges_ != b.edges_) return false;
        if (a.data_.size() != b.data_.size()) return false;
        for (const auto& [s, d] : a.data_) {
            auto it = b.data_.find(s);
            if (it == b.data_.end() || !term_eq(d, it->second)) return false;
        }
        return true;
    }

  private:
    uint32_t next_id_ = 0;
    std::set<ScopeId> scopes_;
    std::set<Edge> edges_;
    std::map<ScopeId, TermPtr> data_;
    std::map<ScopeId, std::string> alias_;
};

// True iff probe occurs as a ScopeRef anywhere inside data(s).
inline bool data_contains(const ScopeGraph& g, ScopeId s, ScopeId probe) {
    auto d = g.data(s);
    return d && contains_subterm(d, mk_scope(probe));
}

// --- equality constraint evaluation -----------------------------------------

struct EqFailure {
    enum class Kind { Clash, NotGround } kind;
};

using EvalEqResult = std::variant<Substitution, EqFailure>;

// Evaluates an equality constraint against the graph, producing a unifier.
// Conjunctions are evaluated left to right, threading the substitution.
inline EvalEqResult eval_eq(const ScopeGraph& g, const EqPtr& e) {
    switch (e->kind) {
        case EqKind::Eq: {
            auto theta = unify(e->a, e->b);
            if (!theta) return EqFailure{EqFailure::Kind::Clash};
            return *theta;
        }
        case EqKind::DataOf: {
            if (e->a->kind != TermKind::Scope) return EqFailure{EqFailure::Kind::NotGround};
            auto d = g.data(e->a->scope);
            if (!d) return EqFailure{EqFailure::Kind::Clash};
            auto theta = unify(d, e->b);
            if (!theta) return EqFailure{EqFailure::Kind::Clash};
            return *theta;
        }
        case EqKind::Conj: {
            auto r1 = eval_eq(g, e->e1);
            if (std::holds_alternative<EqFailure>(r1)) return r1;
            auto theta1 = std::get<Substitution>(r1);
            auto r2 = eval_eq(g, apply_subst(theta1, e->e2));
            if (std::holds_alternative<EqFailure>(r2)) return r2;
            return compose(theta1, std::get<Substitution>(r2));
        }
        case EqKind::Exists: {
            Substitution freshen;
            freshen.terms[e->binder] = fresh_var(e->binder);
            return eval_eq(g, apply_subst(freshen, e->e1));
        }
    }
    return EqFailure{EqFailure::Kind::Clash};
}

// Evaluates a filter against a candidate target scope.
inline std::optional<Substitution> eval_filter(const ScopeGraph& g, const DataFilter& f,
                                               ScopeId target) {
    Substitution bind;
    bind.terms[f.binder] = mk_scope(target);
    auto r = eval_eq(g, apply_subst(bind, f.body));
    if (std::holds_alternative<EqFailure>(r)) return std::nullopt;
    return std::get<Substitution>(r);
}

// --- query resolution --------------------------------------------------------

struct ResolvedPath {
    ResolutionPath path;
    Substitution subst; // filter witness
};

namespace detail {

// p1 shadows p2 iff at the first index where their label words differ, p1's
// label is strictly preferred.  End-of-path is compared as the label "$".
inline bool shadows(const LabelOrder& order, const ResolutionPath& p1, const ResolutionPath& p2) {
    size_t n = std::max(p1.steps.size(), p2.steps.size());
    for (size_t i = 0; i < n; ++i) {
        std::string l1 = i < p1.steps.size() ? p1.steps[i].first.name : "$";
        std::string l2 = i < p2.steps.size() ? p2.steps[i].first.name : "$";
        if (l1 == l2) continue;
        return order.strictly_prefers(l1, l2);
    }
    return false; // identical words never shadow each other
}

using PathState = std::pair<uint32_t, std::string>; // (scope, residual regex)

inline void all_matching_paths(const ScopeGraph& g, ScopeId cur, const RegexPtr& residual,
                               ResolutionPath& acc, std::set<PathState>& states,
                               const DataFilter& filter, std::vector<ResolvedPath>& out) {
    if (is_nullable(residual)) {
        if (auto theta = eval_filter(g, filter, cur)) out.push_back(ResolvedPath{acc, *theta});
    }
    for (const auto& e : g.out_edges(cur)) {
        auto d = derivative(residual, e.label);
        if (is_empty_set(d)) continue;
        // cycle-freedom per (scope, residual) automaton state: a scope may be
        // revisited with a different residual (the qualifier paths need this),
        // but repeating a state would walk forever
        PathState key{e.dst.value, refsynth::to_string(d)};
        if (states.count(key)) continue;
        states.insert(key);
        acc.steps.emplace_back(e.label, e.dst);
        all_matching_paths(g, e.dst, d, acc, states, filter, out);
        acc.steps.pop_back();
        states.erase(key);
    }
}

} // namespace detail

// Ans: all state-acyclic paths from source whose label word matches the regex
// and whose target data satisfies the filter, minus paths shadowed by another
// reachable-and-matching path under the order.  The filter may have free
// variables; each returned path carries its filter witness substitution.
inline std::vector<ResolvedPath> resolve(const ScopeGraph& g, ScopeId source, const RegexPtr& r,
                                         const DataFilter& filter, const LabelOrder& order) {
    std::vector<ResolvedPath> reachable;
    ResolutionPath acc{source, {}};
    std::set<detail::PathState> states{{source.value, refsynth::to_string(r)}};
    detail::all_matching_paths(g, source, r, acc, states, filter, reachable);

    std::vector<ResolvedPath> visible;
    for (const auto& cand : reachable) {
        bool shadowed = false;
        for (const auto& other : reachable) {
            if (&other == &cand) continue;
            if (detail::shadows(order, other.path, cand.path)) {
                shadowed = true;
                break;
            }
        }
        if (!shadowed) visible.push_back(cand);
    }
    std::sort(visible.begin(), visible.end(),
              [](const ResolvedPath& a, const ResolvedPath& b) { return a.path < b.path; });
    return visible;
}

// --- backward traversal (search heuristic) -----------------------------------

// A pending edge that solving might still add: a concrete source scope or
// unknown (conflicts with every scope), plus the label.
struct PotentialEdge {
    std::optional<ScopeId> scope; // nullopt = unknown source
    Label label;

    friend bool operator<(const PotentialEdge& a, const PotentialEdge& b) {
        if (a.scope.has_value() != b.scope.has_value()) return !a.scope.has_value();
        if (a.scope && b.scope && !(*a.scope == *b.scope)) return *a.scope < *b.scope;
        return a.label < b.label;
    }
    friend bool operator==(const PotentialEdge& a, const PotentialEdge& b) {
        return a.scope == b.scope && a.label == b.label;
    }
};

struct BackwardResult {
    // Candidate source scopes with a forward witness path to the target.
    std::vector<std::pair<ScopeId, ResolutionPath>> candidates;
    // Nonempty when the traversal would cross a pending (scope, label) pair:
    // the incomplete-graph signal.
    std::set<PotentialEdge> blockers;
};

// Walks inverted edges from the target, guided by invert(r), yielding source
// scopes whose forward word matches r.  Over-approximates visibility
// (shadowing is not checked here).  Records a blocker whenever a pending edge
// could extend the traversal.
inline BackwardResult resolve_backward(const ScopeGraph& g, ScopeId target, const RegexPtr& r,
                                       const std::set<PotentialEdge>& open_scopes) {
    BackwardResult result;
    RegexPtr inv = invert(r);

    // backward state: current scope, residual of the inverted regex, and the
    // forward steps collected so far (in forward order, ending at target)
    struct State {
        ScopeId scope;
        RegexPtr residual;
        std::vector<std::pair<Label, ScopeId>> fwd_steps;
        std::set<detail::PathState> visited; // (scope, residual) along this walk
    };
    std::vector<State> stack;
    stack.push_back(State{target, inv, {}, {{target.value, refsynth::to_string(inv)}}});

    while (!stack.empty()) {
        State st = std::move(stack.back());
        stack.pop_back();

        if (is_nullable(st.residual))
            result.candidates.emplace_back(st.scope, ResolutionPath{st.scope, st.fwd_steps});

        auto fs = first_set(st.residual);
        for (const auto& l : fs) {
            for (const auto& pe : open_scopes) {
                if (pe.label == l) result.blockers.insert(pe);
            }
        }
        for (const auto& e : g.in_edges(st.scope)) {
            if (!fs.count(e.label)) continue;
            auto d = derivative(st.residual, e.label);
            if (is_empty_set(d)) continue;
            detail::PathState key{e.src.value, refsynth::to_string(d)};
            if (st.visited.count(key)) continue;
            State next{e.src, d, {}, st.visited};
            next.visited.insert(key);
            next.fwd_steps.reserve(st.fwd_steps.size() + 1);
            next.fwd_steps.emplace_back(e.label, st.scope);
            next.fwd_steps.insert(next.fwd_steps.end(), st.fwd_steps.begin(), st.fwd_steps.end());
            stack.push_back(std::move(next));
        }
    }
    std::sort(result.candidates.begin(), result.candidates.end(),
              [](const auto& a, const auto& b) {
                  if (!(a.first == b.first)) return a.first < b.first;
                  return a.second < b.second;
              });
    result.candidates.erase(std::unique(result.candidates.begin(), result.candidates.end(),
                                        [](const auto& a, const auto& b) {
                                            return a.first == b.first && a.second == b.second;
                                        }),
                            result.candidates.end());
    return result;
}

// --- DOT export ----------------------------------------------------------------

inline std::string to_dot(const ScopeGraph& g) {
    std::ostringstream os;
    os << "digraph scopegraph {\n  node [shape=box];\n";
    for (ScopeId s : g.scopes()) {
        os << "  s" << s.value << " [label=\"s" << s.value;
        if (!g.alias(s).empty()) os << " (" << g.alias(s) << ")";
        if (auto d = g.data(s)) os << " \xE2\x86\xA6 " << refsynth::to_string(d);
        os << "\"];\n";
    }
    for (const auto& e : g.edges())
        os << "  s" << e.src.value << " -> s" << e.dst.value << " [label=\"" << e.label.name
           << "\"];\n";
    os << "}\n";
    return os.str();
}

} // namespace refsynth
