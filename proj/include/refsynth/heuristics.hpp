#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "refsynth/synthesis.hpp"

namespace refsynth {

// --- canonical forms (alpha-renaming) ------------------------------------------

namespace detail {

inline void ordered_vars(const TermPtr& t, std::vector<std::string>& out,
                         std::set<std::string>& seen) {
    if (t->kind == TermKind::Var) {
        if (seen.insert(t->name).second) out.push_back(t->name);
        return;
    }
    for (const auto& a : t->args) ordered_vars(a, out, seen);
}

inline void ordered_vars(const EqPtr& e, std::vector<std::string>& out,
                         std::set<std::string>& seen) {
    switch (e->kind) {
        case EqKind::Eq:
        case EqKind::DataOf:
            ordered_vars(e->a, out, seen);
            ordered_vars(e->b, out, seen);
            return;
        case EqKind::Conj:
            ordered_vars(e->e1, out, seen);
            ordered_vars(e->e2, out, seen);
            return;
        case EqKind::Exists:
            if (seen.insert(e->binder).second) out.push_back(e->binder);
            ordered_vars(e->e1, out, seen);
            return;
    }
}

inline void ordered_vars(const ConstraintPtr& c, std::vector<std::string>& out,
                         std::set<std::string>& seen) {
    auto take = [&](const std::string& v) {
        if (seen.insert(v).second) out.push_back(v);
    };
    switch (c->kind) {
        case CKind::Emp:
        case CKind::False: return;
        case CKind::Conj:
            ordered_vars(c->c1, out, seen);
            ordered_vars(c->c2, out, seen);
            return;
        case CKind::Exists:
            take(c->binder);
            ordered_vars(c->c1, out, seen);
            return;
        case CKind::Single:
            ordered_vars(c->t1, out, seen);
            if (c->set->var) take(*c->set->var);
            for (const auto& e : c->set->elems) ordered_vars(e, out, seen);
            return;
        case CKind::Forall:
            take(c->binder);
            if (c->set->var) take(*c->set->var);
            for (const auto& e : c->set->elems) ordered_vars(e, out, seen);
            ordered_vars(c->c1, out, seen);
            return;
        case CKind::NewScope:
            ordered_vars(c->t1, out, seen);
            ordered_vars(c->t2, out, seen);
            return;
        case CKind::NewEdge:
            ordered_vars(c->t1, out, seen);
            ordered_vars(c->t2, out, seen);
            return;
        case CKind::Query:
            ordered_vars(c->query->source, out, seen);
            take(c->query->filter.binder);
            ordered_vars(c->query->filter.body, out, seen);
            take(c->query->result_var);
            ordered_vars(c->query->cont, out, seen);
            return;
        case CKind::Eq: ordered_vars(c->eq, out, seen); return;
        case CKind::Pred:
            for (const auto& a : c->args) ordered_vars(a, out, seen);
            return;
    }
}

inline std::string constraint_skeleton(const ConstraintPtr& c) {
    std::set<std::string> vars;
    collect_all_vars(c, vars);
    std::map<std::string, std::string> blank;
    for (const auto& v : vars) blank[v] = "_";
    return to_string(rename_vars(c, blank));
}

} // namespace detail

struct CanonResult {
    std::string sig;
    std::map<std::string, std::string> varmap; // original var -> canonical name
};

// Canonical form of (graph, constraints) under variable renaming: constraints
// are sorted by a structural key, then all variables are renamed in traversal
// order.  Two states are alpha-equivalent iff their signatures coincide.
inline CanonResult canon_graph_constraints(const Configuration& k) {
    std::vector<size_t> idx(k.constraints.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<std::string> skels(k.constraints.size());
    for (size_t i = 0; i < idx.size(); ++i) skels[i] = detail::constraint_skeleton(k.constraints[i].c);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return skels[a] < skels[b]; });

    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const auto& [s, d] : k.graph.data_map())
        if (d) detail::ordered_vars(d, order, seen);
    for (size_t i : idx) detail::ordered_vars(k.constraints[i].c, order, seen);

    CanonResult out;
    std::map<std::string, std::string> ren;
    int n = 0;
    for (const auto& v : order) {
        std::string cn = "v" + std::to_string(n++);
        ren[v] = cn;
        out.varmap[v] = cn;
    }

    std::ostringstream os;
    os << "G:";
    for (const auto& [s, d] : k.graph.data_map())
        os << 's' << s.value << '=' << (d ? to_string(rename_vars(d, ren)) : "-") << ';';
    for (const auto& e : k.graph.edges())
        os << 'e' << e.src.value << '-' << e.label.name << '>' << e.dst.value << ';';
    os << "C:";
    for (size_t i : idx) os << to_string(rename_vars(k.constraints[i].c, ren)) << ';';
    out.sig = os.str();
    return out;
}

// Full-state canonical signature (adds U and H); used to deduplicate states
// in the naive breadth-first search.
inline std::string canon_full(const Configuration& k) {
    CanonResult base = canon_graph_constraints(k);
    std::map<std::string, std::string> ren = base.varmap;
    int n = static_cast<int>(ren.size());
    std::ostringstream os;
    os << base.sig << "H:";
    for (const auto& [hole, st] : k.h) {
        std::vector<std::string> extra;
        std::set<std::string> seen;
        for (const auto& [v, cn] : ren) seen.insert(v);
        detail::ordered_vars(st.term, extra, seen);
        for (const auto& v : extra) ren[v] = "v" + std::to_string(n++);
        os << 'h' << hole.value << "=(";
        for (ScopeId s : st.path) os << 's' << s.value << '.';
        os << ',' << to_string(rename_vars(st.term, ren)) << ");";
    }
    os << "U:";
    for (const auto& [v, hole] : k.u) {
        auto it = ren.find(v);
        os << (it == ren.end() ? v : it->second) << '>' << hole.value << ';';
    }
    return os.str();
}

// --- static spec analyses ---------------------------------------------------------

namespace detail {

inline bool body_leads_to_query(const ConstraintPtr& c, const std::set<std::string>& leading) {
    switch (c->kind) {
        case CKind::Query: return true;
        case CKind::Conj:
            return body_leads_to_query(c->c1, leading) || body_leads_to_query(c->c2, leading);
        case CKind::Exists:
        case CKind::Forall: return body_leads_to_query(c->c1, leading);
        case CKind::Pred: return leading.count(c->pred) > 0;
        default: return false;
    }
}

inline int eq_exists_count(const EqPtr& e) {
    switch (e->kind) {
        case EqKind::Exists: return 1 + eq_exists_count(e->e1);
        case EqKind::Conj: return eq_exists_count(e->e1) + eq_exists_count(e->e2);
        default: return 0;
    }
}

} // namespace detail

// Predicates whose expansion may reach a query constraint (transitively).
inline std::set<std::string> query_leading_preds(const Specification& spec) {
    std::set<std::string> leading;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& r : spec.rules) {
            if (leading.count(r.head_symbol)) continue;
            if (detail::body_leads_to_query(r.body, leading)) {
                leading.insert(r.head_symbol);
                changed = true;
            }
        }
    }
    return leading;
}

// Number of Exists-bound variables in a rule body (filter bodies included).
inline int exists_count(const ConstraintPtr& c) {
    switch (c->kind) {
        case CKind::Exists: return 1 + exists_count(c->c1);
        case CKind::Conj: return exists_count(c->c1) + exists_count(c->c2);
        case CKind::Forall: return exists_count(c->c1);
        case CKind::Query:
            return detail::eq_exists_count(c->query->filter.body) + exists_count(c->query->cont);
        case CKind::Eq: return detail::eq_exists_count(c->eq);
        default: return 0;
    }
}

// Stable priority order over candidate rules: query-leading rules first, then
// fewer Exists-bound variables.  Never drops a rule.
template <typename RuleLike>
inline std::vector<RuleLike> order_rule_candidates_by(const std::set<std::string>& leading,
                                                      std::vector<RuleLike> rules,
                                                      const Rule& (*get)(const RuleLike&)) {
    std::stable_sort(rules.begin(), rules.end(), [&](const RuleLike& a, const RuleLike& b) {
        const Rule& ra = get(a);
        const Rule& rb = get(b);
        bool la = detail::body_leads_to_query(ra.body, leading);
        bool lb = detail::body_leads_to_query(rb.body, leading);
        if (la != lb) return la;
        return exists_count(ra.body) < exists_count(rb.body);
    });
    return rules;
}

inline std::vector<Rule> order_rule_candidates(const std::set<std::string>& leading,
                                               std::vector<Rule> rules) {
    return order_rule_candidates_by<Rule>(leading, std::move(rules),
                                          +[](const Rule& r) -> const Rule& { return r; });
}

inline std::vector<std::pair<Rule, Substitution>> order_rule_candidates(
    const std::set<std::string>& leading, std::vector<std::pair<Rule, Substitution>> rules) {
    return order_rule_candidates_by<std::pair<Rule, Substitution>>(
        leading, std::move(rules),
        +[](const std::pair<Rule, Substitution>& p) -> const Rule& { return p.first; });
}

// --- hole relatedness ------------------------------------------------------------

// Taint closure: a variable is related to a hole through U, transitively via
// constraints that share variables.
inline std::map<std::string, std::set<HoleId>> var_hole_taint(const Configuration& k) {
    std::map<std::string, std::set<HoleId>> taint;
    for (const auto& [v, hole] : k.u) taint[v].insert(hole);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& pc : k.constraints) {
            auto fv = free_vars(pc.c);
            std::set<HoleId> holes;
            for (const auto& v : fv) {
                auto it = taint.find(v);
                if (it != taint.end()) holes.insert(it->second.begin(), it->second.end());
            }
            if (holes.empty()) continue;
            for (const auto& v : fv)
                for (HoleId hh : holes)
                    if (taint[v].insert(hh).second) changed = true;
        }
    }
    return taint;
}

inline std::set<HoleId> constraint_holes(const Configuration& k,
                                         const std::map<std::string, std::set<HoleId>>& taint,
                                         size_t idx) {
    std::set<HoleId> out;
    for (const auto& v : free_vars(k.constraints[idx].c)) {
        auto it = taint.find(v);
        if (it != taint.end()) out.insert(it->second.begin(), it->second.end());
    }
    return out;
}

// Constraint selection: queries first, then query-leading predicates, then
// the rest; insertion age breaks ties.  With focus_only, restricted to
// constraints related to the focus hole (None if there is no such
// constraint).
inline std::optional<size_t> select_constraint(const std::set<std::string>& leading,
                                               const Configuration& k, HoleId focus,
                                               bool focus_only = true) {
    auto taint = var_hole_taint(k);
    std::optional<size_t> best;
    auto rank = [&](size_t idx) {
        const ConstraintPtr& c = k.constraints[idx].c;
        if (c->kind == CKind::Query) return 0;
        if (c->kind == CKind::Pred && leading.count(c->pred)) return 1;
        return 2;
    };
    for (size_t i = 0; i < k.constraints.size(); ++i) {
        if (focus_only && !constraint_holes(k, taint, i).count(focus)) continue;
        if (!best) {
            best = i;
            continue;
        }
        int ri = rank(i), rb = rank(*best);
        if (ri < rb || (ri == rb && k.constraints[i].age < k.constraints[*best].age)) best = i;
    }
    return best;
}

// --- search machinery ----------------------------------------------------------------

struct SearchBudget {
    int64_t wall_clock_ms = 60000;
    int max_solutions_per_hole = 1;
    int max_expansion_depth = 3; // qualifier depth: query steps per hole
    int max_branches = 20000;
};

struct SearchOptions {
    bool heuristics_on = true;
    TraceSink trace = {};
};

struct SearchStats {
    uint64_t branches = 0;
    uint64_t expansions = 0;
    uint64_t parks = 0;
    uint64_t unparks = 0;
    uint64_t freezes = 0;
    uint64_t replays = 0;
    uint64_t emitted = 0;
    uint64_t dead = 0;
};

struct SearchBranch {
    Configuration config;
    HoleId focus;
    int depth = 0;
    int expansions = 0;
    uint64_t id = 0;
    std::set<PotentialEdge> pending_blockers;
};

// Base/recursive state pairing for the recursive-qualifier optimization: the
// recursive state's constraints are alpha-equivalent to the base's, its hole
// term instantiates the base's, and the hole target scope agrees.
struct RecursionWitness {
    uint64_t base_branch = 0;
    uint64_t rec_branch = 0;
    HoleId hole;
    TermPtr base_term;
    TermPtr rec_term;
    std::map<std::string, std::string> base_to_rec; // via canonical renaming
    std::vector<ScopeId> base_path;
    std::vector<QueryStep> base_steps;
    Configuration rec_config;
    std::vector<ScopeId> rec_path;
    std::vector<QueryStep> rec_steps;
};

struct BaseStateEntry {
    uint64_t branch_id = 0;
    HoleId hole;
    std::string sig;
    std::map<std::string, std::string> varmap;
    TermPtr term;
    ScopeId target;
    std::vector<ScopeId> path;
    std::vector<QueryStep> steps;
};

// Checks a stuck candidate against earlier stuck states for the same hole.
inline std::optional<RecursionWitness> detect_recursion(const std::vector<BaseStateEntry>& bases,
                                                        const SearchBranch& candidate,
                                                        const CanonResult& canon) {
    auto hst = candidate.config.h.find(candidate.focus);
    if (hst == candidate.config.h.end() || hst->second.path.empty()) return std::nullopt;
    ScopeId target = hst->second.path.front();
    for (const auto& base : bases) {
        if (base.hole != candidate.focus) continue;
        if (base.sig != canon.sig) continue;                      // (a) alpha-equivalent
        if (!(base.target == target)) continue;                   // (c) same target scope
        Substitution sigma;
        if (!match_into(base.term, hst->second.term, sigma)) continue; // (b) instantiation
        // canonical correspondence: base var -> canonical -> candidate var
        std::map<std::string, std::string> canon_to_rec;
        for (const auto& [v, cn] : canon.varmap) canon_to_rec[cn] = v;
        RecursionWitness w;
        w.base_branch = base.branch_id;
        w.rec_branch = candidate.id;
        w.hole = candidate.focus;
        w.base_term = base.term;
        w.rec_term = hst->second.term;
        bool complete = true;
        for (const auto& [v, cn] : base.varmap) {
            auto it = canon_to_rec.find(cn);
            if (it != canon_to_rec.end()) w.base_to_rec[v] = it->second;
        }
        std::set<std::string> base_term_vars;
        collect_vars(base.term, base_term_vars);
        for (const auto& v : base_term_vars)
            if (!w.base_to_rec.count(v)) complete = false;
        if (!complete) continue;
        w.base_path = base.path;
        w.base_steps = base.steps;
        w.rec_config = candidate.config;
        w.rec_path = hst->second.path;
        w.rec_steps = hst->second.steps;
        return w;
    }
    return std::nullopt;
}

struct ReplayedSolution {
    TermPtr term;
    std::vector<ScopeId> path;
    std::vector<QueryStep> steps;
    Configuration final_config;
};

// Derives a solution from a frozen recursive state, given a ground solution
// emitted under the base state.  The derived solution feeds back into replay.
inline std::optional<ReplayedSolution> replay_recursive(const Specification& spec,
                                                        const Footprints& fp,
                                                        const RecursionWitness& w,
                                                        const SolutionRecord& base_solution) {
    Substitution rho;
    if (!match_into(w.base_term, base_solution.term, rho)) return std::nullopt;

    Substitution theta;
    for (const auto& [v, g] : rho.terms) {
        if (!is_ground(g)) return std::nullopt;
        auto it = w.base_to_rec.find(v);
        if (it == w.base_to_rec.end()) return std::nullopt;
        theta.terms[it->second] = g;
    }
    TermPtr derived = apply_subst(theta, w.rec_term);
    if (!is_ground(derived)) return std::nullopt;

    if (base_solution.path.size() < w.base_path.size()) return std::nullopt;
    size_t prefix = base_solution.path.size() - w.base_path.size();

    ReplayedSolution out;
    out.term = derived;
    out.path.assign(base_solution.path.begin(),
                    base_solution.path.begin() + static_cast<long>(prefix));
    out.path.insert(out.path.end(), w.rec_path.begin(), w.rec_path.end());
    out.steps.assign(base_solution.steps.begin(),
                     base_solution.steps.begin() + static_cast<long>(prefix));
    out.steps.insert(out.steps.end(), w.rec_steps.begin(), w.rec_steps.end());

    // validate by running the instantiated recursive state to completion
    auto applied = w.rec_config.applied(theta);
    if (!applied) return std::nullopt;
    auto solved = solve_exhaustively(spec, fp, std::move(*applied));
    if (solved.status != SolveStatus::Success) return std::nullopt;
    Configuration fin = std::move(solved.config);
    auto& st = fin.h[w.hole];
    st.path = out.path;
    st.steps = out.steps;
    st.term = out.term;
    if (!is_accepting(fin)) return std::nullopt;
    out.final_config = std::move(fin);
    return out;
}

// Cross-hole solution insertion: substitutes a donor hole's solved term into
// a blocked branch and adopts the donor's composite path for that hole.
struct DonorSolution {
    TermPtr term;
    std::vector<ScopeId> path;
    std::vector<QueryStep> steps;
};

inline std::vector<SearchBranch> insert_cross_hole_solutions(
    const SearchBranch& blocked, const std::map<HoleId, std::vector<DonorSolution>>& donors,
    uint64_t& next_branch_id) {
    std::vector<SearchBranch> out;
    for (const auto& [hole, solutions] : donors) {
        auto hst = blocked.config.h.find(hole);
        if (hst == blocked.config.h.end()) continue;
        if (hst->second.path.size() != 1) continue; // only un-expanded donee holes
        for (const auto& donor : solutions) {
            auto theta = unify(hst->second.term, donor.term);
            if (!theta) continue;
            auto applied = blocked.config.applied(*theta);
            if (!applied) continue;
            Configuration k = std::move(*applied);
            k.h[hole] = HoleState{donor.path, donor.steps, donor.term};
            SearchBranch b;
            b.config = std::move(k);
            b.focus = blocked.focus;
            b.depth = blocked.depth + 1;
            b.expansions = blocked.expansions + 1;
            b.id = next_branch_id++;
            out.push_back(std::move(b));
        }
    }
    return out;
}

// Holes whose pending constraints could supply one of the blocking edges: the
// responsible constraints plus everything transitively sharing a variable.
inline std::set<HoleId> holes_for_blockers(const Footprints& fp, const Configuration& k,
                                           const std::set<PotentialEdge>& blockers) {
    auto taint = var_hole_taint(k);
    std::set<HoleId> out;
    auto matches = [&](const PotentialEdge& a, const PotentialEdge& b) {
        if (!(a.label == b.label)) return false;
        if (!a.scope || !b.scope) return true;
        return *a.scope == *b.scope;
    };
    for (size_t i = 0; i < k.constraints.size(); ++i) {
        std::set<PotentialEdge> pot;
        detail::collect_potential(k.constraints[i].c, fp, pot);
        bool responsible = false;
        for (const auto& pe : pot)
            for (const auto& bl : blockers)
                if (matches(pe, bl)) responsible = true;
        if (!responsible) continue;
        for (HoleId h : constraint_holes(k, taint, i)) out.insert(h);
    }
    return out;
}

// --- the search -------------------------------------------------------------------

using RecordSink = std::function<void(const SolutionRecord&)>;

struct SearchOutcome {
    bool budget_exhausted = false;
    bool complete = false; // frontier exhausted without hitting a budget limit
    SearchStats stats;
};

namespace detail {

struct SearchEngine {
    const Specification& spec;
    const Footprints& fp;
    SearchBudget budget;
    SearchOptions options;
    RecordSink sink;

    std::set<std::string> leading;
    std::vector<HoleId> holes;
    SearchStats stats;
    uint64_t next_branch_id = 1;
    bool budget_hit = false;
    bool depth_pruned = false;
    std::chrono::steady_clock::time_point t0;

    std::map<HoleId, std::set<std::string>> emitted_terms;
    std::map<HoleId, int> emitted_count;
    std::map<HoleId, std::vector<DonorSolution>> donors;

    struct Parked {
        SearchBranch branch;
        std::set<HoleId> waiting;
        std::set<std::string> tried; // hole.value:term
    };
    std::vector<Parked> parked;

    std::vector<BaseStateEntry> bases;
    std::vector<RecursionWitness> witnesses;
    std::deque<SolutionRecord> replay_queue;
    std::set<std::string> seen_states;

    std::vector<SearchBranch> next_frontier;
    std::vector<SolutionRecord> batch;

    explicit SearchEngine(const Specification& s, const Footprints& f, SearchBudget b,
                          SearchOptions o, RecordSink snk)
        : spec(s), fp(f), budget(b), options(std::move(o)), sink(std::move(snk)) {
        leading = query_leading_preds(spec);
        t0 = std::chrono::steady_clock::now();
    }

    int step_cap() const { return 2 * budget.max_expansion_depth + 6; }
    size_t path_cap() const { return static_cast<size_t>(budget.max_expansion_depth) + 1; }

    bool wall_clock_ok() const {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        return ms < budget.wall_clock_ms;
    }

    bool all_capped() const {
        for (HoleId h : holes) {
            auto it = emitted_count.find(h);
            if (it == emitted_count.end() || it->second < budget.max_solutions_per_hole)
                return false;
        }
        return !holes.empty();
    }

    void trace(const std::string& s) {
        if (options.trace) options.trace(s);
    }

    void try_emit(SolutionRecord record) {
        std::string key = to_string(record.term);
        auto& seen = emitted_terms[record.hole];
        if (seen.count(key)) return;
        if (emitted_count[record.hole] >= budget.max_solutions_per_hole) return;
        seen.insert(key);
        emitted_count[record.hole]++;
        stats.emitted++;
        trace("emit hole " + std::to_string(record.hole.value) + ": " + key);
        if (sink) sink(record);
        donors[record.hole].push_back(DonorSolution{record.term, record.path, record.steps});
        replay_queue.push_back(record);
        unpark_for(record.hole);
    }

    void unpark_for(HoleId h) {
        for (auto& p : parked) {
            if (!p.waiting.count(h)) continue;
            std::map<HoleId, std::vector<DonorSolution>> fresh;
            for (const auto& d : donors[h]) {
                std::string key = std::to_string(h.value) + ":" + to_string(d.term);
                if (p.tried.count(key)) continue;
                p.tried.insert(key);
                fresh[h].push_back(d);
            }
            if (fresh.empty()) continue;
            auto resumed = insert_cross_hole_solutions(p.branch, fresh, next_branch_id);
            for (auto& b : resumed) {
                stats.unparks++;
                stats.branches++;
                next_frontier.push_back(std::move(b));
            }
        }
    }

    void drain_replays() {
        while (!replay_queue.empty()) {
            SolutionRecord sol = std::move(replay_queue.front());
            replay_queue.pop_front();
            for (const auto& w : witnesses) {
                if (!(w.hole == sol.hole)) continue;
                auto derived = replay_recursive(spec, fp, w, sol);
                if (!derived) continue;
                if (derived->path.size() > path_cap()) continue;
                SolutionRecord r;
                r.hole = w.hole;
                r.term = derived->term;
                r.path = derived->path;
                r.steps = derived->steps;
                r.final_config = derived->final_config;
                r.origin = SolutionRecord::Origin::Replay;
                stats.replays++;
                try_emit(std::move(r));
            }
        }
    }

    void emit_batch() {
        std::stable_sort(batch.begin(), batch.end(), [](const SolutionRecord& a,
                                                        const SolutionRecord& b) {
            if (a.query_steps() != b.query_steps()) return a.query_steps() < b.query_steps();
            auto ta = to_string(a.term), tb = to_string(b.term);
            if (ta != tb) return ta < tb;
            return a.hole < b.hole;
        });
        for (auto& r : batch) try_emit(std::move(r));
        batch.clear();
        drain_replays();
    }

    void process_branch(SearchBranch branch) {
        auto solved = solve_exhaustively(spec, fp, std::move(branch.config));
        if (solved.status == SolveStatus::Failure || solved.status == SolveStatus::FuelExhausted) {
            stats.dead++;
            return;
        }
        branch.config = std::move(solved.config);
        if (solved.status == SolveStatus::Success) {
            if (is_accepting(branch.config)) {
                for (auto& r : records_from_accepted(branch.config, SolutionRecord::Origin::Search))
                    batch.push_back(std::move(r));
            } else {
                stats.dead++;
            }
            return;
        }

        // stuck
        if (branch.expansions >= step_cap()) {
            stats.dead++;
            return;
        }
        if (!hole_terms_bindable(branch.config)) {
            stats.dead++;
            return;
        }

        if (options.heuristics_on) {
            auto canon = canon_graph_constraints(branch.config);
            if (auto witness = detect_recursion(bases, branch, canon)) {
                HoleId h = witness->hole;
                witnesses.push_back(std::move(*witness));
                stats.freezes++;
                trace("froze recursive branch " + std::to_string(branch.id));
                // replay solutions that were emitted before this witness existed
                for (const auto& d : donors[h]) {
                    SolutionRecord seed;
                    seed.hole = h;
                    seed.term = d.term;
                    seed.path = d.path;
                    seed.steps = d.steps;
                    replay_queue.push_back(std::move(seed));
                }
                return; // frozen: no further expansion; replay emits its solutions
            }
            auto hst = branch.config.h.find(branch.focus);
            if (hst != branch.config.h.end() && !hst->second.path.empty()) {
                BaseStateEntry base;
                base.branch_id = branch.id;
                base.hole = branch.focus;
                base.sig = canon.sig;
                base.varmap = canon.varmap;
                base.term = hst->second.term;
                base.target = hst->second.path.front();
                base.path = hst->second.path;
                base.steps = hst->second.steps;
                bases.push_back(std::move(base));
            }
            expand_heuristic(std::move(branch));
        } else {
            expand_naive(std::move(branch));
        }
    }

    void enqueue_child(Configuration k, const SearchBranch& parent) {
        SearchBranch b;
        b.config = std::move(k);
        b.focus = parent.focus;
        b.depth = parent.depth + 1;
        b.expansions = parent.expansions + 1;
        b.id = next_branch_id++;
        // alpha-equivalent states explore identical futures; keep one per focus
        std::string sig = canon_full(b.config) + "|f" + std::to_string(b.focus.value);
        if (!seen_states.insert(sig).second) return;
        stats.branches++;
        next_frontier.push_back(std::move(b));
    }

    // A hole term containing a variable that occurs in no constraint and no
    // scope data can never become ground: the branch is hopeless.
    bool hole_terms_bindable(const Configuration& k) {
        std::set<std::string> live;
        for (const auto& pc : k.constraints) collect_all_vars(pc.c, live);
        for (const auto& [s, d] : k.graph.data_map())
            if (d) collect_vars(d, live);
        for (const auto& [hole, st] : k.h) {
            std::set<std::string> term_vars;
            collect_vars(st.term, term_vars);
            for (const auto& v : term_vars)
                if (!live.count(v)) return false;
        }
        return true;
    }

    void expand_heuristic(SearchBranch branch) {
        auto sel = select_constraint(leading, branch.config, branch.focus, true);
        if (!sel) sel = select_constraint(leading, branch.config, branch.focus, false);
        if (!sel) {
            stats.dead++;
            return;
        }
        size_t idx = *sel;
        const ConstraintPtr& c = branch.config.constraints[idx].c;
        stats.expansions++;
        if (c->kind == CKind::Query) {
            ExpandQueryOptions opts;
            opts.use_backward_search = true;
            opts.max_path_len = path_cap();
            auto r = expand_query(spec, fp, branch.config, idx, opts);
            for (auto& eq : r.branches) enqueue_child(std::move(eq.config), branch);
            if (branch.config.h.find(branch.focus) != branch.config.h.end() &&
                branch.config.h.at(branch.focus).path.size() + 1 > path_cap())
                depth_pruned = true;
            if (!r.blockers.empty()) {
                auto waiting = holes_for_blockers(fp, branch.config, r.blockers);
                waiting.erase(branch.focus); // donors for the focus itself cannot help
                if (!waiting.empty()) {
                    Parked p;
                    branch.pending_blockers = r.blockers;
                    p.branch = branch;
                    p.waiting = std::move(waiting);
                    parked.push_back(std::move(p));
                    stats.parks++;
                    trace("parked branch " + std::to_string(branch.id));
                    // late parking: donors may already exist
                    for (HoleId h : parked.back().waiting) unpark_for(h);
                }
            }
        } else if (c->kind == CKind::Pred) {
            auto rules = order_rule_candidates(leading, matching_rules(spec, c->pred, c->args));
            for (auto& k : expand_pred_with(branch.config, idx, rules))
                enqueue_child(std::move(k), branch);
        } else {
            stats.dead++; // a stuck non-expandable constraint (e.g. edge on a free scope)
        }
    }

    // Plain breadth-first expansion: one constraint per stuck state (the
    // confluence of the step relation makes a single order sufficient), in
    // insertion order, enumerating every expansion of the chosen constraint.
    // A constraint whose expansion set is currently empty is skipped so the
    // enabling work elsewhere in the state gets its turn first.
    void expand_naive(SearchBranch branch) {
        std::vector<size_t> order(branch.config.constraints.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return branch.config.constraints[a].age < branch.config.constraints[b].age;
        });
        for (size_t idx : order) {
            const ConstraintPtr& c = branch.config.constraints[idx].c;
            std::vector<Configuration> children;
            if (c->kind == CKind::Query) {
                ExpandQueryOptions opts;
                opts.use_backward_search = false;
                opts.max_path_len = path_cap();
                for (auto& eq : expand_query(spec, fp, branch.config, idx, opts).branches)
                    children.push_back(std::move(eq.config));
            } else if (c->kind == CKind::Pred) {
                children = expand_pred(spec, branch.config, idx);
            } else {
                continue;
            }
            if (children.empty()) continue;
            stats.expansions++;
            for (auto& k : children) enqueue_child(std::move(k), branch);
            return;
        }
        stats.dead++;
    }

    SearchOutcome run(Configuration k0) {
        for (const auto& [h, st] : k0.h) holes.push_back(h);
        std::vector<SearchBranch> frontier;
        if (options.heuristics_on && !holes.empty()) {
            for (HoleId h : holes) {
                SearchBranch b;
                b.config = k0;
                b.focus = h;
                b.id = next_branch_id++;
                stats.branches++;
                frontier.push_back(std::move(b));
            }
        } else {
            SearchBranch b;
            b.config = k0;
            b.focus = holes.empty() ? HoleId{0} : holes.front();
            b.id = next_branch_id++;
            stats.branches++;
            frontier.push_back(std::move(b));
        }

        while (!frontier.empty()) {
            if (!wall_clock_ok() || stats.branches > static_cast<uint64_t>(budget.max_branches)) {
                budget_hit = true;
                break;
            }
            if (all_capped()) break;
            next_frontier.clear();
            for (auto& b : frontier) {
                if (!wall_clock_ok()) {
                    budget_hit = true;
                    break;
                }
                process_branch(std::move(b));
            }
            emit_batch();
            if (budget_hit) break;
            frontier = std::move(next_frontier);
            next_frontier = {};
        }

        SearchOutcome out;
        out.stats = stats;
        out.budget_exhausted = budget_hit || (depth_pruned && !all_capped());
        out.complete = !out.budget_exhausted;
        return out;
    }
};

} // namespace detail

// Breadth-first speculative search from the post-initialization stuck
// configuration; emits accepted configurations' per-hole records through the
// sink in deterministic (query steps, pretty term) order per depth stratum.
inline SearchOutcome run_search(const Specification& spec, const Footprints& fp,
                                const Configuration& initial, const SearchBudget& budget,
                                const SearchOptions& options, const RecordSink& sink) {
    detail::SearchEngine engine(spec, fp, budget, options, sink);
    return engine.run(initial);
}

// --- the synthesize function ------------------------------------------------------

struct SynthesisOutcome {
    std::vector<SolutionRecord> records;
    std::optional<SynthesisError> error;
    bool budget_exhausted = false;
    bool search_complete = false;
    SearchStats stats;
};

// End-to-end pipeline: replace locks by fresh variables (done by the front
// end), solve to the stuck state, initialize hole targets, search, and emit
// one record per hole per accepted configuration.
inline SynthesisOutcome synthesize(const Specification& spec, const Footprints& fp,
                                   const SynthesisInput& input, const SearchBudget& budget,
                                   const SearchOptions& options = {}, const RecordSink& sink = {}) {
    SynthesisOutcome out;
    if (input.hole_vars.empty()) {
        Configuration k;
        k.push_back(input.goal);
        auto solved = solve_exhaustively(spec, compute_footprints(spec), std::move(k));
        if (solved.status != SolveStatus::Success)
            out.error = SynthesisError{SynthesisError::Kind::InitialTypeError,
                                       "lock-free program does not typecheck"};
        out.search_complete = true;
        return out;
    }

    auto prep = prepare_initial(spec, fp, input);
    if (std::holds_alternative<SynthesisError>(prep)) {
        out.error = std::get<SynthesisError>(prep);
        return out;
    }

    auto outcome = run_search(spec, fp, std::get<Configuration>(prep), budget, options,
                              [&](const SolutionRecord& r) {
                                  out.records.push_back(r);
                                  if (sink) sink(r);
                              });
    out.budget_exhausted = outcome.budget_exhausted;
    out.search_complete = outcome.complete;
    out.stats = outcome.stats;

    for (const auto& [h, var] : input.hole_vars) {
        bool any = false;
        for (const auto& r : out.records)
            if (r.hole == h) any = true;
        if (!any && outcome.budget_exhausted) {
            out.error = SynthesisError{SynthesisError::Kind::BudgetExhausted,
                                       "budget exhausted with no solution for a hole"};
            break;
        }
    }
    return out;
}

} // namespace refsynth
