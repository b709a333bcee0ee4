#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "refsynth/solver.hpp"

namespace refsynth {

// --- accepting states ---------------------------------------------------------

// Accept: all constraints solved, every hole has a composite path of length
// > 1, and every hole's term is ground.
inline bool is_accepting(const Configuration& k) {
    if (!k.constraints.empty()) return false;
    for (const auto& [hole, st] : k.h) {
        if (st.path.size() < 2) return false;
        if (!st.term || !is_ground(st.term)) return false;
    }
    return true;
}

// --- speculative predicate expansion (Op-Expand-Pred) ---------------------------

// One configuration per matching rule: the goal replaced by the rule body,
// the head unifier applied configuration-wide.  Branches where U[t/x] is
// undefined are dropped.
inline std::vector<Configuration> expand_pred_with(
    const Configuration& k, size_t idx, const std::vector<std::pair<Rule, Substitution>>& rules) {
    std::vector<Configuration> out;
    for (const auto& [rule, theta] : rules) {
        Configuration next = k;
        next.replace_at(idx, {rule.body});
        if (auto applied = next.applied(theta)) out.push_back(std::move(*applied));
    }
    return out;
}

inline std::vector<Configuration> expand_pred(const Specification& spec, const Configuration& k,
                                              size_t idx) {
    const ConstraintPtr& c = k.constraints[idx].c;
    if (c->kind != CKind::Pred) return {};
    return expand_pred_with(k, idx, matching_rules(spec, c->pred, c->args));
}

// --- speculative query expansion (Op-Expand-Query) -------------------------------

struct ExpandedQuery {
    Configuration config;
    HoleId hole;
    ScopeId source; // the prepended scope
    ScopeId target; // the chosen s''
};

struct ExpandQueryResult {
    std::vector<ExpandedQuery> branches;
    // Pending (scope, label) pairs that blocked the backward traversal or the
    // query guard: the cross-hole insertion trigger.
    std::set<PotentialEdge> blockers;
};

struct ExpandQueryOptions {
    bool use_backward_search = true; // heuristics off: enumerate all scope pairs
    size_t max_path_len = 0;         // 0 = unbounded
};

// Attempts to prepend a step to the composite path of the hole tied to the
// query's filter variables.  For each admissible source/target pair the
// premise substitution theta1.theta2 is applied configuration-wide, the hole
// path gains the source scope, and the (now ground) query is left in place
// for the plain solver, whose Op-Query premises the expansion premises
// entail.
inline ExpandQueryResult expand_query([[maybe_unused]] const Specification& spec,
                                      const Footprints& fp, const Configuration& k, size_t idx,
                                      const ExpandQueryOptions& opts = {}) {
    ExpandQueryResult result;
    const ConstraintPtr& c = k.constraints[idx].c;
    if (c->kind != CKind::Query) return result;
    const QueryData& q = *c->query;

    // the filter's free variables must map through U to a single hole
    std::set<HoleId> holes;
    for (const auto& v : free_vars(q.filter)) {
        auto it = k.u.find(v);
        if (it != k.u.end()) holes.insert(it->second);
    }
    if (holes.size() != 1) return result;
    HoleId hole = *holes.begin();
    auto hst = k.h.find(hole);
    if (hst == k.h.end() || hst->second.path.empty()) return result;
    ScopeId s_t = hst->second.path.front();

    if (opts.max_path_len && hst->second.path.size() + 1 > opts.max_path_len) return result;

    // candidate targets: equal to the hole's current target, or carrying it
    // in their data
    std::vector<ScopeId> targets;
    for (ScopeId s : k.graph.scopes())
        if (s == s_t || data_contains(k.graph, s, s_t)) targets.push_back(s);

    auto open = potential_edges(fp, k, idx);

    for (ScopeId s2 : targets) {
        std::vector<ScopeId> sources;
        if (opts.use_backward_search) {
            auto back = resolve_backward(k.graph, s2, q.regex, open);
            for (const auto& pe : back.blockers) result.blockers.insert(pe);
            std::set<ScopeId> dedup;
            for (const auto& [s, p] : back.candidates) dedup.insert(s);
            sources.assign(dedup.begin(), dedup.end());
        } else {
            sources.assign(k.graph.scopes().begin(), k.graph.scopes().end());
        }

        for (ScopeId s1 : sources) {
            auto theta1 = unify(q.source, mk_scope(s1));
            if (!theta1) continue;

            ScopeGraph g1 = k.graph;
            g1.apply_subst(*theta1);
            auto filter1 = apply_subst(*theta1, q.filter);
            auto theta2 = eval_filter(g1, filter1, s2);
            if (!theta2) continue;
            Substitution theta = compose(*theta1, *theta2);

            auto applied = k.applied(theta);
            if (!applied) continue; // U[t/x] undefined: inadmissible branch
            Configuration next = std::move(*applied);

            const QueryData& q2 = *next.constraints[idx].c->query;
            if (q2.source->kind != TermKind::Scope || !(q2.source->scope == s1)) continue;
            if (!free_vars(q2.filter).empty()) continue; // filter must be ground now

            auto answers = resolve(next.graph, s1, q2.regex, q2.filter, q2.order);
            bool target_hit = false;
            for (const auto& a : answers)
                if (a.path.target() == s2) target_hit = true;
            if (!target_hit) continue;

            if (!guard_holds(fp, next, s1, q2.regex, idx)) {
                // record the conflicting pending pairs so the branch can park
                auto critical = critical_edges(next.graph, s1, q2.regex);
                for (const auto& pe : potential_edges(fp, next, idx))
                    for (const auto& [s, l] : critical)
                        if (pe.label == l && (!pe.scope || *pe.scope == s))
                            result.blockers.insert(pe);
                continue;
            }

            auto& st = next.h[hole];
            st.path.insert(st.path.begin(), s1);
            st.steps.insert(st.steps.begin(), QueryStep{s1, q2.regex, q2.filter, q2.order, s2});
            result.branches.push_back(ExpandedQuery{std::move(next), hole, s1, s2});
        }
    }
    return result;
}

// --- synthesize pipeline pieces ---------------------------------------------------

struct SynthesisError {
    enum class Kind { TargetNotFound, InitialTypeError, BudgetExhausted, Internal };
    Kind kind;
    std::string message;
};

// Language-front-end handoff: the initial goal constraint, the fresh variable
// standing for each hole, and a ground token locating each hole's target
// declaration inside scope data.
struct SynthesisInput {
    ConstraintPtr goal;
    std::map<HoleId, std::string> hole_vars;
    std::map<HoleId, TermPtr> target_tokens;
};

// The record emitted per hole per accepted configuration.
struct SolutionRecord {
    enum class Origin { Search, CrossHole, Replay };

    HoleId hole;
    TermPtr term;                 // ground reference term
    std::vector<ScopeId> path;    // composite path; tail is the original target
    std::vector<QueryStep> steps; // per-step query evidence
    Configuration final_config;
    Origin origin = Origin::Search;

    int query_steps() const { return static_cast<int>(path.size()) - 1; }
};

inline std::optional<ScopeId> find_target_scope(const ScopeGraph& g, const TermPtr& token) {
    std::optional<ScopeId> found;
    for (const auto& [s, d] : g.data_map()) {
        if (d && contains_subterm(d, token)) {
            if (found) return std::nullopt; // ambiguous; lock keys must be unique
            found = s;
        }
    }
    return found;
}

// Steps (1)-(3) of the synthesize function: solve the initial goal to the
// stuck state and initialize the hole states from the target declarations.
inline std::variant<Configuration, SynthesisError> prepare_initial(const Specification& spec,
                                                                   const Footprints& fp,
                                                                   const SynthesisInput& input) {
    Configuration k0;
    k0.push_back(input.goal);
    for (const auto& [h, var] : input.hole_vars) {
        k0.u[var] = h;
        // the term component rides through the initial solve so substitutions
        // keep it pointing at the live alias of the hole variable
        k0.h[h] = HoleState{{}, {}, mk_var(var)};
    }

    auto solved = solve_exhaustively(spec, fp, std::move(k0));
    if (solved.status == SolveStatus::Failure)
        return SynthesisError{SynthesisError::Kind::InitialTypeError,
                              "initial solving failed: " + solved.fail.reason + " on " +
                                  solved.fail.constraint};
    if (solved.status == SolveStatus::FuelExhausted)
        return SynthesisError{SynthesisError::Kind::Internal, "initial solving ran out of fuel"};

    Configuration k = std::move(solved.config);
    for (const auto& [h, var] : input.hole_vars) {
        auto token = input.target_tokens.find(h);
        if (token == input.target_tokens.end())
            return SynthesisError{SynthesisError::Kind::Internal, "hole without target token"};
        auto target = find_target_scope(k.graph, token->second);
        if (!target)
            return SynthesisError{SynthesisError::Kind::TargetNotFound,
                                  "no declaration scope carries " + to_string(token->second)};
        k.h[h].path = {*target};
    }
    return k;
}

inline std::vector<SolutionRecord> records_from_accepted(const Configuration& k,
                                                         SolutionRecord::Origin origin) {
    std::vector<SolutionRecord> out;
    for (const auto& [hole, st] : k.h) {
        SolutionRecord r;
        r.hole = hole;
        r.term = st.term;
        r.path = st.path;
        r.steps = st.steps;
        r.final_config = k;
        r.origin = origin;
        out.push_back(std::move(r));
    }
    return out;
}

// Re-validates an emitted record: (a) the program with all synthesized hole
// terms substituted re-typechecks, and (b) the recorded composite path
// re-validates step by step against the final graph (CP-Comp; CP-Single for
// the trivial prefix).  False indicates an engine bug.
inline bool check_solution(const Specification& spec, const Footprints& fp,
                           const SynthesisInput& input, const SolutionRecord& record) {
    // (a) well-typedness of the unlocked program
    Substitution theta;
    for (const auto& [h, var] : input.hole_vars) {
        auto st = record.final_config.h.find(h);
        if (st == record.final_config.h.end()) return false;
        if (!st->second.term || !is_ground(st->second.term)) return false;
        theta.terms[var] = st->second.term;
    }
    Configuration recheck;
    recheck.push_back(apply_subst(theta, input.goal));
    auto solved = solve_exhaustively(spec, fp, std::move(recheck));
    if (solved.status != SolveStatus::Success) return false;

    // (b) composite path validation against the final configuration's graph
    if (!record.term || !is_ground(record.term)) return false;
    if (record.path.empty()) return false;
    if (record.steps.size() + 1 != record.path.size()) return false;

    auto token = input.target_tokens.find(record.hole);
    if (token == input.target_tokens.end()) return false;
    auto target = find_target_scope(record.final_config.graph, token->second);
    if (!target || !(record.path.back() == *target)) return false;

    const ScopeGraph& g = record.final_config.graph;
    for (size_t i = 0; i < record.steps.size(); ++i) {
        const QueryStep& st = record.steps[i];
        if (!(st.source == record.path[i])) return false;
        if (!g.has_scope(st.target)) return false;
        bool ok = false;
        for (const auto& a : resolve(g, st.source, st.regex, st.filter, st.order)) {
            if (!(a.path.target() == st.target)) continue;
            ScopeId next = record.path[i + 1];
            if (st.target == next || data_contains(g, st.target, next)) {
                ok = true;
                break;
            }
        }
        if (!ok) return false;
    }
    return true;
}

} // namespace refsynth
