#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "refsynth/refsynth.hpp"

using namespace refsynth;

namespace {

struct Problem {
    Specification spec;
    Footprints fp;
    std::set<std::string> leading;
    lm::GenResult gen;
    SynthesisInput input;
    Configuration initial;
};

Problem make_problem(const std::string& source,
                     const std::string& spec_path = oracles::lm_spec_path()) {
    Problem p{oracles::load_spec_file(spec_path), {}, {}, {}, {}, {}};
    p.fp = compute_footprints(p.spec);
    p.leading = query_leading_preds(p.spec);
    auto parsed = lm::parse_lm(source);
    REQUIRE(std::holds_alternative<lm::LmProgram>(parsed));
    p.gen = lm::gen_constraint(std::get<lm::LmProgram>(parsed), p.spec.initial_predicate);
    p.input = p.gen.input();
    auto prep = prepare_initial(p.spec, p.fp, p.input);
    REQUIRE(std::holds_alternative<Configuration>(prep));
    p.initial = std::get<Configuration>(prep);
    return p;
}

std::set<std::string> terms_of(const std::vector<SolutionRecord>& records, int hole) {
    std::set<std::string> out;
    for (const auto& r : records)
        if (r.hole.value == hole) out.insert(to_string(r.term));
    return out;
}

std::set<std::string> pretty_of(const std::vector<SolutionRecord>& records, int hole) {
    std::set<std::string> out;
    for (const auto& r : records)
        if (r.hole.value == hole) {
            auto s = lm::pretty_ref(r.term);
            REQUIRE(s);
            out.insert(*s);
        }
    return out;
}

// the four-constraint state of the cross-hole example: expand the var hole's
// typeOfExpr with T-QRef, then solve as far as possible
Configuration cross_hole_state(const Problem& p) {
    Configuration k = p.initial;
    size_t idx = 0;
    bool found = false;
    for (size_t i = 0; i < k.constraints.size(); ++i)
        if (k.constraints[i].c->kind == CKind::Pred && k.constraints[i].c->pred == "typeOfExpr") {
            idx = i;
            found = true;
        }
    REQUIRE(found);
    auto rules = matching_rules(p.spec, "typeOfExpr", k.constraints[idx].c->args);
    REQUIRE(rules.size() == 4);
    auto branches = expand_pred_with(k, idx, {rules[3]}); // T-QRef
    REQUIRE(branches.size() == 1);
    auto solved = solve_exhaustively(p.spec, p.fp, branches[0]);
    REQUIRE(solved.status == SolveStatus::Stuck);
    REQUIRE(solved.config.constraints.size() == 4);
    return solved.config;
}

} // namespace

TEST_CASE("query-leading predicate analysis on LM", "[heuristics]") {
    auto p = make_problem("var a = 1");
    CHECK(p.leading.count("scopeOfMod") == 1);
    CHECK(p.leading.count("typeOfExpr") == 1);
    CHECK(p.leading.count("importOk") == 1);
    CHECK(p.leading.count("memberOk") == 1);
}

TEST_CASE("select_constraint prefers queries tied to the focus hole", "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::corpus_path("02_import_and_var.lm")));
    Configuration k = cross_hole_state(p);
    HoleId import_hole{0}, var_hole{1};

    auto for_var = select_constraint(p.leading, k, var_hole);
    REQUIRE(for_var);
    CHECK(k.constraints[*for_var].c->kind == CKind::Query);

    auto for_import = select_constraint(p.leading, k, import_hole);
    REQUIRE(for_import);
    CHECK(k.constraints[*for_import].c->kind == CKind::Pred);
    CHECK(k.constraints[*for_import].c->pred == "scopeOfMod");

    SECTION("age breaks ties: the import's scopeOfMod is older") {
        // both scopeOfMod constraints rank equally for a shared-hole view;
        // with the var focus removed, the older one wins
        auto fallback = select_constraint(p.leading, k, HoleId{42}, /*focus_only=*/false);
        REQUIRE(fallback);
        CHECK(k.constraints[*fallback].c->kind == CKind::Query); // queries still first
    }
    SECTION("no focus-related constraint means none") {
        CHECK_FALSE(select_constraint(p.leading, k, HoleId{42}).has_value());
    }
}

TEST_CASE("order_rule_candidates puts S-Mod before S-QMod and drops nothing", "[heuristics]") {
    auto p = make_problem("var a = 1");
    std::vector<Rule> rules;
    for (const auto& r : p.spec.rules)
        if (r.head_symbol == "scopeOfMod") rules.push_back(r);
    std::reverse(rules.begin(), rules.end()); // start from the wrong order
    auto ordered = order_rule_candidates(p.leading, rules);
    REQUIRE(ordered.size() == 2);
    CHECK(ordered[0].name == "S-Mod");
    CHECK(ordered[1].name == "S-QMod");

    SECTION("single candidate unchanged") {
        auto one = order_rule_candidates(p.leading, std::vector<Rule>{rules[0]});
        REQUIRE(one.size() == 1);
        CHECK(one[0].name == rules[0].name);
    }
    SECTION("ties preserve input order (stable sort, permutation only)") {
        std::vector<Rule> same;
        for (const auto& r : p.spec.rules)
            if (r.head_symbol == "membersOk") same.push_back(r);
        auto kept = order_rule_candidates(p.leading, same);
        std::multiset<std::string> in, out;
        for (const auto& r : same) in.insert(r.name);
        for (const auto& r : kept) out.insert(r.name);
        CHECK(in == out);
    }
}

TEST_CASE("run_search finds both worked-example solutions breadth-first", "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::corpus_path("01_member_ref.lm")));
    SearchBudget budget;
    budget.max_solutions_per_hole = 4;
    budget.max_expansion_depth = 4;
    std::vector<SolutionRecord> records;
    auto outcome = run_search(p.spec, p.fp, p.initial, budget, SearchOptions{},
                              [&](const SolutionRecord& r) { records.push_back(r); });
    REQUIRE(records.size() == 2);
    CHECK(to_string(records[0].term) == "name(y)"); // fewer query steps first
    CHECK(to_string(records[1].term) == "qual(name(A), y)");
    CHECK(outcome.complete);
}

TEST_CASE("an unsatisfiable hole yields an empty stream", "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::fixture_path("unsat_shadowed.lm")));
    SearchBudget budget;
    budget.max_solutions_per_hole = 2;
    budget.max_expansion_depth = 2;
    auto outcome = synthesize(p.spec, p.fp, p.input, budget);
    CHECK(terms_of(outcome.records, 0).empty());
}

TEST_CASE("a zero expansion depth exhausts the budget with no solutions", "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::corpus_path("01_member_ref.lm")));
    SearchBudget budget;
    budget.max_expansion_depth = 0;
    std::vector<SolutionRecord> records;
    auto outcome = run_search(p.spec, p.fp, p.initial, budget, SearchOptions{},
                              [&](const SolutionRecord& r) { records.push_back(r); });
    CHECK(records.empty());
    CHECK(outcome.budget_exhausted);
}

TEST_CASE("cross-hole insertion unblocks the import-dependent solution", "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::corpus_path("02_import_and_var.lm")));
    HoleId import_hole{0}, var_hole{1};

    // focus the var hole and take the T-Var fork: its query is blocked by the
    // pending import edge
    Configuration k = p.initial;
    size_t idx = 0;
    for (size_t i = 0; i < k.constraints.size(); ++i)
        if (k.constraints[i].c->kind == CKind::Pred && k.constraints[i].c->pred == "typeOfExpr")
            idx = i;
    auto rules = matching_rules(p.spec, "typeOfExpr", k.constraints[idx].c->args);
    auto tvar = expand_pred_with(k, idx, {rules[2]});
    REQUIRE(tvar.size() == 1);
    auto solved = solve_exhaustively(p.spec, p.fp, tvar[0]);
    REQUIRE(solved.status == SolveStatus::Stuck);
    Configuration blocked_config = solved.config;

    size_t qidx = 0;
    for (size_t i = 0; i < blocked_config.constraints.size(); ++i)
        if (blocked_config.constraints[i].c->kind == CKind::Query) qidx = i;
    auto r = expand_query(p.spec, p.fp, blocked_config, qidx);
    CHECK(r.branches.empty());
    REQUIRE_FALSE(r.blockers.empty());

    auto sB = find_target_scope(blocked_config.graph, *parse_term("occ(B, 1)"));
    REQUIRE(sB);
    CHECK(r.blockers.count({*sB, Label{"IMP"}}) == 1);

    // the responsible constraint shares ?s1 with the import's scopeOfMod
    auto waiting = holes_for_blockers(p.fp, blocked_config, r.blockers);
    CHECK(waiting.count(import_hole) == 1);

    // obtain a real donor for the import hole from a full search
    SearchBudget budget;
    budget.max_solutions_per_hole = 2;
    auto full = synthesize(p.spec, p.fp, p.input, budget);
    DonorSolution donor;
    bool have_donor = false;
    for (const auto& rec : full.records)
        if (rec.hole == import_hole && !have_donor) {
            donor = DonorSolution{rec.term, rec.path, rec.steps};
            have_donor = true;
        }
    REQUIRE(have_donor);
    CHECK(to_string(donor.term) == "name(A)");

    SearchBranch blocked;
    blocked.config = blocked_config;
    blocked.focus = var_hole;
    uint64_t next_id = 100;
    auto resumed =
        insert_cross_hole_solutions(blocked, {{import_hole, {donor}}}, next_id);
    REQUIRE(resumed.size() == 1);

    auto after = solve_exhaustively(p.spec, p.fp, resumed[0].config);
    REQUIRE(after.status == SolveStatus::Stuck); // the var query is expandable now
    size_t qidx2 = 0;
    for (size_t i = 0; i < after.config.constraints.size(); ++i)
        if (after.config.constraints[i].c->kind == CKind::Query) qidx2 = i;
    auto r2 = expand_query(p.spec, p.fp, after.config, qidx2);
    REQUIRE_FALSE(r2.branches.empty());
    auto finished = solve_exhaustively(p.spec, p.fp, r2.branches[0].config);
    REQUIRE(finished.status == SolveStatus::Success);
    CHECK(is_accepting(finished.config));
    CHECK(to_string(finished.config.h.at(var_hole).term) == "name(x)");

    SECTION("a donor producing a dead branch is discarded by solving") {
        DonorSolution bogus{*parse_term("name(B)"), donor.path, donor.steps};
        auto resumed2 =
            insert_cross_hole_solutions(blocked, {{import_hole, {bogus}}}, next_id);
        REQUIRE(resumed2.size() == 1);
        auto after2 = solve_exhaustively(p.spec, p.fp, resumed2[0].config);
        // the self-import resolves, but the var query then has no answers
        bool dead = after2.status == SolveStatus::Failure;
        if (!dead) {
            size_t qi = 0;
            bool has_q = false;
            for (size_t i = 0; i < after2.config.constraints.size(); ++i)
                if (after2.config.constraints[i].c->kind == CKind::Query) {
                    qi = i;
                    has_q = true;
                }
            dead = !has_q || expand_query(p.spec, p.fp, after2.config, qi).branches.empty();
        }
        CHECK(dead);
    }
}

TEST_CASE("full search on the cross-hole example emits all expected solutions",
          "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::corpus_path("02_import_and_var.lm")));
    SearchBudget budget;
    budget.max_solutions_per_hole = 3;
    auto outcome = synthesize(p.spec, p.fp, p.input, budget);
    CHECK(pretty_of(outcome.records, 0) == std::set<std::string>{"A"});
    CHECK(pretty_of(outcome.records, 1) == std::set<std::string>{"x", "A.x"});
    CHECK(outcome.stats.parks >= 1);
}

TEST_CASE("recursion detection freezes the recursive state and replays solutions",
          "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::fixture_path("recmod_self.lm")),
                          oracles::recmod_spec_path());
    SearchBudget budget;
    budget.max_solutions_per_hole = 3;
    budget.max_expansion_depth = 3;
    auto outcome = synthesize(p.spec, p.fp, p.input, budget);
    CHECK(pretty_of(outcome.records, 0) == std::set<std::string>{"x", "A.x", "A.A.x"});
    CHECK(outcome.stats.freezes >= 1);
    CHECK(outcome.stats.replays >= 1);
    bool replay_seen = false;
    for (const auto& r : outcome.records)
        if (r.origin == SolutionRecord::Origin::Replay) {
            replay_seen = true;
            CHECK(to_string(r.term) == "qual(qual(name(A), A), x)");
            CHECK(check_solution(p.spec, p.fp, p.input, r));
        }
    CHECK(replay_seen);
}

TEST_CASE("recursion capped deeper keeps terminating and streams the family",
          "[heuristics]") {
    auto p = make_problem(oracles::read_file(oracles::fixture_path("recmod_self.lm")),
                          oracles::recmod_spec_path());
    SearchBudget budget;
    budget.max_solutions_per_hole = 10;
    budget.max_expansion_depth = 6;
    auto outcome = synthesize(p.spec, p.fp, p.input, budget);
    CHECK(terms_of(outcome.records, 0).size() == 6); // x, A.x, ..., A.A.A.A.A.x
}

TEST_CASE("detect_recursion checks all three pairing conditions", "[heuristics]") {
    Configuration k;
    auto s1 = k.graph.add_scope(mk_atom("d1"));
    auto s2 = k.graph.add_scope(mk_atom("d2"));
    k.push_back(mk_pred("p", {mk_var("a")}));
    k.h[HoleId{0}] = HoleState{{s1}, {}, mk_app("qual", {mk_var("a"), mk_atom("x")})};

    auto canon = canon_graph_constraints(k);
    BaseStateEntry base;
    base.branch_id = 1;
    base.hole = HoleId{0};
    base.sig = canon.sig;
    base.varmap = canon.varmap;
    base.term = mk_app("qual", {mk_var("a"), mk_atom("x")});
    base.target = s1;
    base.path = {s1};

    SearchBranch cand;
    cand.config = k;
    cand.focus = HoleId{0};
    cand.id = 2;

    SECTION("same target, alpha-equivalent, instantiating term: witness") {
        auto w = detect_recursion({base}, cand, canon);
        REQUIRE(w.has_value());
        CHECK(w->hole == HoleId{0});
        CHECK(w->base_to_rec.at("a") == "a");
    }
    SECTION("different target scope: no witness") {
        auto base2 = base;
        base2.target = s2;
        CHECK_FALSE(detect_recursion({base2}, cand, canon).has_value());
    }
    SECTION("non-instantiating hole term: no witness") {
        auto base2 = base;
        base2.term = mk_app("other", {mk_var("a")});
        CHECK_FALSE(detect_recursion({base2}, cand, canon).has_value());
    }
    SECTION("different constraints: no witness") {
        auto base2 = base;
        base2.sig = "different";
        CHECK_FALSE(detect_recursion({base2}, cand, canon).has_value());
    }
}

TEST_CASE("heuristics on and off agree on solution sets", "[heuristics]") {
    for (const char* file : {"01_member_ref.lm", "02_import_and_var.lm", "13_shadow_local.lm"}) {
        auto p = make_problem(oracles::read_file(oracles::corpus_path(file)));
        SearchBudget budget;
        budget.max_solutions_per_hole = 8;
        budget.max_expansion_depth = 2;
        auto on = synthesize(p.spec, p.fp, p.input, budget, SearchOptions{true});
        auto off = synthesize(p.spec, p.fp, p.input, budget, SearchOptions{false});
        for (const auto& [h, var] : p.input.hole_vars) {
            INFO(file << " hole " << h.value);
            CHECK(terms_of(on.records, h.value) == terms_of(off.records, h.value));
        }
    }
}

TEST_CASE("fairness: strata advance breadth-first", "[heuristics]") {
    // depth-1 solutions always arrive before depth-2 ones for the same hole
    auto p = make_problem(oracles::read_file(oracles::corpus_path("13_shadow_local.lm")));
    SearchBudget budget;
    budget.max_solutions_per_hole = 4;
    std::vector<int> steps_in_order;
    run_search(p.spec, p.fp, p.initial, budget, SearchOptions{},
               [&](const SolutionRecord& r) { steps_in_order.push_back(r.query_steps()); });
    for (size_t i = 1; i < steps_in_order.size(); ++i)
        CHECK(steps_in_order[i - 1] <= steps_in_order[i]);
}
