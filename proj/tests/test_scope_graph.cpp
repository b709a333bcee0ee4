#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "refsynth/refsynth.hpp"

using namespace refsynth;

namespace {

RegexPtr re(const std::string& text) { return *parse_regex(text); }

// isVar(x): lambda d. exists k T. dataOf(d, vdecl(occ(x, k), T))
DataFilter var_filter(const TermPtr& name) {
    auto pat = mk_app("vdecl", {mk_app("occ", {name, mk_var("k")}), mk_var("T")});
    return DataFilter{"d", mk_eexists("k", mk_eexists("T", mk_dataof(mk_var("d"), pat)))};
}

DataFilter mod_filter(const TermPtr& name) {
    auto pat = mk_app("mdecl", {mk_app("occ", {name, mk_var("k")})});
    return DataFilter{"d", mk_eexists("k", mk_dataof(mk_var("d"), pat))};
}

LabelOrder vis_order() {
    LabelOrder o;
    o.prefers = {{"VAR", "IMP"}, {"IMP", "LEX"}};
    REQUIRE(o.close());
    return o;
}

struct TwoModules {
    ScopeGraph g;
    ScopeId s0, sx1, sA, sx2, sB, sy;
};

TwoModules two_modules_graph() {
    TwoModules f;
    f.s0 = f.g.add_scope(mk_atom("root"), "s0");
    f.sx1 = f.g.add_scope(*parse_term("vdecl(occ(x, 1), int)"), "sx1");
    f.sA = f.g.add_scope(*parse_term("mdecl(occ(A, 1))"), "sA");
    f.sx2 = f.g.add_scope(*parse_term("vdecl(occ(x, 2), int)"), "sx2");
    f.sB = f.g.add_scope(*parse_term("mdecl(occ(B, 1))"), "sB");
    f.sy = f.g.add_scope(*parse_term("vdecl(occ(y, 1), int)"), "sy");
    f.g.add_edge(f.s0, Label{"VAR"}, f.sx1);
    f.g.add_edge(f.s0, Label{"MOD"}, f.sA);
    f.g.add_edge(f.sA, Label{"LEX"}, f.s0);
    f.g.add_edge(f.sA, Label{"VAR"}, f.sx2);
    f.g.add_edge(f.s0, Label{"MOD"}, f.sB);
    f.g.add_edge(f.sB, Label{"LEX"}, f.s0);
    f.g.add_edge(f.sB, Label{"VAR"}, f.sy);
    f.g.add_edge(f.sB, Label{"IMP"}, f.sA);
    return f;
}

struct PendingImport {
    ScopeGraph g;
    ScopeId s0, sA, sx, sB, sy;
};

// the shadowing example graph minus the import: the IMP edge from sB is
// still pending
PendingImport pending_import_graph() {
    PendingImport f;
    f.s0 = f.g.add_scope(mk_atom("root"), "s0");
    f.sA = f.g.add_scope(*parse_term("mdecl(occ(A, 1))"), "sA");
    f.sx = f.g.add_scope(*parse_term("vdecl(occ(x, 1), int)"), "sx");
    f.sB = f.g.add_scope(*parse_term("mdecl(occ(B, 1))"), "sB");
    f.sy = f.g.add_scope(mk_app("vdecl", {*parse_term("occ(y, 1)"), mk_var("Ty")}), "sy");
    f.g.add_edge(f.s0, Label{"MOD"}, f.sA);
    f.g.add_edge(f.sA, Label{"LEX"}, f.s0);
    f.g.add_edge(f.sA, Label{"VAR"}, f.sx);
    f.g.add_edge(f.s0, Label{"MOD"}, f.sB);
    f.g.add_edge(f.sB, Label{"LEX"}, f.s0);
    f.g.add_edge(f.sB, Label{"VAR"}, f.sy);
    return f;
}

} // namespace

TEST_CASE("add_scope and add_edge basics", "[scope-graph]") {
    ScopeGraph g;
    auto s1 = g.add_scope(*parse_term("decl(x)"));
    auto s2 = g.add_scope(*parse_term("decl(y)"));
    CHECK(s1 != s2);
    CHECK(term_eq(g.data(s1), *parse_term("decl(x)")));

    CHECK_FALSE(g.add_edge(s1, Label{"VAR"}, s2).has_value());
    CHECK_FALSE(g.add_edge(s1, Label{"VAR"}, s2).has_value()); // duplicate is idempotent
    CHECK(g.edges().size() == 1);

    auto err = g.add_edge(s1, Label{"VAR"}, ScopeId{99});
    REQUIRE(err.has_value());
    CHECK(err->scope == ScopeId{99});
}

TEST_CASE("two-modules graph: visibility picks the import path", "[scope-graph]") {
    auto f = two_modules_graph();
    auto results = resolve(f.g, f.sB, re("LEX* IMP? VAR"), var_filter(mk_atom("x")), vis_order());
    REQUIRE(results.size() == 1);
    CHECK(results[0].path.target() == f.sx2);
    REQUIRE(results[0].path.steps.size() == 2);
    CHECK(results[0].path.steps[0].first == Label{"IMP"});
    CHECK(results[0].path.steps[1].first == Label{"VAR"});

    SECTION("without the order both declarations are reachable") {
        auto both = resolve(f.g, f.sB, re("LEX* IMP? VAR"), var_filter(mk_atom("x")), LabelOrder{});
        REQUIRE(both.size() == 2);
        std::set<uint32_t> targets{both[0].path.target().value, both[1].path.target().value};
        CHECK(targets == std::set<uint32_t>{f.sx1.value, f.sx2.value});
    }
}

TEST_CASE("resolve on an empty-edge source returns nothing", "[scope-graph]") {
    ScopeGraph g;
    auto s = g.add_scope(mk_atom("root"));
    CHECK(resolve(g, s, re("VAR"), var_filter(mk_atom("x")), LabelOrder{}).empty());
}

TEST_CASE("resolve with a free filter variable returns the witness", "[scope-graph]") {
    auto f = pending_import_graph();
    auto results = resolve(f.g, f.sA, re("VAR"), var_filter(mk_var("xq")), LabelOrder{});
    REQUIRE(results.size() == 1);
    CHECK(results[0].path.target() == f.sx);
    CHECK(term_eq(apply_subst(results[0].subst, mk_var("xq")), mk_atom("x")));
}

TEST_CASE("backward traversal finds candidate sources", "[scope-graph]") {
    auto f = pending_import_graph();
    SECTION("single VAR step") {
        auto r = resolve_backward(f.g, f.sx, re("VAR"), {});
        REQUIRE(r.candidates.size() == 1);
        CHECK(r.candidates[0].first == f.sA);
        CHECK(r.candidates[0].second.source == f.sA);
        CHECK(r.candidates[0].second.target() == f.sx);
        CHECK(r.blockers.empty());
    }
    SECTION("no incoming edges") {
        auto r = resolve_backward(f.g, f.s0, re("LEX* VAR"), {});
        bool has_nonempty = false;
        for (auto& [s, p] : r.candidates)
            if (!p.steps.empty()) has_nonempty = true;
        CHECK_FALSE(has_nonempty);
    }
    SECTION("pending import blocks the traversal") {
        std::set<PotentialEdge> open{{f.sB, Label{"IMP"}}};
        auto r = resolve_backward(f.g, f.sx, re("LEX* IMP? VAR"), open);
        CHECK(r.blockers.count({f.sB, Label{"IMP"}}) == 1);
        // the unblocked candidate is still reported
        bool has_sA = false;
        for (auto& [s, p] : r.candidates)
            if (s == f.sA) has_sA = true;
        CHECK(has_sA);
    }
}

TEST_CASE("backward candidates are forward-sound", "[scope-graph][property]") {
    oracles::Rng rng(808);
    const std::vector<Label> alphabet{{"LEX"}, {"VAR"}, {"MOD"}, {"IMP"}};
    for (int i = 0; i < 150; ++i) {
        auto rc = oracles::random_graph(rng, alphabet);
        auto r = oracles::random_regex(rng, alphabet, 2);
        auto target = rc.scopes[static_cast<size_t>(rng.below(static_cast<int>(rc.scopes.size())))];
        auto back = resolve_backward(rc.graph, target, r, {});
        for (const auto& [src, path] : back.candidates) {
            CHECK(path.source == src);
            CHECK(path.target() == target);
            CHECK(oracles::word_matches(r, path.word()));
            ScopeId cur = path.source;
            for (const auto& [l, next] : path.steps) {
                CHECK(rc.graph.edges().count(ScopeGraph::Edge{cur, l, next}) == 1);
                cur = next;
            }
        }
    }
}

TEST_CASE("data_contains finds scope references in data", "[scope-graph]") {
    ScopeGraph g;
    auto s2 = g.add_scope(mk_atom("leaf"));
    auto s3 = g.add_scope(mk_atom("leaf"));
    auto s4 = g.add_scope(mk_atom("leaf"));
    auto s = g.add_scope(mk_app("decl", {mk_atom("x"), mk_scope(s2)}));
    CHECK(data_contains(g, s, s2));
    auto plain = g.add_scope(mk_atom("int"));
    CHECK_FALSE(data_contains(g, plain, s2));
    auto nested = g.add_scope(mk_app("pair", {mk_app("f", {mk_scope(s3)}), mk_scope(s4)}));
    CHECK(data_contains(g, nested, s3));
    CHECK(data_contains(g, nested, s4));
    CHECK_FALSE(data_contains(g, nested, s2));
}

TEST_CASE("resolve matches the brute-force oracle on random graphs", "[scope-graph][property]") {
    oracles::Rng rng(2024);
    const std::vector<Label> alphabet{{"LEX"}, {"VAR"}, {"MOD"}, {"IMP"}};
    const std::vector<LabelOrder> orders = [] {
        LabelOrder vis;
        vis.prefers = {{"VAR", "IMP"}, {"IMP", "LEX"}};
        vis.close();
        LabelOrder modlex;
        modlex.prefers = {{"MOD", "LEX"}};
        modlex.close();
        return std::vector<LabelOrder>{LabelOrder{}, vis, modlex};
    }();
    static const char* names[] = {"a", "b", "c"};
    for (int i = 0; i < 300; ++i) {
        auto rc = oracles::random_graph(rng, alphabet);
        auto r = oracles::random_regex(rng, alphabet, 2);
        auto src = rc.scopes[static_cast<size_t>(rng.below(static_cast<int>(rc.scopes.size())))];
        auto filter = oracles::name_filter(names[rng.below(3)]);
        const auto& order = orders[static_cast<size_t>(rng.below(3))];

        auto got = resolve(rc.graph, src, r, filter, order);
        auto expected = oracles::oracle_resolve(rc.graph, src, r, filter, order);
        REQUIRE(got.size() == expected.size());
        for (size_t j = 0; j < got.size(); ++j) CHECK(got[j].path == expected[j]);
    }
}

TEST_CASE("visibility filtering only removes paths", "[scope-graph][property]") {
    oracles::Rng rng(2025);
    const std::vector<Label> alphabet{{"LEX"}, {"VAR"}, {"MOD"}, {"IMP"}};
    LabelOrder vis;
    vis.prefers = {{"VAR", "IMP"}, {"IMP", "LEX"}};
    vis.close();
    for (int i = 0; i < 100; ++i) {
        auto rc = oracles::random_graph(rng, alphabet);
        auto r = oracles::random_regex(rng, alphabet, 2);
        auto src = rc.scopes[static_cast<size_t>(rng.below(static_cast<int>(rc.scopes.size())))];
        auto filter = oracles::name_filter("a");
        auto with = resolve(rc.graph, src, r, filter, vis);
        auto without = resolve(rc.graph, src, r, filter, LabelOrder{});
        std::set<ResolutionPath> reachable;
        for (const auto& rp : without) reachable.insert(rp.path);
        for (const auto& rp : with) CHECK(reachable.count(rp.path) == 1);
        CHECK(with.size() <= without.size());
    }
}

TEST_CASE("adding an edge never removes a reachable path", "[scope-graph][property]") {
    oracles::Rng rng(2026);
    const std::vector<Label> alphabet{{"LEX"}, {"VAR"}, {"MOD"}, {"IMP"}};
    for (int i = 0; i < 80; ++i) {
        auto rc = oracles::random_graph(rng, alphabet);
        auto r = oracles::random_regex(rng, alphabet, 2);
        auto src = rc.scopes[static_cast<size_t>(rng.below(static_cast<int>(rc.scopes.size())))];
        auto filter = oracles::name_filter("a");
        auto before = resolve(rc.graph, src, r, filter, LabelOrder{});
        auto g2 = rc.graph;
        int n = static_cast<int>(rc.scopes.size());
        g2.add_edge(rc.scopes[static_cast<size_t>(rng.below(n))],
                    alphabet[static_cast<size_t>(rng.below(4))],
                    rc.scopes[static_cast<size_t>(rng.below(n))]);
        auto after = resolve(g2, src, r, filter, LabelOrder{});
        std::set<ResolutionPath> after_set;
        for (const auto& rp : after) after_set.insert(rp.path);
        for (const auto& rp : before) CHECK(after_set.count(rp.path) == 1);
    }
}

TEST_CASE("end-of-path participates in visibility as the $ label", "[scope-graph]") {
    // s0 carries matching data itself and also reaches a matching declaration:
    // with $ preferred over VAR the empty path shadows the longer one
    ScopeGraph g;
    auto s0 = g.add_scope(*parse_term("decl(a)"));
    auto s1 = g.add_scope(*parse_term("decl(a)"));
    g.add_edge(s0, Label{"VAR"}, s1);
    auto filter = oracles::name_filter("a");
    auto regex = *parse_regex("VAR?");

    auto open = resolve(g, s0, regex, filter, LabelOrder{});
    CHECK(open.size() == 2); // incomparable by default

    LabelOrder end_wins;
    end_wins.prefers = {{"$", "VAR"}};
    REQUIRE(end_wins.close());
    auto shadowed = resolve(g, s0, regex, filter, end_wins);
    REQUIRE(shadowed.size() == 1);
    CHECK(shadowed[0].path.target() == s0);

    LabelOrder steps_win;
    steps_win.prefers = {{"VAR", "$"}};
    REQUIRE(steps_win.close());
    auto longer = resolve(g, s0, regex, filter, steps_win);
    REQUIRE(longer.size() == 1);
    CHECK(longer[0].path.target() == s1);
}

TEST_CASE("DOT export is deterministic and lists every scope", "[scope-graph]") {
    auto f = two_modules_graph();
    auto dot1 = to_dot(f.g);
    auto dot2 = to_dot(f.g);
    CHECK(dot1 == dot2);
    for (uint32_t v = 0; v < 6; ++v)
        CHECK(dot1.find("s" + std::to_string(v) + " [label=") != std::string::npos);
    CHECK(dot1.find("label=\"IMP\"") != std::string::npos);
}

TEST_CASE("eval_eq covers the equality constraint forms", "[constraints]") {
    ScopeGraph g;
    auto s1 = g.add_scope(*parse_term("decl(x, int)"));

    SECTION("dataOf unifies scope data with a pattern") {
        auto e = mk_dataof(mk_scope(s1), *parse_term("decl(?n, ?T)"));
        auto r = eval_eq(g, e);
        REQUIRE(std::holds_alternative<Substitution>(r));
        auto theta = std::get<Substitution>(r);
        CHECK(term_eq(apply_subst(theta, mk_var("n")), mk_atom("x")));
        CHECK(term_eq(apply_subst(theta, mk_var("T")), mk_atom("int")));
    }
    SECTION("reflexive equality is the empty unifier") {
        auto r = eval_eq(g, mk_eq(mk_var("a"), mk_var("a")));
        REQUIRE(std::holds_alternative<Substitution>(r));
        CHECK(std::get<Substitution>(r).empty());
    }
    SECTION("conjunction threads left to right") {
        // (x() = ?v) * dataOf($s, decl(?v, ?T)) -- the composed binding makes
        // the dataOf clash, since rho(s) binds ?v to the atom x, not x()
        auto e = mk_econj(mk_eq(*parse_term("x(arg)"), mk_var("v")),
                          mk_dataof(mk_scope(s1), *parse_term("decl(?v, ?T)")));
        auto r = eval_eq(g, e);
        CHECK(std::holds_alternative<EqFailure>(r));

        auto ok = mk_econj(mk_eq(mk_atom("x"), mk_var("v")),
                           mk_dataof(mk_scope(s1), *parse_term("decl(?v, ?T)")));
        auto r2 = eval_eq(g, ok);
        REQUIRE(std::holds_alternative<Substitution>(r2));
        CHECK(term_eq(apply_subst(std::get<Substitution>(r2), mk_var("T")), mk_atom("int")));
        // compare against simultaneous unification: same outcome here
        auto sim = unify(*parse_term("pair(x, decl(x, ?T))"),
                         *parse_term("pair(?v, decl(?v, ?T))"));
        CHECK(sim.has_value());
    }
    SECTION("dataOf on a non-ground scope is NotGround") {
        auto r = eval_eq(g, mk_dataof(mk_var("s"), mk_atom("d")));
        REQUIRE(std::holds_alternative<EqFailure>(r));
        CHECK(std::get<EqFailure>(r).kind == EqFailure::Kind::NotGround);
    }
    SECTION("exists freshens its binder") {
        auto e = mk_eexists("t", mk_eq(mk_var("t"), mk_atom("int")));
        auto r = eval_eq(g, e);
        REQUIRE(std::holds_alternative<Substitution>(r));
        // the outer name t is untouched
        CHECK(std::get<Substitution>(r).terms.count("t") == 0);
    }
}
