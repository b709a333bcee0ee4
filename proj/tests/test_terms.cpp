#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "refsynth/refsynth.hpp"

using namespace refsynth;

namespace {

TermPtr t(const std::string& text) {
    auto parsed = parse_term(text);
    REQUIRE(parsed.has_value());
    return *parsed;
}

Substitution bind1(const std::string& v, const TermPtr& to) {
    Substitution s;
    s.terms[v] = to;
    return s;
}

} // namespace

TEST_CASE("apply replaces domain variables", "[terms]") {
    auto s = bind1("x", t("g"));
    CHECK(term_eq(apply_subst(s, t("f(?x)")), t("f(g)")));
    CHECK(term_eq(apply_subst(Substitution{}, t("f(?x)")), t("f(?x)")));
}

TEST_CASE("apply resolves triangular substitutions to fixpoint", "[terms]") {
    Substitution s;
    s.terms["x"] = t("?y");
    s.terms["y"] = t("g");
    auto direct = apply_subst(s, t("?x"));
    auto naive = oracles::fixpoint_apply(s, t("?x"));
    CHECK(term_eq(direct, t("g")));
    CHECK(term_eq(direct, naive));
}

TEST_CASE("mgu basic cases", "[terms]") {
    SECTION("binds a variable") {
        auto theta = unify(t("f(?x)"), t("f(g)"));
        REQUIRE(theta);
        CHECK(term_eq(apply_subst(*theta, t("?x")), t("g")));
    }
    SECTION("identity on identical variables") {
        auto theta = unify(t("?x"), t("?x"));
        REQUIRE(theta);
        CHECK(theta->empty());
    }
    SECTION("constructor clash fails") { CHECK_FALSE(unify(t("f(?x)"), t("g(?y)"))); }
    SECTION("occurs check fails") { CHECK_FALSE(unify(t("?x"), t("f(?x)"))); }
    SECTION("arity clash fails") { CHECK_FALSE(unify(t("f(?x)"), t("f(?x, ?y)"))); }
}

TEST_CASE("compose satisfies the sequencing equation", "[terms]") {
    SECTION("worked example") {
        auto first = bind1("x", t("?y"));
        auto second = bind1("y", t("g"));
        auto c = compose(first, second);
        CHECK(term_eq(apply_subst(c, t("?x")), t("g")));
        CHECK(term_eq(apply_subst(c, t("?y")), t("g")));
    }
    SECTION("left identity") {
        auto theta = bind1("x", t("f(a, b)"));
        auto c = compose(Substitution{}, theta);
        CHECK(term_eq(apply_subst(c, t("?x")), t("f(a, b)")));
    }
    SECTION("random terms") {
        oracles::Rng rng(31337);
        for (int i = 0; i < 200; ++i) {
            auto first = bind1("x", t("f(?z)"));
            // acyclic by construction: substitutions stay occurs-check clean
            auto second = bind1("z", oracles::random_term(rng, 2, /*allow_vars=*/false));
            auto c = compose(first, second);
            auto probe = oracles::random_term(rng, 3);
            CHECK(term_eq(apply_subst(c, probe), apply_subst(second, apply_subst(first, probe))));
        }
    }
}

TEST_CASE("fresh variables are globally distinct", "[terms]") {
    auto a = fresh_var("s");
    auto b = fresh_var("s");
    CHECK(a->name != b->name);
    CHECK(a->name.rfind("s$", 0) == 0);
}

TEST_CASE("freshness survives configuration forking", "[terms]") {
    Configuration k;
    k.push_back(mk_emp());
    Configuration fork1 = k;
    Configuration fork2 = k;
    (void)fork1;
    (void)fork2;
    std::set<std::string> names;
    for (int i = 0; i < 10; ++i) names.insert(fresh_name("b1"));
    for (int i = 0; i < 10; ++i) names.insert(fresh_name("b2"));
    CHECK(names.size() == 20);
}

TEST_CASE("mgu is a unifier and symmetric, on random pairs", "[terms][property]") {
    oracles::Rng rng(99);
    int successes = 0;
    for (int i = 0; i < 500; ++i) {
        auto a = oracles::random_term(rng, 3);
        auto b = oracles::random_term(rng, 3);
        auto ab = unify(a, b);
        auto ba = unify(b, a);
        CHECK(ab.has_value() == ba.has_value());
        if (ab) {
            successes++;
            CHECK(term_eq(apply_subst(*ab, a), apply_subst(*ab, b)));
            // idempotence
            CHECK(term_eq(apply_subst(*ab, apply_subst(*ab, a)), apply_subst(*ab, a)));
        }
    }
    CHECK(successes > 10); // the generator must hit solvable cases
}

TEST_CASE("ground terms are fixpoints of every substitution", "[terms][property]") {
    oracles::Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        auto g = oracles::random_term(rng, 3, /*allow_vars=*/false);
        REQUIRE(is_ground(g));
        auto s = bind1("x", oracles::random_term(rng, 2));
        s.terms["y"] = oracles::random_term(rng, 2);
        CHECK(term_eq(apply_subst(s, g), g));
    }
}

TEST_CASE("canonical textual form round-trips", "[terms]") {
    for (const char* text :
         {"f(g, ?x)", "?name", "#VAR", "$s3", "pair(f(a), $s4)", "occ(x, 2)", "nil"}) {
        auto parsed = parse_term(text);
        REQUIRE(parsed);
        auto printed = to_string(*parsed);
        auto reparsed = parse_term(printed);
        REQUIRE(reparsed);
        CHECK(term_eq(*parsed, *reparsed));
        CHECK(printed == to_string(*reparsed));
    }
}

TEST_CASE("round-trip on random terms", "[terms][property]") {
    oracles::Rng rng(4242);
    for (int i = 0; i < 300; ++i) {
        auto a = oracles::random_term(rng, 4);
        auto reparsed = parse_term(to_string(a));
        REQUIRE(reparsed);
        CHECK(term_eq(a, *reparsed));
    }
}

TEST_CASE("set literals preserve duplicates and flatten", "[terms]") {
    auto lit = mk_set_lit({t("a"), t("a"), t("b")});
    CHECK(lit->elems.size() == 3);
    CHECK(to_string(lit) == "{a, a, b}");
    CHECK(to_string(mk_set_lit({})) == "{}");
}
