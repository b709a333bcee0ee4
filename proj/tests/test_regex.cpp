#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "refsynth/refsynth.hpp"

using namespace refsynth;

namespace {

RegexPtr re(const std::string& text) {
    auto r = parse_regex(text);
    REQUIRE(r.has_value());
    return *r;
}

const std::vector<Label> kAlphabet{{"LEX"}, {"VAR"}, {"MOD"}, {"IMP"}};

} // namespace

TEST_CASE("derivative examples", "[regex]") {
    auto r = re("LEX* IMP? VAR");
    CHECK(regex_eq(derivative(r, Label{"LEX"}), r)); // star self-derivative
    CHECK(regex_eq(derivative(re("VAR"), Label{"VAR"}), re_empty_word()));
    CHECK(is_empty_set(derivative(re("VAR"), Label{"LEX"})));
}

TEST_CASE("nullable examples", "[regex]") {
    CHECK_FALSE(is_nullable(re("LEX* IMP? VAR")));
    CHECK(is_nullable(re("LEX*")));
    CHECK_FALSE(is_nullable(re_empty_set()));
    CHECK(is_nullable(re("e")));
}

TEST_CASE("first set examples", "[regex]") {
    auto fs = first_set(re("LEX* IMP? VAR"));
    CHECK(fs == std::set<Label>{{"IMP"}, {"LEX"}, {"VAR"}});
    CHECK(first_set(re("VAR")) == std::set<Label>{{"VAR"}});
    CHECK(first_set(re_empty_word()).empty());
}

TEST_CASE("inversion examples", "[regex]") {
    CHECK(to_string(invert(re("LEX* VAR"))) == "VAR LEX*");
    CHECK(to_string(invert(re("VAR"))) == "VAR");
    // verify LEX* IMP? VAR inversion by exhaustive word enumeration
    auto r = re("LEX* IMP? VAR");
    auto inv = invert(r);
    for (const auto& w : oracles::words_up_to(kAlphabet, 4)) {
        auto rev = w;
        std::reverse(rev.begin(), rev.end());
        CHECK(oracles::word_matches(inv, w) == oracles::word_matches(r, rev));
    }
}

TEST_CASE("derivative matching agrees with the brute-force matcher", "[regex][property]") {
    oracles::Rng rng(555);
    auto words = oracles::words_up_to(kAlphabet, 5);
    for (int i = 0; i < 60; ++i) {
        auto r = oracles::random_regex(rng, kAlphabet, 3);
        for (const auto& w : words) CHECK(matches_word(r, w) == oracles::word_matches(r, w));
    }
}

TEST_CASE("inversion matches reversals, exhaustively to length 4", "[regex][property]") {
    oracles::Rng rng(556);
    auto words = oracles::words_up_to(kAlphabet, 4);
    for (int i = 0; i < 40; ++i) {
        auto r = oracles::random_regex(rng, kAlphabet, 3);
        auto inv = invert(r);
        for (const auto& w : words) {
            auto rev = w;
            std::reverse(rev.begin(), rev.end());
            CHECK(matches_word(inv, rev) == matches_word(r, w));
        }
    }
}

TEST_CASE("first set is consistent with derivatives", "[regex][property]") {
    oracles::Rng rng(557);
    for (int i = 0; i < 200; ++i) {
        auto r = oracles::random_regex(rng, kAlphabet, 3);
        auto fs = first_set(r);
        for (const auto& l : kAlphabet)
            CHECK((fs.count(l) > 0) == !is_empty_set(derivative(r, l)));
    }
}

TEST_CASE("regex surface syntax round-trips", "[regex]") {
    for (const char* text : {"LEX* IMP? VAR", "VAR", "~0", "e", "MOD | VAR", "(LEX | IMP)* MOD"}) {
        auto r = parse_regex(text);
        REQUIRE(r);
        auto reparsed = parse_regex(to_string(*r));
        REQUIRE(reparsed);
        CHECK(regex_eq(*r, *reparsed));
    }
}

TEST_CASE("smart constructors normalize absorbing cases", "[regex]") {
    CHECK(is_empty_set(re_concat(re_empty_set(), re("VAR"))));
    CHECK(regex_eq(re_concat(re_empty_word(), re("VAR")), re("VAR")));
    CHECK(regex_eq(re_alt(re_empty_set(), re("VAR")), re("VAR")));
    CHECK(regex_eq(re_star(re_star(re("LEX"))), re_star(re("LEX"))));
    // residuals stay bounded along long derivative chains
    auto r = re("(LEX | IMP)* (VAR | MOD)");
    RegexPtr cur = r;
    std::set<std::string> seen;
    for (int i = 0; i < 100; ++i) {
        seen.insert(to_string(cur));
        cur = derivative(cur, kAlphabet[static_cast<size_t>(i % 2)]);
    }
    CHECK(seen.size() <= 4);
}
