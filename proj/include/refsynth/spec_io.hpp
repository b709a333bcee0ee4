#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "refsynth/constraint.hpp"

namespace refsynth {

struct SpecError {
    enum class Kind { Parse, ArityMismatch, OverlappingRules, UnboundVariable, UnknownLabel };
    Kind kind;
    std::string message;
    std::string rule1{}, rule2{}; // OverlappingRules only
};

using LoadResult = std::variant<Specification, SpecError>;

namespace detail {

// Lexer for the rule-file surface syntax.  Whitespace-insensitive; //-line
// comments.
struct SpecLexer {
    std::string_view text;
    size_t pos = 0;
    int line = 1, col = 1;

    void advance(size_t n) {
        for (size_t i = 0; i < n && pos < text.size(); ++i, ++pos) {
            if (text[pos] == '\n') {
                line++;
                col = 1;
            } else {
                col++;
            }
        }
    }

    void skip_ws() {
        while (pos < text.size()) {
            if (std::isspace(static_cast<unsigned char>(text[pos]))) {
                advance(1);
            } else if (text[pos] == '/' && pos + 1 < text.size() && text[pos + 1] == '/') {
                while (pos < text.size() && text[pos] != '\n') advance(1);
            } else {
                break;
            }
        }
    }

    bool eof() {
        skip_ws();
        return pos >= text.size();
    }

    bool peek_sym(std::string_view s) {
        skip_ws();
        return text.substr(pos, s.size()) == s;
    }

    bool consume_sym(std::string_view s) {
        if (!peek_sym(s)) return false;
        advance(s.size());
        return true;
    }

    std::optional<std::string> peek_word() {
        skip_ws();
        size_t p = pos;
        if (p >= text.size()) return std::nullopt;
        if (!std::isalpha(static_cast<unsigned char>(text[p])) && text[p] != '_' && text[p] != '$')
            return std::nullopt;
        size_t start = p;
        if (text[p] == '$') {
            p++;
        } else {
            while (p < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[p])) || text[p] == '_'))
                p++;
        }
        return std::string(text.substr(start, p - start));
    }

    std::optional<std::string> word() {
        auto w = peek_word();
        if (w) advance(w->size());
        return w;
    }

    bool consume_keyword(std::string_view kw) {
        auto w = peek_word();
        if (w && *w == kw) {
            advance(w->size());
            return true;
        }
        return false;
    }

    std::optional<std::string> var() { // ?name
        skip_ws();
        if (pos >= text.size() || text[pos] != '?') return std::nullopt;
        advance(1);
        auto w = word();
        if (!w) return std::nullopt;
        return w;
    }

    std::optional<long> integer() {
        skip_ws();
        size_t p = pos;
        if (p >= text.size() || !std::isdigit(static_cast<unsigned char>(text[p]))) return std::nullopt;
        long v = 0;
        while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p]))) {
            v = v * 10 + (text[p] - '0');
            p++;
        }
        advance(p - pos);
        return v;
    }

    // rule names may carry dashes (T-Num, S-QMod)
    std::optional<std::string> rule_name() {
        skip_ws();
        size_t p = pos;
        while (p < text.size() && (std::isalnum(static_cast<unsigned char>(text[p])) ||
                                   text[p] == '_' || text[p] == '-'))
            p++;
        if (p == pos) return std::nullopt;
        auto name = std::string(text.substr(pos, p - pos));
        advance(p - pos);
        return name;
    }

    std::string loc() const { return std::to_string(line) + ":" + std::to_string(col); }
};

struct SpecParser {
    SpecLexer lx;
    Specification spec;
    std::optional<SpecError> error;

    bool fail(std::string msg) {
        if (!error) error = SpecError{SpecError::Kind::Parse, "parse error at " + lx.loc() + ": " + std::move(msg)};
        return false;
    }
    bool fail_kind(SpecError::Kind k, std::string msg) {
        if (!error) error = SpecError{k, std::move(msg)};
        return false;
    }

    bool known_label(const std::string& name) { return spec.alphabet.count(Label{name}) > 0; }

    // term := ?var | IDENT ("(" term,* ")")?   (labels appear as #NAME)
    TermPtr parse_term() {
        lx.skip_ws();
        if (lx.peek_sym("?")) {
            auto v = lx.var();
            if (!v) {
                fail("expected variable name after '?'");
                return nullptr;
            }
            return mk_var(*v);
        }
        if (lx.consume_sym("#")) {
            auto w = lx.word();
            if (!w) {
                fail("expected label name after '#'");
                return nullptr;
            }
            if (!known_label(*w)) {
                fail_kind(SpecError::Kind::UnknownLabel, "unknown label #" + *w);
                return nullptr;
            }
            return mk_label(*w);
        }
        if (auto n = lx.integer()) return mk_atom(std::to_string(*n));
        auto w = lx.word();
        if (!w) {
            fail("expected term");
            return nullptr;
        }
        std::vector<TermPtr> args;
        if (lx.consume_sym("(")) {
            if (!lx.consume_sym(")")) {
                while (true) {
                    auto a = parse_term();
                    if (!a) return nullptr;
                    args.push_back(std::move(a));
                    if (lx.consume_sym(",")) continue;
                    if (lx.consume_sym(")")) break;
                    fail("expected ',' or ')' in term arguments");
                    return nullptr;
                }
            }
        }
        return mk_app(*w, std::move(args));
    }

    SetTermPtr parse_setterm() {
        if (lx.peek_sym("?")) {
            auto v = lx.var();
            if (!v) {
                fail("expected set variable");
                return nullptr;
            }
            return mk_set_var(*v);
        }
        if (lx.consume_sym("{")) {
            std::vector<TermPtr> elems;
            if (!lx.consume_sym("}")) {
                while (true) {
                    auto t = parse_term();
                    if (!t) return nullptr;
                    elems.push_back(std::move(t));
                    if (lx.consume_sym(",")) continue;
                    if (lx.consume_sym("}")) break;
                    fail("expected ',' or '}' in set literal");
                    return nullptr;
                }
            }
            return mk_set_lit(std::move(elems));
        }
        fail("expected set term");
        return nullptr;
    }

    EqPtr parse_eq() {
        auto l = parse_eq_atom();
        if (!l) return nullptr;
        while (lx.peek_sym("*")) {
            lx.consume_sym("*");
            auto r = parse_eq_atom();
            if (!r) return nullptr;
            l = mk_econj(std::move(l), std::move(r));
        }
        return l;
    }

    EqPtr parse_eq_atom() {
        auto w = lx.peek_word();
        if (w && *w == "exists") {
            lx.consume_keyword("exists");
            std::vector<std::string> binders;
            while (lx.peek_sym("?")) {
                auto v = lx.var();
                if (!v) {
                    fail("expected variable after exists");
                    return nullptr;
                }
                binders.push_back(*v);
            }
            if (binders.empty()) {
                fail("exists needs at least one binder");
                return nullptr;
            }
            if (!lx.consume_sym(".")) {
                fail("expected '.' after exists binders");
                return nullptr;
            }
            auto body = parse_eq();
            if (!body) return nullptr;
            for (auto it = binders.rbegin(); it != binders.rend(); ++it)
                body = mk_eexists(*it, std::move(body));
            return body;
        }
        if (w && *w == "dataOf") {
            lx.consume_keyword("dataOf");
            if (!lx.consume_sym("(")) {
                fail("expected '(' after dataOf");
                return nullptr;
            }
            auto a = parse_term();
            if (!a) return nullptr;
            if (!lx.consume_sym(",")) {
                fail("expected ',' in dataOf");
                return nullptr;
            }
            auto b = parse_term();
            if (!b) return nullptr;
            if (!lx.consume_sym(")")) {
                fail("expected ')' after dataOf");
                return nullptr;
            }
            return mk_dataof(std::move(a), std::move(b));
        }
        if (lx.peek_sym("(")) {
            lx.consume_sym("(");
            auto inner = parse_eq();
            if (!inner) return nullptr;
            if (!lx.consume_sym(")")) {
                fail("expected ')'");
                return nullptr;
            }
            return inner;
        }
        auto t1 = parse_term();
        if (!t1) return nullptr;
        if (!lx.consume_sym("=")) {
            fail("expected '=' in equality constraint");
            return nullptr;
        }
        auto t2 = parse_term();
        if (!t2) return nullptr;
        return mk_eq(std::move(t1), std::move(t2));
    }

    // Raw regex text runs until the keyword 'order' or 'filter'.
    std::optional<RegexPtr> parse_regex_until_keyword() {
        lx.skip_ws();
        size_t start = lx.pos;
        while (lx.pos < lx.text.size()) {
            lx.skip_ws();
            auto w = lx.peek_word();
            if (w && (*w == "order" || *w == "filter")) break;
            if (lx.pos >= lx.text.size()) break;
            if (w) {
                lx.advance(w->size());
            } else {
                char c = lx.text[lx.pos];
                if (c == '*' || c == '?' || c == '|' || c == '(' || c == ')' || c == '~' ||
                    c == '0') {
                    lx.advance(1);
                } else {
                    break;
                }
            }
        }
        auto raw = std::string(lx.text.substr(start, lx.pos - start));
        auto r = parse_regex(raw);
        if (!r) {
            fail("invalid regular expression '" + raw + "'");
            return std::nullopt;
        }
        std::set<Label> used;
        collect_alphabet(*r, used);
        for (const auto& l : used) {
            if (!known_label(l.name)) {
                fail_kind(SpecError::Kind::UnknownLabel, "unknown label " + l.name + " in regex");
                return std::nullopt;
            }
        }
        return r;
    }

    ConstraintPtr parse_constraint() {
        auto l = parse_constraint_atom();
        if (!l) return nullptr;
        while (lx.peek_sym("*")) {
            lx.consume_sym("*");
            auto r = parse_constraint_atom();
            if (!r) return nullptr;
            l = mk_conj(std::move(l), std::move(r));
        }
        return l;
    }

    ConstraintPtr parse_constraint_atom() {
        auto w = lx.peek_word();
        if (w) {
            if (*w == "emp") {
                lx.consume_keyword("emp");
                return mk_emp();
            }
            if (*w == "false") {
                lx.consume_keyword("false");
                return mk_false();
            }
            if (*w == "exists") {
                lx.consume_keyword("exists");
                std::vector<std::string> binders;
                while (lx.peek_sym("?")) {
                    auto v = lx.var();
                    if (!v) {
                        fail("expected variable after exists");
                        return nullptr;
                    }
                    binders.push_back(*v);
                }
                if (binders.empty()) {
                    fail("exists needs at least one binder");
                    return nullptr;
                }
                if (!lx.consume_sym(".")) {
                    fail("expected '.' after exists binders");
                    return nullptr;
                }
                auto body = parse_constraint();
                if (!body) return nullptr;
                for (auto it = binders.rbegin(); it != binders.rend(); ++it)
                    body = mk_exists(*it, std::move(body));
                return body;
            }
            if (*w == "new") {
                lx.consume_keyword("new");
                auto v = lx.var();
                if (!v) {
                    fail("expected scope variable after new");
                    return nullptr;
                }
                if (!lx.consume_sym("->")) {
                    fail("expected '->' in new");
                    return nullptr;
                }
                auto d = parse_term();
                if (!d) return nullptr;
                return mk_new_scope(*v, std::move(d));
            }
            if (*w == "query") {
                lx.consume_keyword("query");
                auto src = parse_term();
                if (!src) return nullptr;
                if (!lx.consume_keyword("regex")) {
                    fail("expected 'regex' in query");
                    return nullptr;
                }
                auto re = parse_regex_until_keyword();
                if (!re) return nullptr;
                std::string order_name;
                LabelOrder order;
                if (lx.consume_keyword("order")) {
                    auto on = lx.word();
                    if (!on) {
                        fail("expected order name");
                        return nullptr;
                    }
                    auto it = spec.orders.find(*on);
                    if (it == spec.orders.end()) {
                        fail("unknown order '" + *on + "'");
                        return nullptr;
                    }
                    order_name = *on;
                    order = it->second;
                }
                if (!lx.consume_keyword("filter")) {
                    fail("expected 'filter' in query");
                    return nullptr;
                }
                if (!lx.consume_sym("(")) {
                    fail("expected '(' after filter");
                    return nullptr;
                }
                auto binder = lx.var();
                if (!binder) {
                    fail("expected filter binder variable");
                    return nullptr;
                }
                if (!lx.consume_sym(")")) {
                    fail("expected ')' after filter binder");
                    return nullptr;
                }
                if (!lx.consume_sym("=>")) {
                    fail("expected '=>' after filter binder");
                    return nullptr;
                }
                auto body = parse_eq();
                if (!body) return nullptr;
                if (!lx.consume_keyword("as")) {
                    fail("expected 'as' after filter body");
                    return nullptr;
                }
                auto z = lx.var();
                if (!z) {
                    fail("expected result set variable after 'as'");
                    return nullptr;
                }
                if (!lx.consume_sym(".")) {
                    fail("expected '.' after result variable");
                    return nullptr;
                }
                auto cont = parse_constraint();
                if (!cont) return nullptr;
                QueryData q;
                q.source = std::move(src);
                q.regex = *re;
                q.filter = DataFilter{*binder, std::move(body)};
                q.order = order;
                q.order_name = order_name;
                q.result_var = *z;
                q.cont = std::move(cont);
                return mk_query(std::move(q));
            }
            if (*w == "single") {
                lx.consume_keyword("single");
                if (!lx.consume_sym("(")) {
                    fail("expected '(' after single");
                    return nullptr;
                }
                auto t = parse_term();
                if (!t) return nullptr;
                if (!lx.consume_sym(",")) {
                    fail("expected ',' in single");
                    return nullptr;
                }
                auto st = parse_setterm();
                if (!st) return nullptr;
                if (!lx.consume_sym(")")) {
                    fail("expected ')' after single");
                    return nullptr;
                }
                return mk_single(std::move(t), std::move(st));
            }
            if (*w == "forall") {
                lx.consume_keyword("forall");
                auto v = lx.var();
                if (!v) {
                    fail("expected binder after forall");
                    return nullptr;
                }
                if (!lx.consume_keyword("in")) {
                    fail("expected 'in' in forall");
                    return nullptr;
                }
                auto st = parse_setterm();
                if (!st) return nullptr;
                if (!lx.consume_sym(".")) {
                    fail("expected '.' in forall");
                    return nullptr;
                }
                auto body = parse_constraint();
                if (!body) return nullptr;
                return mk_forall(*v, std::move(st), std::move(body));
            }
            if (*w == "dataOf") {
                auto e = parse_eq_atom();
                if (!e) return nullptr;
                return mk_eqc(std::move(e));
            }
        }
        if (lx.peek_sym("(")) {
            lx.consume_sym("(");
            auto inner = parse_constraint();
            if (!inner) return nullptr;
            if (!lx.consume_sym(")")) {
                fail("expected ')'");
                return nullptr;
            }
            return inner;
        }
        // term-leading: equality, edge assertion, or predicate call
        auto t1 = parse_term();
        if (!t1) return nullptr;
        if (lx.consume_sym("=")) {
            auto t2 = parse_term();
            if (!t2) return nullptr;
            return mk_eqc(mk_eq(std::move(t1), std::move(t2)));
        }
        if (lx.consume_sym("-[")) {
            auto lbl = lx.word();
            if (!lbl) {
                fail("expected label in edge assertion");
                return nullptr;
            }
            if (!known_label(*lbl)) {
                fail_kind(SpecError::Kind::UnknownLabel, "unknown label " + *lbl + " in edge");
                return nullptr;
            }
            if (!lx.consume_sym("]->")) {
                fail("expected ']->' in edge assertion");
                return nullptr;
            }
            auto t2 = parse_term();
            if (!t2) return nullptr;
            return mk_new_edge(std::move(t1), Label{*lbl}, std::move(t2));
        }
        if (t1->kind == TermKind::App) {
            auto it = spec.predicates.find(t1->name);
            if (it == spec.predicates.end()) {
                fail("unknown predicate or malformed constraint '" + t1->name + "'");
                return nullptr;
            }
            if (it->second != t1->args.size()) {
                fail_kind(SpecError::Kind::ArityMismatch,
                          "predicate " + t1->name + " declared with arity " +
                              std::to_string(it->second) + " but called with " +
                              std::to_string(t1->args.size()));
                return nullptr;
            }
            return mk_pred(t1->name, t1->args);
        }
        fail("expected constraint");
        return nullptr;
    }

    bool parse_spec() {
        if (!lx.consume_keyword("labels")) return fail("expected 'labels'");
        while (true) {
            auto w = lx.peek_word();
            if (!w || *w == "order" || *w == "init") break;
            lx.advance(w->size());
            spec.alphabet.insert(Label{*w});
        }
        if (spec.alphabet.empty()) return fail("at least one label required");
        if (!lx.consume_sym(";")) return fail("expected ';' after labels");

        while (lx.consume_keyword("order")) {
            auto name = lx.word();
            if (!name) return fail("expected order name");
            LabelOrder order;
            if (!lx.peek_sym(";")) {
                while (true) {
                    auto a = lx.word();
                    if (!a) return fail("expected label in order");
                    if (!lx.consume_sym("<")) return fail("expected '<' in order");
                    auto b = lx.word();
                    if (!b) return fail("expected label in order");
                    for (const auto& l : {*a, *b})
                        if (l != "$" && !known_label(l))
                            return fail_kind(SpecError::Kind::UnknownLabel,
                                             "unknown label " + l + " in order " + *name);
                    order.prefers.insert({*a, *b});
                    if (!lx.consume_sym(",")) break;
                }
            }
            if (!order.close()) return fail("order '" + *name + "' is not a strict partial order");
            if (!lx.consume_sym(";")) return fail("expected ';' after order");
            spec.orders[*name] = std::move(order);
        }

        if (!lx.consume_keyword("init")) return fail("expected 'init'");
        auto initp = lx.word();
        if (!initp) return fail("expected initial predicate name");
        spec.initial_predicate = *initp;
        if (!lx.consume_sym(";")) return fail("expected ';' after init");

        while (lx.consume_keyword("pred")) {
            auto name = lx.word();
            if (!name) return fail("expected predicate name");
            if (!lx.consume_sym("/")) return fail("expected '/' in pred declaration");
            auto arity = lx.integer();
            if (!arity) return fail("expected arity");
            spec.predicates[*name] = static_cast<size_t>(*arity);
            if (!lx.consume_sym(";")) return fail("expected ';' after pred declaration");
        }

        while (lx.consume_keyword("rule")) {
            Rule r;
            auto name = lx.rule_name();
            if (!name) return fail("expected rule name");
            r.name = *name;
            if (!lx.consume_sym(":")) return fail("expected ':' after rule name");
            auto sym = lx.word();
            if (!sym) return fail("expected predicate symbol");
            r.head_symbol = *sym;
            if (!lx.consume_sym("(")) return fail("expected '(' in rule head");
            if (!lx.consume_sym(")")) {
                while (true) {
                    auto p = parse_term();
                    if (!p) return false;
                    r.head_patterns.push_back(std::move(p));
                    if (lx.consume_sym(",")) continue;
                    if (lx.consume_sym(")")) break;
                    return fail("expected ',' or ')' in rule head");
                }
            }
            if (!lx.consume_sym("<-")) return fail("expected '<-' in rule");
            auto body = parse_constraint();
            if (!body) return false;
            r.body = std::move(body);
            if (!lx.consume_sym(";")) return fail("expected ';' after rule body");
            spec.rules.push_back(std::move(r));
        }

        if (!lx.eof()) return fail("unexpected trailing input");
        return true;
    }
};

} // namespace detail

// Parses, arity-checks, closure-checks, and overlap-checks a rule file.
inline LoadResult load_spec(std::string_view text) {
    detail::SpecParser p;
    p.lx.text = text;
    if (!p.parse_spec()) {
        if (p.error) return *p.error;
        return SpecError{SpecError::Kind::Parse, "parse error"};
    }
    Specification& spec = p.spec;

    auto it = spec.predicates.find(spec.initial_predicate);
    if (it == spec.predicates.end())
        return SpecError{SpecError::Kind::Parse,
                         "initial predicate '" + spec.initial_predicate + "' not declared"};
    if (it->second != 1)
        return SpecError{SpecError::Kind::ArityMismatch,
                         "initial predicate '" + spec.initial_predicate + "' must have arity 1"};

    for (const auto& r : spec.rules) {
        auto ar = spec.predicates.find(r.head_symbol);
        if (ar == spec.predicates.end())
            return SpecError{SpecError::Kind::Parse,
                             "rule " + r.name + " uses undeclared predicate " + r.head_symbol};
        if (ar->second != r.head_patterns.size())
            return SpecError{SpecError::Kind::ArityMismatch,
                             "rule " + r.name + " head arity mismatch for " + r.head_symbol};

        // closure: body free variables must come from the head
        std::set<std::string> head_vars;
        for (const auto& pat : r.head_patterns) collect_vars(pat, head_vars);
        for (const auto& v : free_vars(r.body)) {
            if (!head_vars.count(v))
                return SpecError{SpecError::Kind::UnboundVariable,
                                 "rule " + r.name + " has unbound variable ?" + v};
        }
    }

    // pairwise non-overlap of same-symbol rule heads
    for (size_t i = 0; i < spec.rules.size(); ++i) {
        for (size_t j = i + 1; j < spec.rules.size(); ++j) {
            const Rule& a = spec.rules[i];
            const Rule& b = spec.rules[j];
            if (a.head_symbol != b.head_symbol) continue;
            Rule ra = rename_rule(a);
            Rule rb = rename_rule(b);
            if (unify_seq(ra.head_patterns, rb.head_patterns)) {
                SpecError e{SpecError::Kind::OverlappingRules,
                            "rules " + a.name + " and " + b.name + " have unifiable heads"};
                e.rule1 = a.name;
                e.rule2 = b.name;
                return e;
            }
        }
    }
    return spec;
}

} // namespace refsynth
