#pragma once

#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace refsynth {

// Edge label, drawn from the finite alphabet declared by the loaded
// specification.
struct Label {
    std::string name;

    friend bool operator==(const Label& a, const Label& b) { return a.name == b.name; }
    friend bool operator!=(const Label& a, const Label& b) { return a.name != b.name; }
    friend bool operator<(const Label& a, const Label& b) { return a.name < b.name; }
};

enum class RegexKind { EmptySet, EmptyWord, Symbol, Concat, Alt, Star, Option };

struct RegexNode;
using RegexPtr = std::shared_ptr<const RegexNode>;

struct RegexNode {
    RegexKind kind;
    Label symbol;       // Symbol only
    RegexPtr left;      // Concat/Alt left, Star/Option child
    RegexPtr right;     // Concat/Alt right
};

inline RegexPtr re_empty_set() {
    static RegexPtr r = std::make_shared<RegexNode>(RegexNode{RegexKind::EmptySet, {}, nullptr, nullptr});
    return r;
}

inline RegexPtr re_empty_word() {
    static RegexPtr r = std::make_shared<RegexNode>(RegexNode{RegexKind::EmptyWord, {}, nullptr, nullptr});
    return r;
}

inline RegexPtr re_symbol(Label l) {
    return std::make_shared<RegexNode>(RegexNode{RegexKind::Symbol, std::move(l), nullptr, nullptr});
}

inline bool regex_eq(const RegexPtr& a, const RegexPtr& b);

// Smart constructors normalize EmptySet/EmptyWord absorption and flatten
// nested Alt so derivative chains stay finite.
inline RegexPtr re_concat(RegexPtr a, RegexPtr b) {
    if (a->kind == RegexKind::EmptySet || b->kind == RegexKind::EmptySet) return re_empty_set();
    if (a->kind == RegexKind::EmptyWord) return b;
    if (b->kind == RegexKind::EmptyWord) return a;
    return std::make_shared<RegexNode>(RegexNode{RegexKind::Concat, {}, std::move(a), std::move(b)});
}

inline RegexPtr re_alt(RegexPtr a, RegexPtr b) {
    if (a->kind == RegexKind::EmptySet) return b;
    if (b->kind == RegexKind::EmptySet) return a;
    if (regex_eq(a, b)) return a;
    return std::make_shared<RegexNode>(RegexNode{RegexKind::Alt, {}, std::move(a), std::move(b)});
}

inline RegexPtr re_star(RegexPtr a) {
    if (a->kind == RegexKind::EmptySet || a->kind == RegexKind::EmptyWord) return re_empty_word();
    if (a->kind == RegexKind::Star) return a;
    return std::make_shared<RegexNode>(RegexNode{RegexKind::Star, {}, std::move(a), nullptr});
}

inline RegexPtr re_option(RegexPtr a) {
    if (a->kind == RegexKind::EmptySet || a->kind == RegexKind::EmptyWord) return re_empty_word();
    if (a->kind == RegexKind::Option || a->kind == RegexKind::Star) return a;
    return std::make_shared<RegexNode>(RegexNode{RegexKind::Option, {}, std::move(a), nullptr});
}

inline bool regex_eq(const RegexPtr& a, const RegexPtr& b) {
    if (a.get() == b.get()) return true;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case RegexKind::EmptySet:
        case RegexKind::EmptyWord: return true;
        case RegexKind::Symbol: return a->symbol == b->symbol;
        case RegexKind::Star:
        case RegexKind::Option: return regex_eq(a->left, b->left);
        case RegexKind::Concat:
        case RegexKind::Alt: return regex_eq(a->left, b->left) && regex_eq(a->right, b->right);
    }
    return false;
}

inline bool is_nullable(const RegexPtr& r) {
    switch (r->kind) {
        case RegexKind::EmptySet: return false;
        case RegexKind::EmptyWord: return true;
        case RegexKind::Symbol: return false;
        case RegexKind::Concat: return is_nullable(r->left) && is_nullable(r->right);
        case RegexKind::Alt: return is_nullable(r->left) || is_nullable(r->right);
        case RegexKind::Star:
        case RegexKind::Option: return true;
    }
    return false;
}

// Brzozowski derivative: a word w matches the result iff l.w matches r.
inline RegexPtr derivative(const RegexPtr& r, const Label& l) {
    switch (r->kind) {
        case RegexKind::EmptySet:
        case RegexKind::EmptyWord: return re_empty_set();
        case RegexKind::Symbol: return r->symbol == l ? re_empty_word() : re_empty_set();
        case RegexKind::Concat: {
            auto d = re_concat(derivative(r->left, l), r->right);
            if (is_nullable(r->left)) return re_alt(std::move(d), derivative(r->right, l));
            return d;
        }
        case RegexKind::Alt: return re_alt(derivative(r->left, l), derivative(r->right, l));
        case RegexKind::Star: return re_concat(derivative(r->left, l), r);
        case RegexKind::Option: return derivative(r->left, l);
    }
    return re_empty_set();
}

inline bool is_empty_set(const RegexPtr& r) { return r->kind == RegexKind::EmptySet; }

inline void collect_alphabet(const RegexPtr& r, std::set<Label>& out) {
    switch (r->kind) {
        case RegexKind::Symbol: out.insert(r->symbol); return;
        case RegexKind::Concat:
        case RegexKind::Alt:
            collect_alphabet(r->left, out);
            collect_alphabet(r->right, out);
            return;
        case RegexKind::Star:
        case RegexKind::Option: collect_alphabet(r->left, out); return;
        default: return;
    }
}

// Exactly the labels l with derivative(r, l) != EmptySet.
inline std::set<Label> first_set(const RegexPtr& r) {
    std::set<Label> alphabet;
    collect_alphabet(r, alphabet);
    std::set<Label> out;
    for (const auto& l : alphabet)
        if (!is_empty_set(derivative(r, l))) out.insert(l);
    return out;
}

// Accepts exactly the reversals of words accepted by r: reverse
// concatenations, recurse elsewhere.
inline RegexPtr invert(const RegexPtr& r) {
    switch (r->kind) {
        case RegexKind::EmptySet:
        case RegexKind::EmptyWord:
        case RegexKind::Symbol: return r;
        case RegexKind::Concat: return re_concat(invert(r->right), invert(r->left));
        case RegexKind::Alt: return re_alt(invert(r->left), invert(r->right));
        case RegexKind::Star: return re_star(invert(r->left));
        case RegexKind::Option: return re_option(invert(r->left));
    }
    return r;
}

inline bool matches_word(const RegexPtr& r, const std::vector<Label>& word) {
    RegexPtr cur = r;
    for (const auto& l : word) {
        cur = derivative(cur, l);
        if (is_empty_set(cur)) return false;
    }
    return is_nullable(cur);
}

// --- textual syntax --------------------------------------------------------
// Juxtaposition for concat, | for alt, * and ? postfix, ~0 for EmptySet,
// e for EmptyWord; labels are uppercase identifiers.

inline void print_regex(std::ostream& os, const RegexPtr& r, int prec = 0) {
    switch (r->kind) {
        case RegexKind::EmptySet: os << "~0"; return;
        case RegexKind::EmptyWord: os << "e"; return;
        case RegexKind::Symbol: os << r->symbol.name; return;
        case RegexKind::Star:
            print_regex(os, r->left, 3);
            os << '*';
            return;
        case RegexKind::Option:
            print_regex(os, r->left, 3);
            os << '?';
            return;
        case RegexKind::Concat:
            if (prec > 2) os << '(';
            print_regex(os, r->left, 2);
            os << ' ';
            print_regex(os, r->right, 2);
            if (prec > 2) os << ')';
            return;
        case RegexKind::Alt:
            if (prec > 1) os << '(';
            print_regex(os, r->left, 1);
            os << " | ";
            print_regex(os, r->right, 1);
            if (prec > 1) os << ')';
            return;
    }
}

inline std::string to_string(const RegexPtr& r) {
    std::ostringstream os;
    print_regex(os, r);
    return os.str();
}

namespace detail {

struct RegexParser {
    std::string_view text;
    size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) pos++;
    }
    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    RegexPtr parse_alt() {
        auto l = parse_concat();
        if (!l) return nullptr;
        while (peek() == '|') {
            pos++;
            auto r = parse_concat();
            if (!r) return nullptr;
            l = re_alt(std::move(l), std::move(r));
        }
        return l;
    }

    RegexPtr parse_concat() {
        auto l = parse_postfix();
        if (!l) return nullptr;
        while (true) {
            char c = peek();
            bool starts_atom = std::isupper(static_cast<unsigned char>(c)) || c == '(' ||
                               c == '~' || c == 'e';
            if (!starts_atom) break;
            auto r = parse_postfix();
            if (!r) return nullptr;
            l = re_concat(std::move(l), std::move(r));
        }
        return l;
    }

    RegexPtr parse_postfix() {
        auto a = parse_atom();
        if (!a) return nullptr;
        while (true) {
            char c = peek();
            if (c == '*') {
                pos++;
                a = re_star(std::move(a));
            } else if (c == '?') {
                pos++;
                a = re_option(std::move(a));
            } else {
                break;
            }
        }
        return a;
    }

    RegexPtr parse_atom() {
        skip_ws();
        if (pos >= text.size()) return nullptr;
        char c = text[pos];
        if (c == '(') {
            pos++;
            auto inner = parse_alt();
            if (!inner) return nullptr;
            skip_ws();
            if (pos >= text.size() || text[pos] != ')') return nullptr;
            pos++;
            return inner;
        }
        if (c == '~') {
            pos++;
            if (pos >= text.size() || text[pos] != '0') return nullptr;
            pos++;
            return re_empty_set();
        }
        if (c == 'e' && (pos + 1 >= text.size() ||
                         !std::isalnum(static_cast<unsigned char>(text[pos + 1])))) {
            pos++;
            return re_empty_word();
        }
        if (std::isupper(static_cast<unsigned char>(c))) {
            size_t start = pos;
            while (pos < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
                pos++;
            return re_symbol(Label{std::string(text.substr(start, pos - start))});
        }
        return nullptr;
    }
};

} // namespace detail

inline std::optional<RegexPtr> parse_regex(std::string_view text) {
    detail::RegexParser p{text};
    auto r = p.parse_alt();
    if (!r) return std::nullopt;
    p.skip_ws();
    if (p.pos != text.size()) return std::nullopt;
    return r;
}

} // namespace refsynth
