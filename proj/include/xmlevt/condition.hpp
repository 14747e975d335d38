// Termination conditions: boolean expressions over relative paths, evaluated
// against the subtree below a given element.
//
// Grammar (ASCII):
//   expr   := or ; or := and ('or' and)* ; and := unary ('and' unary)*
//   unary  := 'not' unary | primary
//   primary:= '(' expr ')' | path (cmp literal)?
//   cmp    := '=' | '!=' | '<' | '<=' | '>' | '>='
//   literal:= number | 'single-quoted string'
// A bare path is an existence test.  An element path reads the concatenation
// of the element's direct text children; attribute paths read the attribute
// value.  Comparisons are existential over the matched nodes and false when
// nothing matches or a numeric comparison meets non-numeric text.

#pragma once

#include <cctype>
#include <charconv>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "document.hpp"
#include "path.hpp"

namespace xmlevt {

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct Condition {
    enum class Kind { Exists, Compare, Not, And, Or };
    Kind kind = Kind::Exists;
    PathType path;                       // Exists/Compare
    CmpOp op = CmpOp::Eq;                // Compare
    bool numeric = false;                // Compare: literal kind
    double number = 0.0;
    std::string text;                    // Compare: string literal
    std::vector<Condition> children;     // Not(1), And/Or(>=2)
};

class ConditionSyntaxError : public std::runtime_error {
public:
    ConditionSyntaxError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)),
          pos(position) {}
    std::size_t pos;
};

namespace detail {

class ConditionParser {
public:
    explicit ConditionParser(const std::string& text) : s_(text) {}

    Condition parse() {
        Condition c = parse_or();
        skip_ws();
        if (pos_ != s_.size()) throw ConditionSyntaxError("trailing input", pos_);
        return c;
    }

private:
    Condition parse_or() {
        Condition left = parse_and();
        std::vector<Condition> terms{std::move(left)};
        while (accept_word("or") || accept_sym("||"))
            terms.push_back(parse_and());
        if (terms.size() == 1) return std::move(terms.front());
        Condition c;
        c.kind = Condition::Kind::Or;
        c.children = std::move(terms);
        return c;
    }

    Condition parse_and() {
        std::vector<Condition> terms{parse_unary()};
        while (accept_word("and") || accept_sym("&&"))
            terms.push_back(parse_unary());
        if (terms.size() == 1) return std::move(terms.front());
        Condition c;
        c.kind = Condition::Kind::And;
        c.children = std::move(terms);
        return c;
    }

    Condition parse_unary() {
        if (accept_word("not") || accept_sym("!")) {
            Condition c;
            c.kind = Condition::Kind::Not;
            c.children.push_back(parse_unary());
            return c;
        }
        return parse_primary();
    }

    Condition parse_primary() {
        skip_ws();
        if (pos_ >= s_.size()) throw ConditionSyntaxError("unexpected end of condition", pos_);
        if (s_[pos_] == '(') {
            ++pos_;
            Condition c = parse_or();
            skip_ws();
            if (pos_ >= s_.size() || s_[pos_] != ')')
                throw ConditionSyntaxError("expected ')'", pos_);
            ++pos_;
            return c;
        }
        Condition c;
        c.path = parse_path();
        skip_ws();
        CmpOp op;
        if (try_cmp(op)) {
            c.kind = Condition::Kind::Compare;
            c.op = op;
            parse_literal(c);
        } else {
            c.kind = Condition::Kind::Exists;
        }
        return c;
    }

    PathType parse_path() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size()) {
            char ch = s_[pos_];
            if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' ||
                ch == '.' || ch == ':' || ch == '/' || ch == '@') {
                ++pos_;
            } else if (s_.compare(pos_, 2, "()") == 0 && pos_ >= 4 &&
                       s_.compare(pos_ - 4, 4, "text") == 0) {
                pos_ += 2;
            } else {
                break;
            }
        }
        if (pos_ == start) throw ConditionSyntaxError("expected path", pos_);
        std::string raw = s_.substr(start, pos_ - start);
        if (!raw.empty() && raw.front() == '/')
            throw ConditionSyntaxError("condition paths must be relative", start);
        try {
            return parse_path_type(raw);
        } catch (const PathSyntaxError& e) {
            throw ConditionSyntaxError(e.what(), start + e.pos);
        }
    }

    bool try_cmp(CmpOp& op) {
        skip_ws();
        if (accept_sym("!=")) { op = CmpOp::Ne; return true; }
        if (accept_sym("<=")) { op = CmpOp::Le; return true; }
        if (accept_sym(">=")) { op = CmpOp::Ge; return true; }
        if (accept_sym("=")) { op = CmpOp::Eq; return true; }
        if (accept_sym("<")) { op = CmpOp::Lt; return true; }
        if (accept_sym(">")) { op = CmpOp::Gt; return true; }
        return false;
    }

    void parse_literal(Condition& c) {
        skip_ws();
        if (pos_ >= s_.size()) throw ConditionSyntaxError("expected literal", pos_);
        if (s_[pos_] == '\'') {
            std::size_t end = s_.find('\'', pos_ + 1);
            if (end == std::string::npos)
                throw ConditionSyntaxError("unterminated string literal", pos_);
            c.numeric = false;
            c.text = s_.substr(pos_ + 1, end - pos_ - 1);
            pos_ = end + 1;
            return;
        }
        std::size_t start = pos_;
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
        while (pos_ < s_.size() &&
               (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
            ++pos_;
        if (pos_ == start) throw ConditionSyntaxError("expected literal", pos_);
        c.numeric = true;
        c.number = std::stod(s_.substr(start, pos_ - start));
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept_sym(const char* sym) {
        skip_ws();
        std::size_t len = std::char_traits<char>::length(sym);
        if (s_.compare(pos_, len, sym) == 0) { pos_ += len; return true; }
        return false;
    }

    bool accept_word(const char* word) {
        skip_ws();
        std::size_t len = std::char_traits<char>::length(word);
        if (s_.compare(pos_, len, word) != 0) return false;
        std::size_t after = pos_ + len;
        if (after < s_.size()) {
            char ch = s_[after];
            if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') return false;
        }
        pos_ = after;
        return true;
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

inline void resolve_step(const Document& doc, const Node& from, const Step& step,
                         std::vector<const Node*>& out) {
    if (from.kind != NodeKind::Element) return;
    for (const auto& cid : from.children) {
        const Node& c = doc.node(cid);
        if (step.text) {
            if (c.kind == NodeKind::Text) out.push_back(&c);
        } else if (step.axis == Axis::Attribute) {
            if (c.kind == NodeKind::Attribute && c.name == step.name) out.push_back(&c);
        } else {
            if (c.kind == NodeKind::Element && c.name == step.name) out.push_back(&c);
        }
    }
}

inline std::vector<const Node*> resolve_path(const Document& doc, const Node& anchor,
                                             const PathType& path) {
    std::vector<const Node*> current{&anchor};
    for (const Step& step : path.steps()) {
        std::vector<const Node*> next;
        for (const Node* n : current) resolve_step(doc, *n, step, next);
        current = std::move(next);
        if (current.empty()) break;
    }
    return current;
}

// Element value = concatenation of direct text children in document order.
inline std::string node_value(const Document& doc, const Node& n) {
    if (n.kind != NodeKind::Element) return n.value;
    std::string out;
    for (const auto& cid : n.children) {
        const Node& c = doc.node(cid);
        if (c.kind == NodeKind::Text) out += c.value;
    }
    return out;
}

inline bool numeric_value(const std::string& text, double& out) {
    std::size_t b = text.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return false;
    std::size_t e = text.find_last_not_of(" \t\r\n") + 1;
    const char* first = text.data() + b;
    const char* last = text.data() + e;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

template <typename T>
inline bool cmp_apply(CmpOp op, const T& a, const T& b) {
    switch (op) {
        case CmpOp::Eq: return a == b;
        case CmpOp::Ne: return a != b;
        case CmpOp::Lt: return a < b;
        case CmpOp::Le: return a <= b;
        case CmpOp::Gt: return a > b;
        default: return a >= b;
    }
}

inline bool eval_node(const Document& doc, const Node& anchor, const Condition& c) {
    switch (c.kind) {
        case Condition::Kind::Exists:
            return !resolve_path(doc, anchor, c.path).empty();
        case Condition::Kind::Compare: {
            for (const Node* n : resolve_path(doc, anchor, c.path)) {
                std::string v = node_value(doc, *n);
                if (c.numeric) {
                    double x;
                    if (numeric_value(v, x) && cmp_apply(c.op, x, c.number)) return true;
                } else if (cmp_apply(c.op, v, c.text)) {
                    return true;
                }
            }
            return false;
        }
        case Condition::Kind::Not:
            return !eval_node(doc, anchor, c.children.front());
        case Condition::Kind::And:
            for (const auto& ch : c.children)
                if (!eval_node(doc, anchor, ch)) return false;
            return true;
        default:
            for (const auto& ch : c.children)
                if (eval_node(doc, anchor, ch)) return true;
            return false;
    }
}

}  // namespace detail

inline Condition parse_condition(const std::string& text) {
    return detail::ConditionParser(text).parse();
}

inline bool eval_condition(const Document& doc, const PathInstance& at, const Condition& cond) {
    if (at.is_null()) throw DocumentError("condition anchor is null");
    const Node& anchor = doc.node(at.last());
    if (anchor.kind != NodeKind::Element)
        throw DocumentError("condition anchor " + at.last() + " is not an element");
    return detail::eval_node(doc, anchor, cond);
}

}  // namespace xmlevt
