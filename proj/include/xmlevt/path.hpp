// Path types and path instances: schema-level and instance-level node
// addresses over XML trees, plus the comparison/combination operators
// used by the event algebra.
//
// A path type is a restricted XPath-like expression: "/order/item/price"
// (absolute) or "item/@partnum" (relative).  A path instance addresses a
// concrete node by the id sequence from the document root: "/o1/i1/p1".
// Both carry a distinguished null value, which the operators return
// in-band rather than signalling errors.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xmlevt {

enum class Axis { Child, Attribute };
enum class PathKind { Absolute, Relative };

// One location step: an element/attribute name test or text().
struct Step {
    Axis axis = Axis::Child;
    bool text = false;          // text() test, child axis only
    std::string name;           // QName, empty for text()

    static Step element(std::string n) { return Step{Axis::Child, false, std::move(n)}; }
    static Step attribute(std::string n) { return Step{Axis::Attribute, false, std::move(n)}; }
    static Step text_node() { return Step{Axis::Child, true, {}}; }

    friend bool operator==(const Step& a, const Step& b) {
        return a.axis == b.axis && a.text == b.text && a.name == b.name;
    }
    friend bool operator!=(const Step& a, const Step& b) { return !(a == b); }
};

class PathSyntaxError : public std::runtime_error {
public:
    PathSyntaxError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)),
          pos(position) {}
    std::size_t pos;
};

class PathType {
public:
    PathType() = default;       // the null value

    PathType(PathKind kind, std::vector<Step> steps)
        : null_(false), kind_(kind), steps_(std::move(steps)) {
        if (steps_.empty())
            throw std::invalid_argument("non-null path type requires at least one step");
        for (std::size_t i = 0; i < steps_.size(); ++i) {
            if (steps_[i].text && steps_[i].axis == Axis::Attribute)
                throw std::invalid_argument("attribute axis cannot carry a text() test");
            if (steps_[i].text && i + 1 != steps_.size())
                throw std::invalid_argument("text() step must be the last step");
        }
    }

    static PathType null() { return PathType(); }

    bool is_null() const { return null_; }
    PathKind kind() const { return kind_; }
    bool absolute() const { return !null_ && kind_ == PathKind::Absolute; }
    bool relative() const { return !null_ && kind_ == PathKind::Relative; }
    const std::vector<Step>& steps() const { return steps_; }
    std::size_t size() const { return steps_.size(); }

    friend bool operator==(const PathType& a, const PathType& b) {
        if (a.null_ || b.null_) return a.null_ && b.null_;
        return a.kind_ == b.kind_ && a.steps_ == b.steps_;
    }
    friend bool operator!=(const PathType& a, const PathType& b) { return !(a == b); }

private:
    bool null_ = true;
    PathKind kind_ = PathKind::Relative;
    std::vector<Step> steps_;
};

namespace detail {

// All offsets c at which inner's steps occur contiguously inside outer's.
inline std::vector<std::size_t> match_offsets(const PathType& inner, const PathType& outer) {
    std::vector<std::size_t> offsets;
    const auto& in = inner.steps();
    const auto& out = outer.steps();
    if (in.size() > out.size()) return offsets;
    for (std::size_t c = 0; c + in.size() <= out.size(); ++c) {
        bool all = true;
        for (std::size_t i = 0; i < in.size(); ++i)
            if (!(in[i] == out[c + i])) { all = false; break; }
        if (all) offsets.push_back(c);
    }
    return offsets;
}

}  // namespace detail

// pt1 is uniquely contained in pt2.  The containment offset must be
// unambiguous; an absolute path is never contained in a relative one.
inline bool contained_in(const PathType& pt1, const PathType& pt2) {
    if (pt1.is_null() || pt2.is_null()) return false;
    if (pt1.absolute() && pt2.relative()) return false;
    auto offsets = detail::match_offsets(pt1, pt2);
    if (offsets.size() != 1) return false;
    std::size_t c = offsets.front();
    std::size_t m = pt1.size(), n = pt2.size();
    if (pt1.absolute() && pt2.absolute()) return c == 0 && m < n;
    if (pt1.relative() && pt2.relative()) return m < n;
    return true;  // relative pt1 inside absolute pt2; m == n allowed
}

// Relative pt1 matches the ending of pt2.
inline bool ends(const PathType& pt1, const PathType& pt2) {
    if (pt1.is_null() || pt2.is_null()) return false;
    if (!pt1.relative()) return false;
    std::size_t m = pt1.size(), n = pt2.size();
    if (!(m < n || (pt2.absolute() && m == n))) return false;
    for (std::size_t i = 0; i < m; ++i)
        if (!(pt1.steps()[i] == pt2.steps()[n - m + i])) return false;
    return true;
}

// Left-bound intersection: the longest common step prefix.  Commutative.
// The result is absolute when the operand kinds differ.
inline PathType common_prefix(const PathType& pt1, const PathType& pt2) {
    if (pt1.is_null() || pt2.is_null()) return PathType::null();
    std::size_t limit = std::min(pt1.size(), pt2.size());
    std::size_t j = 0;
    while (j < limit && pt1.steps()[j] == pt2.steps()[j]) ++j;
    if (j == 0) return PathType::null();
    PathKind kind = pt1.kind() == pt2.kind() ? pt1.kind() : PathKind::Absolute;
    std::vector<Step> steps(pt1.steps().begin(), pt1.steps().begin() + static_cast<long>(j));
    return PathType(kind, std::move(steps));
}

// Absolute-path intersection: anchors pt1 inside absolute pt2, yielding the
// absolute prefix of pt2 that ends where pt2 contains pt1.  Not commutative.
inline PathType anchor(const PathType& pt1, const PathType& pt2) {
    if (pt1.is_null() || pt2.is_null()) return PathType::null();
    if (!pt2.absolute())
        throw std::invalid_argument("anchor: second operand must be absolute");
    std::size_t j = 0;
    if (pt1 == pt2) {
        j = pt2.size();
    } else if (contained_in(pt1, pt2)) {
        j = detail::match_offsets(pt1, pt2).front() + pt1.size();
    } else {
        return PathType::null();
    }
    std::vector<Step> steps(pt2.steps().begin(), pt2.steps().begin() + static_cast<long>(j));
    return PathType(PathKind::Absolute, std::move(steps));
}

using NodeId = std::string;

// Instance-level address: one node id per step, the first addressing the
// document root.  Projection results may carry a relative path type; an
// instance that addresses a real document node is always absolute.
class PathInstance {
public:
    PathInstance() = default;   // the null value

    PathInstance(PathType pt, std::vector<NodeId> ids)
        : null_(false), pt_(std::move(pt)), ids_(std::move(ids)) {
        if (pt_.is_null())
            throw std::invalid_argument("path instance requires a non-null path type");
        if (ids_.size() != pt_.size())
            throw std::invalid_argument("path instance id count must match step count");
    }

    static PathInstance null() { return PathInstance(); }

    bool is_null() const { return null_; }
    const PathType& type() const { return pt_; }
    const std::vector<NodeId>& ids() const { return ids_; }
    const NodeId& last() const { return ids_.back(); }

    friend bool operator==(const PathInstance& a, const PathInstance& b) {
        if (a.null_ || b.null_) return a.null_ && b.null_;
        return a.pt_ == b.pt_ && a.ids_ == b.ids_;
    }
    friend bool operator!=(const PathInstance& a, const PathInstance& b) { return !(a == b); }

private:
    bool null_ = true;
    PathType pt_;
    std::vector<NodeId> ids_;
};

// Projection of pi onto pt: the id slice addressed by pt inside pi.
inline PathInstance project(const PathType& pt, const PathInstance& pi) {
    if (pt.is_null() || pi.is_null()) return PathInstance::null();
    if (pt == pi.type()) return PathInstance(pt, pi.ids());
    if (!contained_in(pt, pi.type())) return PathInstance::null();
    std::size_t c = detail::match_offsets(pt, pi.type()).front();
    std::vector<NodeId> ids(pi.ids().begin() + static_cast<long>(c),
                            pi.ids().begin() + static_cast<long>(c + pt.size()));
    return PathInstance(pt, std::move(ids));
}

// ---------------------------------------------------------------------------
// Parsing and rendering
// ---------------------------------------------------------------------------

namespace detail {

inline bool name_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
inline bool name_char(char c) {
    return name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.' || c == ':';
}

}  // namespace detail

// Grammar: optional leading "/", then "/"-separated steps; "@name" for
// attribute steps, "text()" for text steps.  Wildcard steps are rejected.
inline PathType parse_path_type(const std::string& text) {
    std::size_t pos = 0;
    const std::size_t n = text.size();
    if (n == 0) throw PathSyntaxError("empty path type", 0);

    PathKind kind = PathKind::Relative;
    if (text[0] == '/') { kind = PathKind::Absolute; pos = 1; }

    std::vector<Step> steps;
    bool done = false;
    while (!done) {
        if (pos >= n) throw PathSyntaxError("empty step", pos);
        if (text[pos] == '*')
            throw PathSyntaxError("wildcard steps are not supported", pos);
        if (text[pos] == '@') {
            ++pos;
            std::size_t start = pos;
            while (pos < n && detail::name_char(text[pos])) ++pos;
            if (pos == start || !detail::name_start(text[start]))
                throw PathSyntaxError("expected attribute name", start);
            steps.push_back(Step::attribute(text.substr(start, pos - start)));
        } else if (text.compare(pos, 6, "text()") == 0) {
            pos += 6;
            steps.push_back(Step::text_node());
        } else {
            std::size_t start = pos;
            while (pos < n && detail::name_char(text[pos])) ++pos;
            if (pos == start || !detail::name_start(text[start]))
                throw PathSyntaxError("expected step", start);
            steps.push_back(Step::element(text.substr(start, pos - start)));
        }
        if (pos < n) {
            if (text[pos] != '/')
                throw PathSyntaxError("unexpected character", pos);
            const Step& prev = steps.back();
            if (prev.text || prev.axis == Axis::Attribute)
                throw PathSyntaxError("no step may follow a text() or attribute step", pos);
            ++pos;
        } else {
            done = true;
        }
    }
    return PathType(kind, std::move(steps));
}

inline std::string to_string(const Step& s) {
    if (s.text) return "text()";
    if (s.axis == Axis::Attribute) return "@" + s.name;
    return s.name;
}

inline std::string to_string(const PathType& pt) {
    if (pt.is_null()) return "null";
    std::string out;
    if (pt.absolute()) out += '/';
    for (std::size_t i = 0; i < pt.size(); ++i) {
        if (i) out += '/';
        out += to_string(pt.steps()[i]);
    }
    return out;
}

inline std::string to_string(const PathInstance& pi) {
    if (pi.is_null()) return "null";
    std::string out;
    if (pi.type().absolute()) out += '/';
    for (std::size_t i = 0; i < pi.ids().size(); ++i) {
        if (i) out += '/';
        out += pi.ids()[i];
    }
    return out;
}

}  // namespace xmlevt
