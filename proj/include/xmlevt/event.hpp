// Primitive and composite mutation events, their types, type compatibility,
// and occurrence intervals.
//
// An event type pairs an operation (or a composite name) with a path type.
// Concrete events carry absolute paths; node types in event trees may be
// relative or wildcarded, and an event is stored wherever its dynamic type
// is compatible to the node's static type.

#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "path.hpp"

namespace xmlevt {

using Tick = std::int64_t;
using EventId = std::int64_t;

enum class Op { Ins, Upd, Del, Star };  // Star is legal in types only

inline std::string to_string(Op op) {
    switch (op) {
        case Op::Ins: return "ins";
        case Op::Upd: return "upd";
        case Op::Del: return "del";
        default: return "*";
    }
}

struct PrimitiveEventType {
    Op op = Op::Star;
    PathType path;
};

struct CompositeEventType {
    std::string name;  // "*" acts as the wildcard
    PathType path;
};

// et1 (an event's dynamic type) is compatible to et2 (a node's static type).
inline bool compatible_to(const PrimitiveEventType& et1, const PrimitiveEventType& et2) {
    if (!(et1.op == et2.op || et2.op == Op::Star)) return false;
    return ends(et2.path, et1.path) || et2.path == et1.path;
}

inline bool compatible_to(const CompositeEventType& et1, const CompositeEventType& et2) {
    if (!(et1.name == et2.name || et2.name == "*")) return false;
    return ends(et2.path, et1.path) || et2.path == et1.path;
}

// Occurrence interval in logical ticks, closed on both ends.
struct Interval {
    Tick start = 0;
    Tick end = 0;
    friend bool operator==(Interval a, Interval b) { return a.start == b.start && a.end == b.end; }
};

// [t'a,t''a] < [t'b,t''b] iff t''a < t'b (strict).
inline bool before(Interval a, Interval b) { return a.end < b.start; }

class Event;
using EventPtr = std::shared_ptr<const Event>;

// One mutation event, primitive or composite.  Immutable once built.
//
// A composite raised by a zero-lower-bound multiplicity operator has no
// constituents; it is "vacuous": it occupies the point interval of its
// raise tick but contributes no occurrence span to enclosing composites.
class Event {
public:
    enum class Kind { Primitive, Composite };

    static EventPtr primitive(EventId id, Tick ts, Op op, PathType path, PathInstance pi) {
        if (op == Op::Star) throw std::invalid_argument("concrete event cannot carry *");
        if (!path.absolute()) throw std::invalid_argument("event path type must be absolute");
        if (pi.is_null() || pi.type() != path)
            throw std::invalid_argument("event instance must match the event path type");
        if (ts < 1) throw std::invalid_argument("event tick must be >= 1");
        return EventPtr(new Event(id, ts, Kind::Primitive, op, {}, std::move(path),
                                  std::move(pi), {}));
    }

    static EventPtr composite(EventId id, Tick raised, std::string name, PathType path,
                              PathInstance pi, std::vector<EventPtr> constituents) {
        if (name.empty() || name == "*")
            throw std::invalid_argument("composite event requires a concrete name");
        if (!path.absolute()) throw std::invalid_argument("event path type must be absolute");
        if (pi.is_null() || pi.type() != path)
            throw std::invalid_argument("event instance must match the event path type");
        std::set<EventId> seen;
        for (const auto& c : constituents)
            if (!seen.insert(c->id()).second)
                throw std::invalid_argument("constituent events must be distinct");
        return EventPtr(new Event(id, raised, Kind::Composite, Op::Star, std::move(name),
                                  std::move(path), std::move(pi), std::move(constituents)));
    }

    EventId id() const { return id_; }
    Tick tick() const { return ts_; }   // occurrence tick / raise tick
    Kind kind() const { return kind_; }
    bool is_primitive() const { return kind_ == Kind::Primitive; }
    bool is_composite() const { return kind_ == Kind::Composite; }
    Op op() const { return op_; }
    const std::string& name() const { return name_; }
    const PathType& type_path() const { return path_; }
    const PathInstance& instance() const { return pi_; }
    const std::vector<EventPtr>& constituents() const { return cevts_; }

    PrimitiveEventType primitive_type() const { return {op_, path_}; }
    CompositeEventType composite_type() const { return {name_, path_}; }

    Interval interval() const { return interval_; }
    bool vacuous() const { return vacuous_; }

    // Transitive primitive constituents, ascending by id.
    std::vector<EventId> flattened() const {
        std::vector<EventId> out;
        flatten_into(out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    Event(EventId id, Tick ts, Kind kind, Op op, std::string name, PathType path,
          PathInstance pi, std::vector<EventPtr> cevts)
        : id_(id), ts_(ts), kind_(kind), op_(op), name_(std::move(name)),
          path_(std::move(path)), pi_(std::move(pi)), cevts_(std::move(cevts)) {
        if (kind_ == Kind::Primitive) {
            vacuous_ = false;
            interval_ = {ts_, ts_};
        } else {
            // Span of the non-vacuous constituents; vacuous constituents carry
            // no occurrence content of their own.
            bool any = false;
            Interval acc{0, 0};
            for (const auto& c : cevts_) {
                if (c->vacuous()) continue;
                Interval ci = c->interval();
                if (!any) { acc = ci; any = true; }
                else {
                    acc.start = std::min(acc.start, ci.start);
                    acc.end = std::max(acc.end, ci.end);
                }
            }
            vacuous_ = !any;
            interval_ = any ? acc : Interval{ts_, ts_};
        }
    }

    void flatten_into(std::vector<EventId>& out) const {
        if (kind_ == Kind::Primitive) { out.push_back(id_); return; }
        for (const auto& c : cevts_) c->flatten_into(out);
    }

    EventId id_;
    Tick ts_;
    Kind kind_;
    Op op_;
    std::string name_;
    PathType path_;
    PathInstance pi_;
    std::vector<EventPtr> cevts_;
    Interval interval_{0, 0};
    bool vacuous_ = false;
};

inline Interval event_interval(const Event& e) { return e.interval(); }

// CLI/log rendering:
//   prim ins(/order/item) at /o1/i1 id=7 t=3
//   raise Name(/order/item) at /o1/i1 cevts=[3,5,7] t=6
inline std::string render_primitive(const Event& e) {
    return "prim " + to_string(e.op()) + "(" + to_string(e.type_path()) + ") at " +
           to_string(e.instance()) + " id=" + std::to_string(e.id()) +
           " t=" + std::to_string(e.tick());
}

inline std::string render_raise(const Event& e) {
    std::string ids;
    for (EventId id : e.flattened()) {
        if (!ids.empty()) ids += ',';
        ids += std::to_string(id);
    }
    return "raise " + e.name() + "(" + to_string(e.type_path()) + ") at " +
           to_string(e.instance()) + " cevts=[" + ids + "] t=" + std::to_string(e.tick());
}

// Shared id source: primitives and composites draw from the same counter so
// identifier order equals raise order at equal ticks.
class EventIdAllocator {
public:
    EventId allocate() { return next_++; }
    void bump_past(EventId id) { if (id >= next_) next_ = id + 1; }
    EventId peek() const { return next_; }

private:
    EventId next_ = 1;
};

}  // namespace xmlevt
