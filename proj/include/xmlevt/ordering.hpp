// Distributed event ordering: Lamport clocks, time service levels, and the
// causal/temporal comparators over event traces.
//
// Each location provides one time service level.  tsl-1 offers a logical
// clock only, tsl-2 adds an unsynchronized physical clock, tsl-3 a physical
// clock synchronized within a named group to precision pi.  Events at
// different tsl-3 locations sharing a group can be ordered temporally when
// they are at least two global clock ticks apart; everything else falls
// back to causal order via the happened-before relation.

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "event.hpp"

namespace xmlevt {

enum class Tsl { Tsl1 = 1, Tsl2 = 2, Tsl3 = 3 };

using LocationId = std::string;
using GroupId = std::string;
using Millis = std::int64_t;

struct Timestamp {
    std::int64_t lt = 0;                 // logical clock count, >= 1
    std::optional<Millis> pt;            // physical count, tsl-2/3 only
    LocationId pid;
    Tsl tsl = Tsl::Tsl1;
    std::set<GroupId> gids;              // non-empty only at tsl-3
};

// Per-location clock state.  The physical clock source is injected so tests
// and trace replay can supply exact readings.
struct LocationState {
    LocationId pid;
    Tsl tsl = Tsl::Tsl1;
    std::set<GroupId> gids;
    Millis local_granularity = 1;        // g_l in ms
    std::function<Millis()> clock;
    std::int64_t lt = 0;
};

inline Timestamp tick_local(LocationState& loc) {
    Timestamp ts;
    ts.lt = ++loc.lt;
    if (loc.tsl != Tsl::Tsl1) {
        if (!loc.clock) throw std::logic_error("location " + loc.pid + " has no clock source");
        ts.pt = loc.clock();
    }
    ts.pid = loc.pid;
    ts.tsl = loc.tsl;
    if (loc.tsl == Tsl::Tsl3) ts.gids = loc.gids;
    return ts;
}

// Lamport receive rule: the local clock jumps past the imported timestamp.
inline Timestamp tick_import(LocationState& loc, const Timestamp& remote) {
    if (remote.pid == loc.pid)
        throw std::invalid_argument("import must wrap an event from another location");
    loc.lt = std::max(loc.lt, remote.lt);
    return tick_local(loc);
}

struct GroupConfig {
    GroupId gid;
    Millis precision = 0;                       // pi in ms
    std::map<LocationId, Millis> granularities; // g_l per member
};

// Smallest multiple of the coarsest member granularity strictly above pi.
inline Millis group_granularity(const GroupConfig& g) {
    if (g.granularities.empty())
        throw std::invalid_argument("group " + g.gid + " has no members");
    if (g.precision <= 0)
        throw std::invalid_argument("group " + g.gid + " needs a positive precision");
    Millis gl = 0;
    for (const auto& [pid, v] : g.granularities) {
        if (v <= 0) throw std::invalid_argument("granularity must be positive for " + pid);
        gl = std::max(gl, v);
    }
    Millis gg = gl;
    while (gg <= g.precision) gg += gl;
    return gg;
}

struct TraceEvent {
    std::string eid;
    Timestamp ts;
    std::optional<std::string> wraps;    // eid of the wrapped remote event
};

// An ordered set of trace events with per-eid lookup.
class Trace {
public:
    void add(TraceEvent e) {
        if (index_.count(e.eid)) throw std::invalid_argument("duplicate event id " + e.eid);
        index_[e.eid] = events_.size();
        events_.push_back(std::move(e));
    }

    const TraceEvent& at(const std::string& eid) const {
        auto it = index_.find(eid);
        if (it == index_.end()) throw std::out_of_range("unknown event id " + eid);
        return events_[it->second];
    }

    bool has(const std::string& eid) const { return index_.count(eid) != 0; }
    const std::vector<TraceEvent>& events() const { return events_; }

private:
    std::vector<TraceEvent> events_;
    std::map<std::string, std::size_t> index_;
};

namespace detail {

// Reachability through same-location clock order and wraps edges, restricted
// to events accepted by `visible`.
inline bool reachable(const Trace& trace, const TraceEvent& from, const TraceEvent& to,
                      const std::function<bool(const TraceEvent&)>& visible) {
    std::deque<const TraceEvent*> queue{&from};
    std::set<std::string> seen{from.eid};
    while (!queue.empty()) {
        const TraceEvent* cur = queue.front();
        queue.pop_front();
        if (cur->eid == to.eid) return true;
        for (const auto& next : trace.events()) {
            if (!visible(next) || seen.count(next.eid)) continue;
            bool edge = false;
            if (next.ts.pid == cur->ts.pid && cur->ts.lt < next.ts.lt) edge = true;
            else if (next.wraps && *next.wraps == cur->eid) edge = true;
            if (edge) {
                seen.insert(next.eid);
                queue.push_back(&next);
            }
        }
    }
    return false;
}

}  // namespace detail

// Lamport's happened-before: same-location order, imports, and transitivity.
inline bool happened_before(const Trace& trace, const std::string& e1, const std::string& e2) {
    const TraceEvent& a = trace.at(e1);
    const TraceEvent& b = trace.at(e2);
    if (a.eid == b.eid) return false;
    return detail::reachable(trace, a, b, [](const TraceEvent&) { return true; });
}

enum class Relation { Before, After, Equal, Concurrent };
enum class OrderKind { Causal, Temporal };
enum class OrderMode { Default, Causal, Temporal };

struct OrderResult {
    Relation relation = Relation::Concurrent;
    OrderKind kind = OrderKind::Causal;
};

inline std::string to_string(Relation r) {
    switch (r) {
        case Relation::Before: return "<";
        case Relation::After: return ">";
        case Relation::Equal: return "=";
        default: return "||";
    }
}

inline std::string to_string(OrderKind k) {
    return k == OrderKind::Causal ? "causal" : "temporal";
}

namespace detail {

template <typename T>
inline Relation compare_scalar(T a, T b) {
    if (a < b) return Relation::Before;
    if (a > b) return Relation::After;
    return Relation::Equal;
}

inline OrderResult order_impl(const Trace& trace, const std::map<GroupId, GroupConfig>& groups,
                              const std::string& e1, const std::string& e2, OrderMode mode,
                              const std::function<bool(const TraceEvent&)>& visible) {
    const TraceEvent& a = trace.at(e1);
    const TraceEvent& b = trace.at(e2);

    if (a.ts.pid == b.ts.pid) {
        if (a.ts.tsl == Tsl::Tsl3)
            return {compare_scalar(*a.ts.pt, *b.ts.pt), OrderKind::Temporal};
        return {compare_scalar(a.ts.lt, b.ts.lt), OrderKind::Causal};
    }

    std::set<GroupId> shared;
    for (const auto& g : a.ts.gids)
        if (b.ts.gids.count(g)) shared.insert(g);

    bool temporal_possible = a.ts.tsl == Tsl::Tsl3 && b.ts.tsl == Tsl::Tsl3 && !shared.empty();
    if (temporal_possible && mode != OrderMode::Causal) {
        auto it = groups.find(*shared.begin());
        if (it == groups.end()) throw std::out_of_range("unknown group " + *shared.begin());
        Millis gg = group_granularity(it->second);
        std::int64_t ta = *a.ts.pt / gg;
        std::int64_t tb = *b.ts.pt / gg;
        if (tb - ta >= 2) return {Relation::Before, OrderKind::Temporal};
        if (ta - tb >= 2) return {Relation::After, OrderKind::Temporal};
        return {Relation::Concurrent, OrderKind::Temporal};
    }

    // Causal order (also the fallback when temporal order is unavailable).
    if (a.ts.lt < b.ts.lt && detail::reachable(trace, a, b, visible))
        return {Relation::Before, OrderKind::Causal};
    if (b.ts.lt < a.ts.lt && detail::reachable(trace, b, a, visible))
        return {Relation::After, OrderKind::Causal};
    return {Relation::Concurrent, OrderKind::Causal};
}

}  // namespace detail

inline OrderResult order_events(const Trace& trace, const std::map<GroupId, GroupConfig>& groups,
                                const std::string& e1, const std::string& e2,
                                OrderMode mode = OrderMode::Default) {
    return detail::order_impl(trace, groups, e1, e2, mode,
                              [](const TraceEvent&) { return true; });
}

// Causal order as seen from one document: reachability may only pass through
// the visible events.  Both queried events must be visible.
inline OrderResult order_in_view(const Trace& trace, const std::set<std::string>& visible,
                                 const std::string& e1, const std::string& e2) {
    if (!visible.count(e1) || !visible.count(e2))
        throw std::invalid_argument("queried events must be in the visible set");
    const TraceEvent& a = trace.at(e1);
    const TraceEvent& b = trace.at(e2);
    if (a.eid == b.eid) return {Relation::Equal, OrderKind::Causal};
    if (a.ts.pid == b.ts.pid)
        return {detail::compare_scalar(a.ts.lt, b.ts.lt), OrderKind::Causal};
    auto vis = [&](const TraceEvent& e) { return visible.count(e.eid) != 0; };
    if (a.ts.lt < b.ts.lt && detail::reachable(trace, a, b, vis))
        return {Relation::Before, OrderKind::Causal};
    if (b.ts.lt < a.ts.lt && detail::reachable(trace, b, a, vis))
        return {Relation::After, OrderKind::Causal};
    return {Relation::Concurrent, OrderKind::Causal};
}

}  // namespace xmlevt
