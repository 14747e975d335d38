// Event trees and event graphs: the composite-event detection machinery.
//
// A tree realizes one composite event type.  Leaves store occurred events
// whose dynamic type is compatible to the leaf's static type; operator nodes
// (conjunction, disjunction, sequence, multiplicity) combine stored events
// into composites under a consumption context, optionally restricted to
// hierarchically related events, and gated by termination modes/conditions.
// All trees form the event graph, processed in dependency order so that a
// composite raised by one tree can be consumed by its dependents within the
// same pass.
//
// Semantics notes pinned by the worked examples this implementation
// reproduces:
//  - Contexts select per hierarchical group when the hierarchical flag is
//    on, globally otherwise.
//  - The sequence operator compares occurrence intervals in hierarchical
//    mode and detection ticks otherwise (the classic Snoop behavior the
//    non-hierarchical traces exhibit).
//  - A multiplicity composite integrates later matching events while it is
//    unconsumed; once consumed or full, accumulation starts over.
//  - A zero-lower-bound multiplicity node raises an empty composite per
//    matching path instance on creation, registration, and flush; after the
//    composite is consumed the slot is refilled lazily.

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "condition.hpp"
#include "document.hpp"
#include "event.hpp"
#include "path.hpp"

namespace xmlevt {

enum class Context { Cumulative, Chronicle, Recent, Continuous, Unrestricted };
enum class TerminationMode { Earliest, NonLocal, Custom };
enum class OperatorKind { Conjunction, Disjunction, Sequence, Multiplicity };

inline std::string to_string(Context c) {
    switch (c) {
        case Context::Cumulative: return "cumulative";
        case Context::Chronicle: return "chronicle";
        case Context::Recent: return "recent";
        case Context::Continuous: return "continuous";
        default: return "unrestricted";
    }
}

inline std::string to_string(TerminationMode m) {
    switch (m) {
        case TerminationMode::Earliest: return "earliest";
        case TerminationMode::NonLocal: return "nonlocal";
        default: return "custom";
    }
}

class EngineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Static type of an event type node.  A star leaf accepts primitive events
// of any operation and composite events of any name, filtered by path.
struct LeafType {
    enum class Kind { Primitive, Composite, AnyStar };
    Kind kind = Kind::Primitive;
    Op op = Op::Star;        // Primitive leaves
    std::string name;        // Composite leaves
    PathType path;

    bool accepts(const Event& e) const {
        switch (kind) {
            case Kind::Primitive:
                return e.is_primitive() && compatible_to(e.primitive_type(), {op, path});
            case Kind::Composite:
                return e.is_composite() && compatible_to(e.composite_type(), {name, path});
            default:
                if (e.is_primitive())
                    return compatible_to(e.primitive_type(), {Op::Star, path});
                return compatible_to(e.composite_type(), {"*", path});
        }
    }

    std::string label() const {
        switch (kind) {
            case Kind::Primitive: return to_string(op) + "(" + to_string(path) + ")";
            case Kind::Composite: return name + "(" + to_string(path) + ")";
            default: return "*(" + to_string(path) + ")";
        }
    }
};

struct TreeNode {
    // structure
    bool leaf = false;
    LeafType type;                                // leaves
    OperatorKind op = OperatorKind::Conjunction;  // operators
    long lower = 0, upper = -1;                   // multiplicity bounds, -1 = unbounded
    std::vector<std::unique_ptr<TreeNode>> children;
    int postorder = -1;

    // static composite type path: explicit, or derived bottom-up
    PathType path;
    bool explicit_path = false;

    // operator behavior
    Context context = Context::Chronicle;
    bool hierarchical = true;
    TerminationMode mode = TerminationMode::Earliest;
    std::optional<Condition> cond;

    // runtime state
    std::vector<EventPtr> stored;   // leaf: stored events; operator: unconsumed raises
    std::vector<EventPtr> gained;   // events added during the current pass

    struct Pending {        // detected potential awaiting mode/cond release
        PathInstance anchor;                          // absolute instance for cond
        bool armed = false;                           // non-local trigger seen
        std::vector<std::pair<int, EventId>> terms;   // (child index, terminator id)
    };
    std::map<std::string, Pending> pending;           // keyed by hierarchical group

    std::string op_label() const {
        switch (op) {
            case OperatorKind::Conjunction: return "and";
            case OperatorKind::Disjunction: return "or";
            case OperatorKind::Sequence: return "seq";
            default:
                return "mult[" + std::to_string(lower) + "," +
                       (upper < 0 ? std::string("inf") : std::to_string(upper)) + "]";
        }
    }
    std::string label() const { return leaf ? type.label() : op_label(); }
};

struct EventTree {
    std::string name;
    std::unique_ptr<TreeNode> root;
    std::vector<TreeNode*> order;  // postorder

    CompositeEventType type() const { return {name, root->path}; }

    void index() {
        order.clear();
        int n = 0;
        std::function<void(TreeNode*)> walk = [&](TreeNode* node) {
            for (auto& c : node->children) walk(c.get());
            node->postorder = ++n;
            order.push_back(node);
        };
        walk(root.get());
    }
};

// Bottom-up path type derivation and validity checks.  Throws EngineError
// naming the offending node and rule.
inline void validate_tree(EventTree& tree) {
    tree.index();
    for (TreeNode* n : tree.order) {
        std::string where = tree.name + " node " + std::to_string(n->postorder) +
                            " (" + n->label() + ")";
        if (n->leaf) {
            n->path = n->type.path;
            if (n->path.is_null() || n->path.size() == 0)
                throw EngineError(where + ": leaf path type must be non-null");
            continue;
        }
        switch (n->op) {
            case OperatorKind::Sequence:
                if (n->children.size() != 2)
                    throw EngineError(where + ": sequence takes exactly two operands");
                break;
            case OperatorKind::Multiplicity:
                if (n->children.size() != 1)
                    throw EngineError(where + ": multiplicity takes exactly one operand");
                if (n->lower < 0 || (n->upper >= 0 && n->upper < n->lower))
                    throw EngineError(where + ": multiplicity bounds require 0 <= l <= u");
                break;
            default:
                if (n->children.size() < 2)
                    throw EngineError(where + ": operator takes at least two operands");
        }
        if (!n->explicit_path) {
            if (n->op == OperatorKind::Multiplicity) {
                const PathType& cp = n->children.front()->path;
                if (cp.size() < 2)
                    throw EngineError(where + ": cannot derive path type; child path " +
                                      to_string(cp) + " has no parent step");
                std::vector<Step> steps(cp.steps().begin(), cp.steps().end() - 1);
                n->path = PathType(cp.kind(), std::move(steps));
            } else {
                PathType acc = n->children.front()->path;
                for (std::size_t i = 1; i < n->children.size(); ++i)
                    acc = common_prefix(acc, n->children[i]->path);
                n->path = acc;
            }
        }
        if (n->path.is_null() || n->path.size() == 0)
            throw EngineError(where + ": path type derivation yields null; "
                              "specify the path type explicitly");
        for (const auto& c : n->children) {
            if (n->path.absolute() && c->path.absolute()) {
                if (common_prefix(n->path, c->path).is_null())
                    throw EngineError(where + ": no common prefix with child path " +
                                      to_string(c->path));
            } else if (!n->path.absolute() && c->path.absolute()) {
                if (!contained_in(n->path, c->path))
                    throw EngineError(where + ": path type " + to_string(n->path) +
                                      " is not contained in child path " + to_string(c->path));
            }
        }
    }
}

struct RaiseInfo {
    EventPtr event;
    int tree = -1;
    int node_postorder = -1;
    bool root = false;
};
using RaiseListener = std::function<void(const RaiseInfo&)>;

struct EventBrief {
    EventId id = 0;
    Tick tick = 0;
    bool composite = false;
    std::string at;
    std::vector<EventId> constituents;  // direct, ascending
    std::vector<EventId> flattened;     // transitive primitives, ascending
};

struct NodeState {
    int postorder = -1;
    std::string label;
    bool leaf = false;
    std::vector<EventBrief> events;
};

struct TreeState {
    std::string name;
    std::vector<NodeState> nodes;
};

class EventGraph {
public:
    EventGraph(Document& doc, std::vector<std::unique_ptr<EventTree>> trees)
        : doc_(&doc), ids_(doc.id_allocator()), trees_(std::move(trees)) {
        std::set<std::string> names;
        for (auto& t : trees_) {
            validate_tree(*t);
            if (t->name.empty() || t->name == "*")
                throw EngineError("composite event type requires a concrete name");
            if (!names.insert(t->name).second)
                throw EngineError("duplicate composite event type " + t->name);
        }
        rebuild_dependencies();
    }

    std::size_t size() const { return trees_.size(); }
    const EventTree& tree(std::size_t i) const { return *trees_[i]; }
    const std::vector<int>& dependents_of(int i) const { return dependents_[i]; }

    void set_raise_listener(RaiseListener fn) { listener_ = std::move(fn); }

    bool is_open() const { return open_ && !closed_; }

    // Registers the graph with its document.  Zero-lower-bound multiplicity
    // operators raise for every matching instance already in the document.
    std::vector<EventPtr> open() {
        if (open_) throw EngineError("event graph is already open");
        open_ = true;
        current_tick_ = doc_->tick();
        return run_pass(nullptr, Pass::Open);
    }

    std::vector<EventPtr> process(const EventPtr& primitive) {
        require_open();
        ids_->bump_past(primitive->id());
        current_tick_ = primitive->tick();
        return run_pass(primitive, Pass::Event);
    }

    // Releases pending potentials held back by non-local/custom termination
    // modes or by a not-yet-satisfied termination condition.
    std::vector<EventPtr> flush() {
        require_open();
        return run_pass(nullptr, Pass::Flush);
    }

    // Flush, then take the graph out of order; remaining events are waived.
    std::vector<EventPtr> close() {
        require_open();
        auto raised = run_pass(nullptr, Pass::Flush);
        closed_ = true;
        for (auto& t : trees_)
            for (TreeNode* n : t->order) {
                n->stored.clear();
                n->gained.clear();
                n->pending.clear();
            }
        return raised;
    }

    // Stores one event into every compatible leaf of every tree, without
    // evaluating operators (the storage half of a processing pass).
    void store_event(const EventPtr& e) {
        require_open();
        for (auto& t : trees_)
            for (TreeNode* n : t->order)
                if (n->leaf && n->type.accepts(*e)) n->stored.push_back(e);
    }

    std::vector<TreeState> dump() const {
        std::vector<TreeState> out;
        for (const auto& t : trees_) {
            TreeState ts;
            ts.name = t->name;
            for (TreeNode* n : t->order) {
                NodeState ns;
                ns.postorder = n->postorder;
                ns.label = n->label();
                ns.leaf = n->leaf;
                for (const auto& ev : n->stored) ns.events.push_back(brief(*ev));
                ts.nodes.push_back(std::move(ns));
            }
            out.push_back(std::move(ts));
        }
        return out;
    }

    // Drops every tree contained in the transitive closure of another tree
    // in the set, so each tree is processed exactly once, as late as possible.
    std::vector<int> purge_set(const std::vector<int>& T) const {
        std::vector<int> out;
        for (std::size_t i = 0; i < T.size(); ++i) {
            bool drop = false;
            for (std::size_t j = 0; !drop && j < T.size(); ++j)
                if (i != j && in_closure(T[j], T[i])) drop = true;
            if (!drop) out.push_back(T[i]);
        }
        return out;
    }

    const std::vector<int>& last_pass_counts() const { return last_counts_; }

private:
    enum class Pass { Open, Event, Flush };

    void require_open() const {
        if (!open_) throw EngineError("event graph is not open");
        if (closed_) throw EngineError("event graph is closed");
    }

    static EventBrief brief(const Event& e) {
        EventBrief b;
        b.id = e.id();
        b.tick = e.tick();
        b.composite = e.is_composite();
        b.at = to_string(e.instance());
        if (e.is_composite()) {
            for (const auto& c : e.constituents()) b.constituents.push_back(c->id());
            std::sort(b.constituents.begin(), b.constituents.end());
            b.flattened = e.flattened();
        } else {
            b.flattened = {e.id()};
        }
        return b;
    }

    // -- dependencies ------------------------------------------------------

    // ta -> tb iff tb has a composite-accepting leaf relatable to ta's type.
    // The schema-level check is widened to either suffix direction so that a
    // relative tree type still orders before a leaf naming it absolutely;
    // extra edges only affect processing order.
    void rebuild_dependencies() {
        const std::size_t n = trees_.size();
        dependents_.assign(n, {});
        for (std::size_t b = 0; b < n; ++b) {
            for (TreeNode* leaf : trees_[b]->order) {
                if (!leaf->leaf || leaf->type.kind == LeafType::Kind::Primitive) continue;
                for (std::size_t a = 0; a < n; ++a) {
                    if (a == b) continue;
                    CompositeEventType ta = trees_[a]->type();
                    bool name_ok = leaf->type.kind == LeafType::Kind::AnyStar ||
                                   leaf->type.name == "*" || leaf->type.name == ta.name;
                    const PathType& lp = leaf->type.path;
                    bool path_ok = lp == ta.path || ends(lp, ta.path) || ends(ta.path, lp);
                    if (name_ok && path_ok) dependents_[a].push_back(static_cast<int>(b));
                }
            }
        }
        for (auto& v : dependents_) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
        // no tree may be in its own closure
        for (std::size_t i = 0; i < n; ++i)
            if (in_closure(static_cast<int>(i), static_cast<int>(i)))
                throw EngineError("event tree " + trees_[i]->name +
                                  " depends on itself (dependency cycle)");
    }

    bool in_closure(int from, int to) const {
        std::vector<int> stack{from};
        std::set<int> seen;
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            for (int next : dependents_[cur]) {
                if (next == to) return true;
                if (seen.insert(next).second) stack.push_back(next);
            }
        }
        return false;
    }

    // -- pass driver -------------------------------------------------------

    std::vector<EventPtr> run_pass(const EventPtr& primitive, Pass pass) {
        std::vector<EventPtr> E;
        if (primitive) E.push_back(primitive);
        raised_roots_.clear();
        last_counts_.assign(trees_.size(), 0);

        std::vector<int> T;
        for (std::size_t i = 0; i < trees_.size(); ++i) {
            bool depends = false;
            for (std::size_t a = 0; !depends && a < trees_.size(); ++a)
                for (int d : dependents_[a])
                    if (d == static_cast<int>(i)) { depends = true; break; }
            if (!depends) T.push_back(static_cast<int>(i));
        }
        while (!T.empty()) {
            for (int t : T) {
                ++last_counts_[t];
                process_tree(t, E, primitive, pass);
            }
            std::vector<int> next;
            for (int t : T)
                for (int d : dependents_[t]) next.push_back(d);
            std::sort(next.begin(), next.end());
            next.erase(std::unique(next.begin(), next.end()), next.end());
            T = purge_set(next);
        }
        return raised_roots_;
    }

    void process_tree(int tidx, std::vector<EventPtr>& E, const EventPtr& primitive, Pass pass) {
        EventTree& tree = *trees_[tidx];
        for (TreeNode* n : tree.order) {
            if (n->leaf) {
                for (const auto& ev : E)
                    if (n->type.accepts(*ev)) {
                        n->stored.push_back(ev);
                        n->gained.push_back(ev);
                    }
            } else {
                evaluate(tree, tidx, *n, primitive, pass);
            }
        }
        TreeNode* root = tree.root.get();
        if (!root->leaf) {
            for (auto& ev : root->stored) {
                E.push_back(ev);
                raised_roots_.push_back(ev);
            }
            root->stored.clear();
        }
        for (TreeNode* n : tree.order) n->gained.clear();
    }

    // -- grouping ----------------------------------------------------------

    // Hierarchical group of an event under a node: the projection of the
    // event's instance onto the node's path type.  Zero-lower-bound
    // multiplicity is instance-based regardless of the hierarchical flag.
    std::optional<std::string> group_key(const TreeNode& node, const Event& e) const {
        bool by_instance = node.hierarchical ||
                           (node.op == OperatorKind::Multiplicity && node.lower == 0);
        if (!by_instance) return std::string();
        PathInstance p = project(node.path, e.instance());
        if (p.is_null()) return std::nullopt;
        return to_string(p.type()) + "=" + to_string(p);
    }

    std::optional<std::string> instance_key(const TreeNode& node, const PathInstance& pi) const {
        bool by_instance = node.hierarchical ||
                           (node.op == OperatorKind::Multiplicity && node.lower == 0);
        if (!by_instance) return std::string();
        PathInstance p = project(node.path, pi);
        if (p.is_null()) return std::nullopt;
        return to_string(p.type()) + "=" + to_string(p);
    }

    std::vector<EventPtr> group_events(const TreeNode& node, const TreeNode& child,
                                       const std::string& key) const {
        std::vector<EventPtr> out;
        for (const auto& ev : child.stored)
            if (auto k = group_key(node, *ev); k && *k == key) out.push_back(ev);
        return out;
    }

    // -- evaluation --------------------------------------------------------

    void evaluate(EventTree& tree, int tidx, TreeNode& node, const EventPtr& primitive,
                  Pass pass) {
        // (iv) zero-lower-bound multiplicity: instance creation
        if (node.op == OperatorKind::Multiplicity && node.lower == 0 && primitive &&
            primitive->is_primitive() && primitive->op() == Op::Ins) {
            const PathType& ept = primitive->type_path();
            if (ends(node.path, ept) || node.path == ept) {
                if (auto key = instance_key(node, primitive->instance())) {
                    Pending& p = node.pending[*key];
                    p.anchor = primitive->instance();
                    attempt_release(tree, tidx, node, *key, pass);
                }
            }
        }

        // (i) a direct child gained an event: normal evaluation per group
        std::map<std::string, std::vector<std::pair<int, EventId>>> batch;
        for (std::size_t ci = 0; ci < node.children.size(); ++ci)
            for (const auto& ev : node.children[ci]->gained)
                if (auto k = group_key(node, *ev))
                    batch[*k].push_back({static_cast<int>(ci), ev->id()});
        for (auto& [key, terms] : batch) {
            if (!detect(node, key)) continue;
            Pending& p = node.pending[key];
            if (p.anchor.is_null()) p.anchor = derive_anchor(node, key);
            for (auto& t : terms) p.terms.push_back(t);
            attempt_release(tree, tidx, node, key, pass);
        }

        // (iii) non-local termination: an event in another subtree releases
        if (node.mode == TerminationMode::NonLocal && primitive) {
            PathInstance proj = project(node.path, primitive->instance());
            std::string ekey;
            bool has_ekey = false;
            if (!proj.is_null()) {
                ekey = to_string(proj.type()) + "=" + to_string(proj);
                has_ekey = true;
            }
            std::vector<std::string> keys;
            for (auto& [key, p] : node.pending)
                if (!has_ekey || key != ekey) { p.armed = true; keys.push_back(key); }
            for (const auto& key : keys) attempt_release(tree, tidx, node, key, pass);
        }

        // (ii) a termination condition and a mutation within the node's path
        if (node.cond && primitive && primitive->is_primitive()) {
            const PathType& ept = primitive->type_path();
            if (contained_in(node.path, ept) || node.path == ept) {
                std::vector<std::string> keys;
                for (auto& [key, p] : node.pending) keys.push_back(key);
                for (const auto& key : keys) attempt_release(tree, tidx, node, key, pass);
            }
        }

        if (pass != Pass::Event) {
            std::vector<std::string> keys;
            for (auto& [key, p] : node.pending) {
                p.armed = true;
                keys.push_back(key);
            }
            for (const auto& key : keys) attempt_release(tree, tidx, node, key, pass);
            if (node.op == OperatorKind::Multiplicity && node.lower == 0)
                restore_instances(tree, tidx, node, pass);
        }
    }

    bool detect(TreeNode& node, const std::string& key) const {
        if (node.op == OperatorKind::Disjunction) return true;
        if (node.op == OperatorKind::Multiplicity) return true;  // thresholds in materialize
        for (const auto& c : node.children)
            if (group_events(node, *c, key).empty()) return false;
        return true;
    }

    PathInstance derive_anchor(const TreeNode& node, const std::string& key) const {
        for (const auto& c : node.children)
            for (const auto& ev : group_events(node, *c, key)) {
                PathType apt = anchor(node.path, ev->instance().type());
                if (apt.is_null()) continue;
                PathInstance pi = project(apt, ev->instance());
                if (!pi.is_null()) return pi;
            }
        return PathInstance::null();
    }

    void attempt_release(EventTree& tree, int tidx, TreeNode& node, const std::string& key,
                         Pass pass) {
        auto it = node.pending.find(key);
        if (it == node.pending.end()) return;
        Pending& p = it->second;
        bool gate = false;
        switch (node.mode) {
            case TerminationMode::Earliest: gate = true; break;
            case TerminationMode::NonLocal: gate = p.armed; break;
            case TerminationMode::Custom: gate = false; break;
        }
        if (pass == Pass::Flush) gate = true;
        if (!gate) return;
        if (node.cond) {
            if (p.anchor.is_null() || !doc_->exists(p.anchor.last())) return;
            if (!eval_condition(*doc_, p.anchor, *node.cond)) return;
        }
        int raised = materialize(tree, tidx, node, key, p);
        if (raised > 0) node.pending.erase(key);
    }

    int materialize(EventTree& tree, int tidx, TreeNode& node, const std::string& key,
                    Pending& p) {
        switch (node.op) {
            case OperatorKind::Multiplicity: return materialize_mult(tree, tidx, node, key, p);
            case OperatorKind::Disjunction: return materialize_disj(tree, tidx, node, key, p);
            default: break;
        }
        switch (node.context) {
            case Context::Chronicle: return materialize_chronicle(tree, tidx, node, key);
            case Context::Cumulative: return materialize_cumulative(tree, tidx, node, key);
            case Context::Recent: return materialize_recent(tree, tidx, node, key);
            case Context::Continuous: return materialize_continuous(tree, tidx, node, key, p);
            default: return materialize_unrestricted(tree, tidx, node, key, p);
        }
    }

    // -- raise plumbing ----------------------------------------------------

    struct RaiseSpec {
        std::vector<EventPtr> cevts;  // ascending by id; empty for vacuous raises
        PathInstance at;              // absolute
    };

    PathInstance derive_instance(const TreeNode& node, const std::vector<EventPtr>& cevts) const {
        for (const auto& ev : cevts) {
            PathType apt = anchor(node.path, ev->instance().type());
            if (apt.is_null()) continue;
            PathInstance pi = project(apt, ev->instance());
            if (!pi.is_null()) return pi;
        }
        return PathInstance::null();
    }

    EventPtr emit(EventTree& tree, int tidx, TreeNode& node, RaiseSpec spec) {
        std::string name = &node == tree.root.get()
                               ? tree.name
                               : tree.name + "." + std::to_string(node.postorder);
        auto ev = Event::composite(ids_->allocate(), current_tick_, std::move(name),
                                   spec.at.type(), spec.at, std::move(spec.cevts));
        node.stored.push_back(ev);
        node.gained.push_back(ev);
        if (listener_) listener_({ev, tidx, node.postorder, &node == tree.root.get()});
        return ev;
    }

    // Same-tick raises of one node are ordered by their constituent id
    // sequences before ids are assigned.
    int emit_sorted(EventTree& tree, int tidx, TreeNode& node, std::vector<RaiseSpec> specs) {
        std::stable_sort(specs.begin(), specs.end(), [](const RaiseSpec& a, const RaiseSpec& b) {
            std::vector<EventId> ia, ib;
            for (const auto& e : a.cevts) ia.push_back(e->id());
            for (const auto& e : b.cevts) ib.push_back(e->id());
            return ia < ib;
        });
        for (auto& s : specs) emit(tree, tidx, node, std::move(s));
        return static_cast<int>(specs.size());
    }

    static void sort_by_id(std::vector<EventPtr>& evts) {
        std::sort(evts.begin(), evts.end(),
                  [](const EventPtr& a, const EventPtr& b) { return a->id() < b->id(); });
    }

    void consume(TreeNode& child, const Event& ev) {
        for (auto it = child.stored.begin(); it != child.stored.end(); ++it)
            if ((*it)->id() == ev.id()) { child.stored.erase(it); return; }
    }

    bool seq_ok(const TreeNode& node, const Event& left, const Event& right) const {
        if (node.hierarchical) return before(left.interval(), right.interval());
        return left.tick() < right.tick();
    }

    // -- conjunction / sequence contexts ------------------------------------

    int materialize_chronicle(EventTree& tree, int tidx, TreeNode& node, const std::string& key) {
        std::vector<RaiseSpec> specs;
        for (;;) {
            std::vector<EventPtr> sel;
            bool complete = true;
            for (const auto& c : node.children) {
                auto evs = group_events(node, *c, key);
                if (evs.empty()) { complete = false; break; }
                sel.push_back(evs.front());  // oldest
            }
            if (!complete) break;
            if (node.op == OperatorKind::Sequence && !seq_ok(node, *sel[0], *sel[1])) break;
            std::vector<EventPtr> cevts = sel;
            sort_by_id(cevts);
            PathInstance at = derive_instance(node, cevts);
            if (at.is_null()) break;
            for (std::size_t ci = 0; ci < node.children.size(); ++ci)
                consume(*node.children[ci], *sel[ci]);
            specs.push_back({std::move(cevts), std::move(at)});
        }
        return emit_sorted(tree, tidx, node, std::move(specs));
    }

    int materialize_cumulative(EventTree& tree, int tidx, TreeNode& node,
                               const std::string& key) {
        std::vector<std::vector<EventPtr>> per_child;
        for (const auto& c : node.children) {
            per_child.push_back(group_events(node, *c, key));
            if (per_child.back().empty()) return 0;
        }
        if (node.op == OperatorKind::Sequence) {
            bool hier = node.hierarchical;
            Tick left_end = 0, right_start = 0;
            bool first = true;
            for (const auto& e : per_child[0]) {
                Tick v = hier ? e->interval().end : e->tick();
                left_end = first ? v : std::max(left_end, v);
                first = false;
            }
            first = true;
            for (const auto& e : per_child[1]) {
                Tick v = hier ? e->interval().start : e->tick();
                right_start = first ? v : std::min(right_start, v);
                first = false;
            }
            if (!(left_end < right_start)) return 0;
        }
        std::vector<EventPtr> cevts;
        for (const auto& evs : per_child) cevts.insert(cevts.end(), evs.begin(), evs.end());
        sort_by_id(cevts);
        PathInstance at = derive_instance(node, cevts);
        if (at.is_null()) return 0;
        for (std::size_t ci = 0; ci < node.children.size(); ++ci)
            for (const auto& e : per_child[ci]) consume(*node.children[ci], *e);
        return emit_sorted(tree, tidx, node, {{std::move(cevts), std::move(at)}});
    }

    // An event that can no longer be the earliest constituent of a future
    // composite is pruned: everything but the newest per child, and the whole
    // right side of a sequence.
    void prune_recent(TreeNode& node, const std::string& key) {
        for (std::size_t ci = 0; ci < node.children.size(); ++ci) {
            auto evs = group_events(node, *node.children[ci], key);
            if (evs.empty()) continue;
            bool right_of_seq = node.op == OperatorKind::Sequence && ci == 1;
            for (std::size_t i = 0; i < evs.size(); ++i)
                if (right_of_seq || i + 1 < evs.size()) consume(*node.children[ci], *evs[i]);
        }
    }

    int materialize_recent(EventTree& tree, int tidx, TreeNode& node, const std::string& key) {
        std::vector<EventPtr> sel;
        for (const auto& c : node.children) {
            auto evs = group_events(node, *c, key);
            if (evs.empty()) return 0;
            sel.push_back(evs.back());  // most recent
        }
        if (node.op == OperatorKind::Sequence && !seq_ok(node, *sel[0], *sel[1])) return 0;
        std::vector<EventPtr> cevts = sel;
        sort_by_id(cevts);
        PathInstance at = derive_instance(node, cevts);
        if (at.is_null()) return 0;
        int raised = emit_sorted(tree, tidx, node, {{std::move(cevts), std::move(at)}});
        prune_recent(node, key);
        return raised;
    }

    int materialize_continuous(EventTree& tree, int tidx, TreeNode& node, const std::string& key,
                               Pending& p) {
        // Terminators are taken against one snapshot of the other children;
        // consumption is applied once, afterwards.
        std::set<EventId> term_ids;
        for (auto& [ci, id] : p.terms) term_ids.insert(id);
        std::vector<std::vector<EventPtr>> snapshot;
        for (const auto& c : node.children) {
            auto evs = group_events(node, *c, key);
            std::vector<EventPtr> keep;
            for (const auto& e : evs)
                if (!term_ids.count(e->id())) keep.push_back(e);
            snapshot.push_back(std::move(keep));
        }
        std::set<EventId> used;
        std::vector<std::pair<int, EventPtr>> removals;  // (child, event)
        std::vector<RaiseSpec> specs;
        for (auto& [ci, tid] : p.terms) {
            if (node.op == OperatorKind::Sequence && ci == 0) continue;  // left can't terminate
            EventPtr term;
            auto live = group_events(node, *node.children[ci], key);
            for (const auto& e : live)
                if (e->id() == tid) { term = e; break; }
            if (!term && !live.empty()) term = live.back();  // waived: use its successor
            if (!term) continue;
            std::set<EventId> mine;  // events used with this terminator
            bool raised_with_term = false;
            for (;;) {
                std::vector<EventPtr> others;
                bool complete = true;
                for (std::size_t cj = 0; cj < node.children.size(); ++cj) {
                    if (static_cast<int>(cj) == ci) continue;
                    EventPtr pick;
                    for (auto it = snapshot[cj].rbegin(); it != snapshot[cj].rend(); ++it)
                        if (!mine.count((*it)->id())) { pick = *it; break; }
                    if (!pick) { complete = false; break; }
                    others.push_back(pick);
                }
                if (!complete) break;
                if (node.op == OperatorKind::Sequence && !seq_ok(node, *others[0], *term)) break;
                std::vector<EventPtr> cevts = others;
                cevts.push_back(term);
                sort_by_id(cevts);
                PathInstance at = derive_instance(node, cevts);
                if (at.is_null()) break;
                specs.push_back({std::move(cevts), std::move(at)});
                raised_with_term = true;
                for (const auto& o : others) {
                    mine.insert(o->id());
                    used.insert(o->id());
                }
            }
            if (raised_with_term && node.op == OperatorKind::Sequence && ci == 1)
                removals.push_back({ci, term});  // a right-side terminator cannot initiate
        }
        for (std::size_t cj = 0; cj < node.children.size(); ++cj)
            for (const auto& e : snapshot[cj])
                if (used.count(e->id())) consume(*node.children[cj], *e);
        for (auto& [ci, e] : removals) consume(*node.children[ci], *e);
        return emit_sorted(tree, tidx, node, std::move(specs));
    }

    int materialize_unrestricted(EventTree& tree, int tidx, TreeNode& node,
                                 const std::string& key, Pending& p) {
        std::vector<RaiseSpec> specs;
        for (auto& [ci, tid] : p.terms) {
            EventPtr term;
            for (const auto& e : group_events(node, *node.children[ci], key))
                if (e->id() == tid) { term = e; break; }
            if (!term) continue;
            std::vector<std::vector<EventPtr>> pools;
            bool complete = true;
            for (std::size_t cj = 0; cj < node.children.size(); ++cj) {
                if (static_cast<int>(cj) == ci) {
                    pools.push_back({term});
                    continue;
                }
                pools.push_back(group_events(node, *node.children[cj], key));
                if (pools.back().empty()) { complete = false; break; }
            }
            if (!complete) continue;
            std::vector<EventPtr> tuple(pools.size());
            std::function<void(std::size_t)> walk = [&](std::size_t cj) {
                if (cj == pools.size()) {
                    if (node.op == OperatorKind::Sequence && !seq_ok(node, *tuple[0], *tuple[1]))
                        return;
                    std::vector<EventPtr> cevts = tuple;
                    sort_by_id(cevts);
                    PathInstance at = derive_instance(node, cevts);
                    if (!at.is_null()) specs.push_back({std::move(cevts), std::move(at)});
                    return;
                }
                for (const auto& e : pools[cj]) {
                    tuple[cj] = e;
                    walk(cj + 1);
                }
            };
            walk(0);
        }
        p.terms.clear();
        return emit_sorted(tree, tidx, node, std::move(specs));
    }

    // -- disjunction ---------------------------------------------------------

    int materialize_disj(EventTree& tree, int tidx, TreeNode& node, const std::string& key,
                         Pending& p) {
        int raised = 0;
        for (auto& [ci, tid] : p.terms) {
            EventPtr term;
            for (const auto& e : group_events(node, *node.children[ci], key))
                if (e->id() == tid) { term = e; break; }
            if (!term) continue;
            PathInstance at = derive_instance(node, {term});
            if (at.is_null()) continue;
            emit(tree, tidx, node, {{term}, at});
            ++raised;
            if (node.context == Context::Recent) {
                auto evs = group_events(node, *node.children[ci], key);
                for (const auto& e : evs)
                    if (e->id() != evs.back()->id()) consume(*node.children[ci], *e);
            } else if (node.context != Context::Unrestricted) {
                consume(*node.children[ci], *term);
            }
        }
        p.terms.clear();
        return raised;
    }

    // -- multiplicity --------------------------------------------------------

    EventPtr integration_target(TreeNode& node, const std::string& key) const {
        for (auto it = node.stored.rbegin(); it != node.stored.rend(); ++it) {
            auto k = group_key(node, **it);
            if (!k || *k != key) continue;
            if (node.upper < 0 ||
                static_cast<long>((*it)->constituents().size()) < node.upper)
                return *it;
            return nullptr;  // newest is full: accumulation starts over
        }
        return nullptr;
    }

    void waive(TreeNode& node, const Event& ev) {
        for (auto it = node.stored.begin(); it != node.stored.end(); ++it)
            if ((*it)->id() == ev.id()) { node.stored.erase(it); break; }
        for (auto it = node.gained.begin(); it != node.gained.end(); ++it)
            if ((*it)->id() == ev.id()) { node.gained.erase(it); break; }
    }

    int materialize_mult(EventTree& tree, int tidx, TreeNode& node, const std::string& key,
                         Pending& p) {
        TreeNode& child = *node.children.front();
        int raised = 0;
        for (;;) {
            auto avail = group_events(node, child, key);
            if (avail.empty()) break;
            EventPtr target = integration_target(node, key);
            std::vector<EventPtr> cevts;
            if (target) {
                long room = node.upper < 0 ? static_cast<long>(avail.size())
                                           : node.upper - static_cast<long>(
                                                 target->constituents().size());
                long k = std::min<long>(room, static_cast<long>(avail.size()));
                if (k <= 0) break;
                cevts = target->constituents();
                for (long i = 0; i < k; ++i) cevts.push_back(avail[static_cast<std::size_t>(i)]);
                for (long i = 0; i < k; ++i) consume(child, *avail[static_cast<std::size_t>(i)]);
                waive(node, *target);
            } else {
                long threshold = std::max<long>(node.lower, 1);
                if (static_cast<long>(avail.size()) < threshold) break;
                long k = node.upper < 0 ? static_cast<long>(avail.size())
                                        : std::min<long>(node.upper,
                                                         static_cast<long>(avail.size()));
                for (long i = 0; i < k; ++i) {
                    cevts.push_back(avail[static_cast<std::size_t>(i)]);
                    consume(child, *avail[static_cast<std::size_t>(i)]);
                }
            }
            sort_by_id(cevts);
            PathInstance at = derive_instance(node, cevts);
            if (at.is_null() && !p.anchor.is_null()) at = p.anchor;
            if (at.is_null()) break;
            emit(tree, tidx, node, {std::move(cevts), at});
            ++raised;
        }
        // l = 0: the slot for this instance is satisfied by the instance alone
        if (raised == 0 && node.lower == 0 && !p.anchor.is_null() &&
            doc_->exists(p.anchor.last()) && !integration_target(node, key) &&
            !has_group_composite(node, key)) {
            emit(tree, tidx, node, {{}, p.anchor});
            ++raised;
        }
        return raised;
    }

    bool has_group_composite(const TreeNode& node, const std::string& key) const {
        for (const auto& ev : node.stored)
            if (auto k = group_key(node, *ev); k && *k == key) return true;
        return false;
    }

    // Refill the empty composite for every live matching instance whose slot
    // was consumed (and seed instances present before the graph opened).
    void restore_instances(EventTree& tree, int tidx, TreeNode& node, Pass pass) {
        (void)pass;
        for (const PathInstance& pi : doc_->find_instances(node.path)) {
            auto key = instance_key(node, pi);
            if (!key || has_group_composite(node, *key)) continue;
            auto pit = node.pending.find(*key);
            if (pit == node.pending.end()) {
                Pending& p = node.pending[*key];
                p.anchor = pi;
                attempt_release(tree, tidx, node, *key, pass);
            } else {
                pit->second.anchor = pi;
                attempt_release(tree, tidx, node, *key, pass);
            }
        }
    }

    Document* doc_;
    std::shared_ptr<EventIdAllocator> ids_;
    std::vector<std::unique_ptr<EventTree>> trees_;
    std::vector<std::vector<int>> dependents_;
    bool open_ = false, closed_ = false;
    Tick current_tick_ = 0;
    RaiseListener listener_;
    std::vector<EventPtr> raised_roots_;
    std::vector<int> last_counts_;
};

}  // namespace xmlevt
