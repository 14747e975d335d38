// Minimal mutable XML tree.  Nodes carry caller-supplied ids; every mutation
// advances the document tick by one and yields the corresponding primitive
// event.  Creating the root initializes the document and is not a mutation.

#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "event.hpp"
#include "path.hpp"

namespace xmlevt {

enum class NodeKind { Element, Attribute, Text };

struct Node {
    NodeId id;
    NodeKind kind = NodeKind::Element;
    std::string name;                // element/attribute name
    std::string value;               // attribute/text value
    NodeId parent;                   // empty for the root
    std::vector<NodeId> children;    // in document order; elements only
};

class DocumentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Document {
public:
    Document() : ids_(std::make_shared<EventIdAllocator>()) {}

    const std::shared_ptr<EventIdAllocator>& id_allocator() const { return ids_; }
    Tick tick() const { return tick_; }
    bool has_root() const { return !root_.empty(); }
    const NodeId& root() const { return root_; }

    bool exists(const NodeId& id) const { return nodes_.count(id) != 0; }

    const Node& node(const NodeId& id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw DocumentError("unknown node id " + id);
        return it->second;
    }

    void create_root(const std::string& name, const NodeId& id) {
        if (has_root()) throw DocumentError("document already has a root");
        require_unused(id);
        nodes_[id] = Node{id, NodeKind::Element, name, {}, {}, {}};
        root_ = id;
    }

    EventPtr insert_element(const NodeId& parent, const std::string& name, const NodeId& id) {
        return insert(parent, Node{id, NodeKind::Element, name, {}, parent, {}});
    }

    EventPtr insert_attribute(const NodeId& parent, const std::string& name, const NodeId& id,
                              const std::string& value) {
        return insert(parent, Node{id, NodeKind::Attribute, name, value, parent, {}});
    }

    EventPtr insert_text(const NodeId& parent, const NodeId& id, const std::string& value) {
        return insert(parent, Node{id, NodeKind::Text, {}, value, parent, {}});
    }

    EventPtr update(const NodeId& id, const std::string& value) {
        Node& n = mutable_node(id);
        if (n.kind == NodeKind::Element)
            throw DocumentError("cannot update element " + id + "; only text and attribute nodes");
        n.value = value;
        return emit(Op::Upd, n);
    }

    // One del event for the named node only; its subtree is dropped silently.
    EventPtr remove(const NodeId& id) {
        Node& n = mutable_node(id);
        if (id == root_) throw DocumentError("cannot delete the document root");
        EventPtr e = emit(Op::Del, n);
        auto& siblings = nodes_.at(n.parent).children;
        for (auto it = siblings.begin(); it != siblings.end(); ++it)
            if (*it == id) { siblings.erase(it); break; }
        erase_subtree(id);
        return e;
    }

    // Absolute instance from the root down to the node.
    PathInstance instance_of(const NodeId& id) const {
        std::vector<NodeId> ids;
        std::vector<Step> steps;
        collect_ancestry(id, ids, steps);
        return PathInstance(PathType(PathKind::Absolute, std::move(steps)), std::move(ids));
    }

    PathType path_of(const NodeId& id) const {
        std::vector<NodeId> ids;
        std::vector<Step> steps;
        collect_ancestry(id, ids, steps);
        return PathType(PathKind::Absolute, std::move(steps));
    }

    // All instances whose path type is ended by (or equals) the suffix.
    std::vector<PathInstance> find_instances(const PathType& suffix) const {
        std::vector<PathInstance> out;
        if (suffix.is_null() || root_.empty()) return out;
        collect_instances(root_, suffix, out);
        return out;
    }

    // Ordered direct children of an element, attributes and text included.
    std::vector<const Node*> children_of(const NodeId& id) const {
        std::vector<const Node*> out;
        for (const auto& c : node(id).children) out.push_back(&node(c));
        return out;
    }

private:
    void require_unused(const NodeId& id) const {
        if (id.empty()) throw DocumentError("node id must not be empty");
        if (nodes_.count(id)) throw DocumentError("duplicate node id " + id);
    }

    Node& mutable_node(const NodeId& id) {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw DocumentError("unknown node id " + id);
        return it->second;
    }

    EventPtr insert(const NodeId& parent, Node n) {
        Node& p = mutable_node(parent);
        if (p.kind != NodeKind::Element)
            throw DocumentError("node " + parent + " cannot have children");
        require_unused(n.id);
        p.children.push_back(n.id);
        auto [it, ok] = nodes_.emplace(n.id, std::move(n));
        (void)ok;
        return emit(Op::Ins, it->second);
    }

    EventPtr emit(Op op, const Node& n) {
        ++tick_;
        return Event::primitive(ids_->allocate(), tick_, op, path_of(n.id), instance_of(n.id));
    }

    void erase_subtree(const NodeId& id) {
        auto children = nodes_.at(id).children;
        for (const auto& c : children) erase_subtree(c);
        nodes_.erase(id);
    }

    void collect_ancestry(const NodeId& id, std::vector<NodeId>& ids,
                          std::vector<Step>& steps) const {
        const Node& n = node(id);
        if (!n.parent.empty()) collect_ancestry(n.parent, ids, steps);
        ids.push_back(n.id);
        switch (n.kind) {
            case NodeKind::Element: steps.push_back(Step::element(n.name)); break;
            case NodeKind::Attribute: steps.push_back(Step::attribute(n.name)); break;
            case NodeKind::Text: steps.push_back(Step::text_node()); break;
        }
    }

    void collect_instances(const NodeId& id, const PathType& suffix,
                           std::vector<PathInstance>& out) const {
        PathInstance pi = instance_of(id);
        if (ends(suffix, pi.type()) || suffix == pi.type()) out.push_back(pi);
        for (const auto& c : node(id).children) collect_instances(c, suffix, out);
    }

    std::map<NodeId, Node> nodes_;
    NodeId root_;
    Tick tick_ = 0;
    std::shared_ptr<EventIdAllocator> ids_;
};

}  // namespace xmlevt
