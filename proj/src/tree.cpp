#include "ebtree/tree.hpp"

#include <numeric>

#include "ebtree/errors.hpp"
#include "ebtree/kernels.hpp"

namespace ebtree {

namespace {

void insert_entry(Node& node, std::size_t i, const BlockEntry& e) {
    node.digests.insert(node.digests.begin() + i, e.digest);
    node.blocks.insert(node.blocks.begin() + i, e.block);
}

BlockEntry erase_entry(Node& node, std::size_t i) {
    BlockEntry e = node.entry(i);
    node.digests.erase(node.digests.begin() + i);
    node.blocks.erase(node.blocks.begin() + i);
    return e;
}

struct ChildSlot {
    NodeRef ref;
    std::uint64_t size = 0;
    Digest32 digest;
    std::uint32_t count = 0;
};

ChildSlot child_slot(const Node& node, std::size_t i) {
    return {node.children[i], node.sizes[i], node.child_digests[i], node.child_counts[i]};
}

void insert_child_slot(Node& node, std::size_t i, const ChildSlot& s) {
    node.children.insert(node.children.begin() + i, s.ref);
    node.sizes.insert(node.sizes.begin() + i, s.size);
    node.child_digests.insert(node.child_digests.begin() + i, s.digest);
    node.child_counts.insert(node.child_counts.begin() + i, s.count);
}

ChildSlot erase_child_slot(Node& node, std::size_t i) {
    ChildSlot s = child_slot(node, i);
    node.children.erase(node.children.begin() + i);
    node.sizes.erase(node.sizes.begin() + i);
    node.child_digests.erase(node.child_digests.begin() + i);
    node.child_counts.erase(node.child_counts.begin() + i);
    return s;
}

void recount(Node& node) {
    node.total = std::accumulate(node.sizes.begin(), node.sizes.end(), std::uint64_t{node.count()});
}

// left <- left || sep || right
void merge_nodes(Node& left, const BlockEntry& sep, const Node& right) {
    left.digests.push_back(sep.digest);
    left.blocks.push_back(sep.block);
    left.digests.insert(left.digests.end(), right.digests.begin(), right.digests.end());
    left.blocks.insert(left.blocks.end(), right.blocks.begin(), right.blocks.end());
    if (!left.leaf) {
        left.children.insert(left.children.end(), right.children.begin(), right.children.end());
        left.sizes.insert(left.sizes.end(), right.sizes.begin(), right.sizes.end());
        left.child_digests.insert(left.child_digests.end(), right.child_digests.begin(),
                                  right.child_digests.end());
        left.child_counts.insert(left.child_counts.end(), right.child_counts.begin(),
                                 right.child_counts.end());
    }
    recount(left);
}

void attach_child(Node& parent, std::size_t i, const Node& child, NodeRef ref) {
    parent.children[i] = ref;
    parent.sizes[i] = child.total;
    parent.child_digests[i] = child.digest;
    parent.child_counts[i] = static_cast<std::uint32_t>(child.count());
}

NodeRef seal_into(NodeStore& store, Node& node) {
    update_attributes(node);
    return store.put(node);
}

}  // namespace

Route route(const Node& node, std::uint64_t p) {
    if (p < 1 || p > node.total) {
        throw RangeError("position " + std::to_string(p) + " outside [1, " + std::to_string(node.total) + "]");
    }
    if (node.leaf) return {Route::Kind::kBlock, static_cast<std::size_t>(p - 1), 0};
    std::uint64_t left = 0;
    const std::size_t n = node.count();
    for (std::size_t i = 0; i <= n; ++i) {
        const std::uint64_t s = node.sizes[i];
        if (p <= left + s) return {Route::Kind::kChild, i, p - left};
        if (i < n && p == left + s + 1) return {Route::Kind::kBlock, i, 0};
        left += s + 1;
    }
    throw RangeError("child sizes do not cover position " + std::to_string(p));
}

Route route_for_insert(const Node& node, std::uint64_t p) {
    if (p < 1 || p > node.total + 1) {
        throw RangeError("insert position " + std::to_string(p) + " outside [1, " +
                         std::to_string(node.total + 1) + "]");
    }
    if (node.leaf) return {Route::Kind::kBlock, static_cast<std::size_t>(p - 1), 0};
    std::uint64_t left = 0;
    const std::size_t n = node.count();
    for (std::size_t i = 0; i < n; ++i) {
        if (p <= left + node.sizes[i] + 1) return {Route::Kind::kChild, i, p - left};
        left += node.sizes[i] + 1;
    }
    return {Route::Kind::kChild, n, p - left};
}

void update_attributes(Node& node) {
    recount(node);
    node.digest = authcodec::node_digest(node);
}

Node split_child(Node& parent, std::size_t i, Node& child, unsigned t) {
    if (child.count() != 2 * t - 1) throw ContractViolation("split of a child that is not full");
    if (parent.count() >= 2 * t - 1) throw ContractViolation("split into a full parent");

    Node right;
    right.leaf = child.leaf;
    right.digests.assign(child.digests.begin() + t, child.digests.end());
    right.blocks.assign(child.blocks.begin() + t, child.blocks.end());
    const BlockEntry median = child.entry(t - 1);
    child.digests.resize(t - 1);
    child.blocks.resize(t - 1);
    if (!child.leaf) {
        right.children.assign(child.children.begin() + t, child.children.end());
        right.sizes.assign(child.sizes.begin() + t, child.sizes.end());
        right.child_digests.assign(child.child_digests.begin() + t, child.child_digests.end());
        right.child_counts.assign(child.child_counts.begin() + t, child.child_counts.end());
        child.children.resize(t);
        child.sizes.resize(t);
        child.child_digests.resize(t);
        child.child_counts.resize(t);
    }
    recount(child);
    recount(right);

    insert_entry(parent, i, median);
    insert_child_slot(parent, i + 1, {NodeRef{}, right.total, Digest32{}, static_cast<std::uint32_t>(right.count())});
    parent.sizes[i] = child.total;
    parent.child_counts[i] = static_cast<std::uint32_t>(child.count());
    return right;
}

std::size_t fill_child(Node& parent, std::size_t i, Node& child, unsigned t, NodeStore& store) {
    if (child.count() != t - 1) throw ContractViolation("fillChild on a child without exactly t-1 blocks");
    const std::size_t n = parent.count();

    if (i > 0 && parent.child_counts[i - 1] >= t) {
        // Rotate right: sibling's last block -> parent, parent block -> child front.
        Node sib = *store.get(parent.children[i - 1]);
        insert_entry(child, 0, parent.entry(i - 1));
        parent.set_entry(i - 1, erase_entry(sib, sib.count() - 1));
        if (!child.leaf) insert_child_slot(child, 0, erase_child_slot(sib, sib.children.size() - 1));
        recount(child);
        attach_child(parent, i - 1, sib, seal_into(store, sib));
        parent.sizes[i] = child.total;
        parent.child_counts[i] = static_cast<std::uint32_t>(child.count());
        return i;
    }
    if (i < n && parent.child_counts[i + 1] >= t) {
        Node sib = *store.get(parent.children[i + 1]);
        insert_entry(child, child.count(), parent.entry(i));
        parent.set_entry(i, erase_entry(sib, 0));
        if (!child.leaf) insert_child_slot(child, child.children.size(), erase_child_slot(sib, 0));
        recount(child);
        attach_child(parent, i + 1, sib, seal_into(store, sib));
        parent.sizes[i] = child.total;
        parent.child_counts[i] = static_cast<std::uint32_t>(child.count());
        return i;
    }
    if (i > 0) {
        Node sib = *store.get(parent.children[i - 1]);
        merge_nodes(sib, erase_entry(parent, i - 1), child);
        erase_child_slot(parent, i);
        child = std::move(sib);
        parent.sizes[i - 1] = child.total;
        parent.child_counts[i - 1] = static_cast<std::uint32_t>(child.count());
        return i - 1;
    }
    const Node sib = *store.get(parent.children[i + 1]);
    merge_nodes(child, erase_entry(parent, i), sib);
    erase_child_slot(parent, i + 1);
    parent.sizes[i] = child.total;
    parent.child_counts[i] = static_cast<std::uint32_t>(child.count());
    return i;
}

Tree::Tree(std::shared_ptr<NodeStore> nodes, unsigned t) : nodes_(std::move(nodes)), t_(t) {
    if (t_ < 2) throw ConfigError("minimum degree must be >= 2");
    Node leaf;
    root_ = seal_and_put(leaf);
    root_digest_ = leaf.digest;
}

Tree::Tree(std::shared_ptr<NodeStore> nodes, unsigned t, NodeRef root, const Node& root_node)
    : nodes_(std::move(nodes)), t_(t), root_(root), root_digest_(root_node.digest), size_(root_node.total) {}

Tree Tree::open(std::shared_ptr<NodeStore> nodes, unsigned t, NodeRef root) {
    if (t < 2) throw ConfigError("minimum degree must be >= 2");
    auto node = nodes->get(root);
    return Tree(std::move(nodes), t, root, *node);
}

unsigned Tree::height() const {
    unsigned h = 0;
    auto node = nodes_->get(root_);
    while (!node->leaf) {
        node = nodes_->get(node->children.front());
        ++h;
    }
    return h;
}

NodeRef Tree::seal_and_put(Node& node) const { return seal_into(*nodes_, node); }

void Tree::attach(Node& parent, std::size_t i, const Node& child, NodeRef ref) const {
    attach_child(parent, i, child, ref);
}

Tree Tree::with_root(Node& root) const {
    NodeRef ref = seal_and_put(root);
    return Tree(nodes_, t_, ref, root);
}

BlockEntry Tree::get(std::uint64_t p) const {
    if (p < 1 || p > size_) {
        throw RangeError("position " + std::to_string(p) + " outside [1, " + std::to_string(size_) + "]");
    }
    auto node = nodes_->get(root_);
    for (;;) {
        const Route r = route(*node, p);
        if (r.kind == Route::Kind::kBlock) return node->entry(r.index);
        p = r.residual;
        node = nodes_->get(node->children[r.index]);
    }
}

Tree Tree::insert(std::uint64_t p, const BlockEntry& e) const {
    if (p < 1 || p > size_ + 1) {
        throw RangeError("insert position " + std::to_string(p) + " outside [1, " + std::to_string(size_ + 1) + "]");
    }
    Node root = load(root_);
    if (root.count() == max_blocks()) {
        Node top;
        top.leaf = false;
        top.total = root.total;
        insert_child_slot(top, 0, {root_, root.total, root.digest, static_cast<std::uint32_t>(root.count())});
        // Reuse the ordinary descent: the old root becomes child 0 of a new, non-full root.
        Node right = split_child(top, 0, root, t_);
        const Route r = route_for_insert(top, p);
        if (r.index == 0) {
            attach(top, 1, right, seal_and_put(right));
            insert_into(root, r.residual, e);
            attach(top, 0, root, seal_and_put(root));
        } else {
            attach(top, 0, root, seal_and_put(root));
            insert_into(right, r.residual, e);
            attach(top, 1, right, seal_and_put(right));
        }
        return with_root(top);
    }
    insert_into(root, p, e);
    return with_root(root);
}

void Tree::insert_into(Node& node, std::uint64_t p, const BlockEntry& e) const {
    if (node.leaf) {
        const Route r = route_for_insert(node, p);
        insert_entry(node, r.index, e);
        return;
    }
    Route r = route_for_insert(node, p);
    Node child = load(node.children[r.index]);
    if (child.count() == max_blocks()) {
        const std::size_t i = r.index;
        Node right = split_child(node, i, child, t_);
        // The promoted median may now sit at the target rank, so route again.
        r = route_for_insert(node, p);
        if (r.index == i) {
            attach(node, i + 1, right, seal_and_put(right));
        } else {
            attach(node, i, child, seal_and_put(child));
            child = std::move(right);
        }
    }
    insert_into(child, r.residual, e);
    attach(node, r.index, child, seal_and_put(child));
}

Tree Tree::erase(std::uint64_t p) const {
    if (p < 1 || p > size_) {
        throw RangeError("position " + std::to_string(p) + " outside [1, " + std::to_string(size_) + "]");
    }
    Node root = load(root_);
    erase_from(root, p);
    if (!root.leaf && root.count() == 0) {
        return open(nodes_, t_, root.children.front());
    }
    return with_root(root);
}

BlockEntry Tree::erase_from(Node& node, std::uint64_t p) const {
    Route r = route(node, p);
    if (node.leaf) return erase_entry(node, r.index);

    if (r.kind == Route::Kind::kBlock) {
        const std::size_t i = r.index;
        const BlockEntry target = node.entry(i);
        if (node.child_counts[i] >= t_) {
            Node c = load(node.children[i]);
            node.set_entry(i, erase_from(c, node.sizes[i]));
            attach(node, i, c, seal_and_put(c));
            return target;
        }
        if (node.child_counts[i + 1] >= t_) {
            Node c = load(node.children[i + 1]);
            node.set_entry(i, erase_from(c, 1));
            attach(node, i + 1, c, seal_and_put(c));
            return target;
        }
        Node merged = load(node.children[i]);
        const Node right = load(node.children[i + 1]);
        const std::uint64_t rank = merged.total + 1;
        merge_nodes(merged, erase_entry(node, i), right);
        erase_child_slot(node, i + 1);
        const BlockEntry removed = erase_from(merged, rank);
        attach(node, i, merged, seal_and_put(merged));
        return removed;
    }

    std::size_t i = r.index;
    std::uint64_t residual = r.residual;
    Node child = load(node.children[i]);
    if (child.count() == t_ - 1) {
        i = ebtree::fill_child(node, i, child, t_, *nodes_);
        r = route(node, p);
        if (r.kind != Route::Kind::kChild || r.index != i) {
            throw ContractViolation("fillChild moved the target out of the filled child");
        }
        residual = r.residual;
    }
    const BlockEntry removed = erase_from(child, residual);
    attach(node, i, child, seal_and_put(child));
    return removed;
}

Tree Tree::update(std::uint64_t p, const BlockEntry& e) const {
    if (p < 1 || p > size_) {
        throw RangeError("position " + std::to_string(p) + " outside [1, " + std::to_string(size_) + "]");
    }
    Node root = load(root_);
    update_in(root, p, e);
    return with_root(root);
}

void Tree::update_in(Node& node, std::uint64_t p, const BlockEntry& e) const {
    const Route r = route(node, p);
    if (r.kind == Route::Kind::kBlock) {
        node.set_entry(r.index, e);
        return;
    }
    Node child = load(node.children[r.index]);
    update_in(child, r.residual, e);
    attach(node, r.index, child, seal_and_put(child));
}

PathProof Tree::sibling_path(std::uint64_t p) const {
    if (p < 1 || p > size_) {
        throw RangeError("position " + std::to_string(p) + " outside [1, " + std::to_string(size_) + "]");
    }
    PathProof proof;
    proof.position = p;
    auto node = nodes_->get(root_);
    for (;;) {
        const Bytes bytes = authcodec::serialize_node(*node);
        const Route r = route(*node, p);
        std::size_t hole;
        if (node->leaf) {
            hole = authcodec::leaf_block_offset(r.index);
        } else if (r.kind == Route::Kind::kBlock) {
            hole = authcodec::internal_block_offset(r.index);
        } else {
            hole = authcodec::child_offset(r.index);
        }
        proof.path.push_back({Bytes(bytes.begin(), bytes.begin() + hole),
                              Bytes(bytes.begin() + hole + Digest32::kSize, bytes.end())});
        if (r.kind == Route::Kind::kBlock) {
            proof.block = node->entry(r.index);
            return proof;
        }
        p = r.residual;
        node = nodes_->get(node->children[r.index]);
    }
}

void Tree::for_each(const std::function<void(const BlockEntry&)>& fn) const {
    std::function<void(NodeRef)> walk = [&](NodeRef ref) {
        auto node = nodes_->get(ref);
        for (std::size_t i = 0; i < node->count(); ++i) {
            if (!node->leaf) walk(node->children[i]);
            fn(node->entry(i));
        }
        if (!node->leaf) walk(node->children.back());
    };
    walk(root_);
}

std::vector<BlockEntry> Tree::entries() const {
    std::vector<BlockEntry> out;
    out.reserve(size_);
    for_each([&](const BlockEntry& e) { out.push_back(e); });
    return out;
}

namespace {

// Mutable, hash-free B-tree used only to lay out a bulk build.
struct Scratch {
    bool leaf = true;
    std::vector<BlockEntry> entries;
    std::vector<std::unique_ptr<Scratch>> kids;
    std::uint64_t total = 0;
    NodeRef ref;
    Digest32 digest;
};

void scratch_recount(Scratch& s) {
    s.total = s.entries.size();
    for (const auto& k : s.kids) s.total += k->total;
}

void scratch_split_last(Scratch& parent, unsigned t) {
    Scratch& child = *parent.kids.back();
    auto right = std::make_unique<Scratch>();
    right->leaf = child.leaf;
    right->entries.reserve(2 * t - 1);
    right->entries.assign(child.entries.begin() + t, child.entries.end());
    const BlockEntry median = child.entries[t - 1];
    child.entries.resize(t - 1);
    if (!child.leaf) {
        for (std::size_t k = t; k < child.kids.size(); ++k) right->kids.push_back(std::move(child.kids[k]));
        child.kids.resize(t);
    }
    scratch_recount(child);
    scratch_recount(*right);
    parent.entries.push_back(median);
    parent.kids.push_back(std::move(right));
}

}  // namespace

Tree Tree::build(std::shared_ptr<NodeStore> nodes, unsigned t, std::span<const BlockEntry> entries) {
    if (t < 2) throw ConfigError("minimum degree must be >= 2");
    if (entries.empty()) return Tree(std::move(nodes), t);

    const std::size_t max = 2 * t - 1;
    auto root = std::make_unique<Scratch>();
    root->entries.reserve(max);
    for (const auto& e : entries) {
        if (root->entries.size() == max) {
            auto top = std::make_unique<Scratch>();
            top->leaf = false;
            top->entries.reserve(max);
            top->kids.push_back(std::move(root));
            scratch_split_last(*top, t);
            scratch_recount(*top);
            root = std::move(top);
        }
        Scratch* node = root.get();
        for (;;) {
            ++node->total;
            if (node->leaf) {
                node->entries.push_back(e);
                break;
            }
            if (node->kids.back()->entries.size() == max) scratch_split_last(*node, t);
            node = node->kids.back().get();
        }
    }

    // Seal level by level from the leaves up; digests within a level are independent.
    std::vector<std::vector<Scratch*>> levels{{root.get()}};
    while (!levels.back().front()->leaf) {
        std::vector<Scratch*> next;
        for (Scratch* s : levels.back()) {
            for (auto& k : s->kids) next.push_back(k.get());
        }
        levels.push_back(std::move(next));
    }
    Node root_node;
    for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
        std::vector<Node> sealed(it->size());
        for (std::size_t j = 0; j < it->size(); ++j) {
            const Scratch& s = *(*it)[j];
            Node& n = sealed[j];
            n.leaf = s.leaf;
            n.digests.reserve(s.entries.size());
            n.blocks.reserve(s.entries.size());
            if (!s.leaf) {
                n.children.reserve(s.kids.size());
                n.sizes.reserve(s.kids.size());
                n.child_digests.reserve(s.kids.size());
                n.child_counts.reserve(s.kids.size());
            }
            for (const auto& e : s.entries) {
                n.digests.push_back(e.digest);
                n.blocks.push_back(e.block);
            }
            for (const auto& k : s.kids) {
                n.children.push_back(k->ref);
                n.sizes.push_back(k->total);
                n.child_digests.push_back(k->digest);
                n.child_counts.push_back(static_cast<std::uint32_t>(k->entries.size()));
            }
        }
        kernels::seal_nodes(sealed);
        if (it + 1 == levels.rend()) root_node = sealed.front();
        for (std::size_t j = 0; j < it->size(); ++j) {
            (*it)[j]->digest = sealed[j].digest;
            (*it)[j]->ref = nodes->put(std::move(sealed[j]));
        }
    }
    const NodeRef ref = root->ref;
    return Tree(std::move(nodes), t, ref, root_node);
}

}  // namespace ebtree
