#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ebtree/authcodec.hpp"
#include "ebtree/node.hpp"
#include "ebtree/node_store.hpp"

namespace ebtree {

inline constexpr unsigned kDefaultMinDegree = 8;

/// Where a 1-based rank lands inside one node.
struct Route {
    enum class Kind { kBlock, kChild };
    Kind kind = Kind::kChild;
    std::size_t index = 0;
    std::uint64_t residual = 0;  // rank inside child `index` (kChild only)

    friend bool operator==(const Route&, const Route&) = default;
};

/// Lookup routing: p in [1, node.total]. Scans (child, block) pairs left to right.
Route route(const Node& node, std::uint64_t p);

/// Insert routing: p in [1, node.total + 1]. Always descends; the new block lands at the
/// end of child i when p sits right before block i.
Route route_for_insert(const Node& node, std::uint64_t p);

/// Recomputes the derived fields (total, digest) of a node whose child attributes are current.
void update_attributes(Node& node);

/// Splits the full child `child` sitting at slot i of `parent`. `child` keeps the left half,
/// the right half is returned, the median moves into parent slot i. The child refs/digests of
/// slots i and i+1 are left for the caller to attach once the halves are stored.
Node split_child(Node& parent, std::size_t i, Node& child, unsigned t);

/// Restores child i (exactly t-1 blocks) to >= t blocks before a delete descends into it:
/// borrow from the left sibling, else from the right, else merge with the left sibling
/// (the right one for the leftmost child). `child` is the working copy of slot i and is
/// replaced by the merged node on merge. A modified sibling is sealed into `store`.
/// Returns the slot index of the (possibly merged) child.
std::size_t fill_child(Node& parent, std::size_t i, Node& child, unsigned t, NodeStore& store);

/// Sibling path for one block, root entry first, plus the block it proves.
struct PathProof {
    std::uint64_t position = 0;
    BlockEntry block;
    std::vector<authcodec::SiblingPathEntry> path;
};

/// The counted, keyless B-tree. A Tree value is one immutable version: every mutation
/// returns a new Tree built by path copying, sharing untouched subtrees with this one.
class Tree {
  public:
    /// Empty tree (an empty leaf root) with minimum degree t >= 2.
    Tree(std::shared_ptr<NodeStore> nodes, unsigned t = kDefaultMinDegree);

    /// Tree rooted at an existing node.
    static Tree open(std::shared_ptr<NodeStore> nodes, unsigned t, NodeRef root);

    /// Tree whose shape equals appending `entries` one by one to an empty tree.
    static Tree build(std::shared_ptr<NodeStore> nodes, unsigned t, std::span<const BlockEntry> entries);

    NodeRef root() const { return root_; }
    const Digest32& root_digest() const { return root_digest_; }
    std::uint64_t size() const { return size_; }
    bool empty() const { return size_ == 0; }
    unsigned min_degree() const { return t_; }
    unsigned height() const;  // 0 for a single leaf
    const std::shared_ptr<NodeStore>& store() const { return nodes_; }

    BlockEntry get(std::uint64_t p) const;
    Tree insert(std::uint64_t p, const BlockEntry& e) const;
    Tree erase(std::uint64_t p) const;
    Tree update(std::uint64_t p, const BlockEntry& e) const;
    PathProof sibling_path(std::uint64_t p) const;

    /// In-order walk over every block.
    void for_each(const std::function<void(const BlockEntry&)>& fn) const;
    std::vector<BlockEntry> entries() const;

  private:
    Tree(std::shared_ptr<NodeStore> nodes, unsigned t, NodeRef root, const Node& root_node);

    std::size_t max_blocks() const { return 2 * t_ - 1; }
    Node load(NodeRef ref) const { return *nodes_->get(ref); }
    NodeRef seal_and_put(Node& node) const;
    void attach(Node& parent, std::size_t i, const Node& child, NodeRef ref) const;

    void insert_into(Node& node, std::uint64_t p, const BlockEntry& e) const;
    BlockEntry erase_from(Node& node, std::uint64_t p) const;
    void update_in(Node& node, std::uint64_t p, const BlockEntry& e) const;
    Tree with_root(Node& root) const;

    std::shared_ptr<NodeStore> nodes_;
    unsigned t_;
    NodeRef root_;
    Digest32 root_digest_;
    std::uint64_t size_ = 0;
};

}  // namespace ebtree
