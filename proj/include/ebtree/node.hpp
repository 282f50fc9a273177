#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "ebtree/digest.hpp"

namespace ebtree {

/// Opaque handle of an immutable node record. Id 0 is never issued.
struct NodeRef {
    std::uint64_t id = 0;
    explicit operator bool() const { return id != 0; }
    friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

/// Opaque handle of a stored block payload.
struct BlockRef {
    std::uint64_t id = 0;
    friend auto operator<=>(const BlockRef&, const BlockRef&) = default;
};

/// One block as the tree sees it: where the payload lives and its seeded digest.
struct BlockEntry {
    BlockRef block;
    Digest32 digest;
    friend bool operator==(const BlockEntry&, const BlockEntry&) = default;
};

/// Node of the counted, keyless B-tree. The in-order sequence of a node is
/// child[0].blocks, block[0], child[1].blocks, ..., block[n-1], child[n].blocks.
///
/// Nodes are values: the tree copies a node out of the store, edits the copy and
/// writes it back under a fresh NodeRef. Records already in a store never change.
struct Node {
    bool leaf = true;
    std::vector<Digest32> digests;  // block digests, length n
    std::vector<BlockRef> blocks;   // block payload refs, length n

    // Internal nodes only; all of length n + 1.
    std::vector<NodeRef> children;
    std::vector<std::uint64_t> sizes;        // blocks in each child's subtree
    std::vector<Digest32> child_digests;     // node digest of each child
    std::vector<std::uint32_t> child_counts;  // n of each child; storage-only, not hashed

    // Derived: n + sum(sizes), and the digest of the canonical serialization.
    std::uint64_t total = 0;
    Digest32 digest;

    std::size_t count() const { return digests.size(); }
    BlockEntry entry(std::size_t i) const { return {blocks[i], digests[i]}; }
    void set_entry(std::size_t i, const BlockEntry& e) {
        blocks[i] = e.block;
        digests[i] = e.digest;
    }

    friend bool operator==(const Node&, const Node&) = default;
};

}  // namespace ebtree
