#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ebtree/digest.hpp"
#include "ebtree/node.hpp"
#include "ebtree/node_store.hpp"

namespace ebtree::baselines {

/// Root digest recomputed from the leaves up over the structure reachable from `root`,
/// ignoring every cached digest and size stored in the nodes.
Digest32 full_rehash_root(const NodeStore& store, NodeRef root);

/// Root digest of the tree obtained by appending `digests` one at a time to an empty
/// tree of minimum degree t. Independent of the path-copying tree code.
Digest32 naive_root_oracle(std::span<const Digest32> digests, unsigned t);

/// Digest of the empty leaf, H(0x00 || u32_be(0)).
Digest32 empty_tree_digest();

/// Static Merkle hash tree with arity 2 or 8.
class MerkleTree {
  public:
    static Digest32 pad_digest();         // H(0x05)
    static Digest32 empty_root_digest();  // H(0x06)

    MerkleTree(std::span<const Digest32> leaves, unsigned arity, bool parallel = true);

    unsigned arity() const { return arity_; }
    std::size_t leaf_count() const { return levels_.front().size(); }
    const Digest32& root() const { return root_; }
    std::size_t depth() const { return levels_.size() - 1; }

    /// Rewrites one leaf and recomputes its path to the root.
    void update(std::size_t index, const Digest32& leaf);

    struct Proof {
        std::size_t leaf_index = 0;
        std::vector<std::vector<Digest32>> groups;  // per level, the arity-1 siblings in order
    };
    Proof prove(std::size_t index) const;
    static bool verify(const Proof& proof, const Digest32& leaf, const Digest32& root, unsigned arity);

  private:
    void rebuild(bool parallel);

    unsigned arity_;
    std::vector<std::vector<Digest32>> levels_;  // levels_[0] = leaves
    Digest32 root_;
};

/// Keyed-B-tree gap exhaustion: starting from neighbours with keys lo and hi, insert between
/// them choosing the key that keeps the smaller gap as large as possible, and keep going
/// into the smaller gap. Returns the number of insertions until no free key remains.
std::uint64_t key_exhaustion_demo(std::int64_t lo, std::int64_t hi);

}  // namespace ebtree::baselines
