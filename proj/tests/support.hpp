#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ebtree/authcodec.hpp"
#include "ebtree/node_store.hpp"
#include "ebtree/tree.hpp"

namespace ebtree::fixture {

/// Distinct, reproducible entry for logical id i.
inline BlockEntry entry(std::uint64_t i) {
    Bytes b;
    put_u64_be(b, i);
    return {BlockRef{i}, sha256(ByteView(b))};
}

inline std::vector<BlockEntry> entries(std::uint64_t n, std::uint64_t first = 1) {
    std::vector<BlockEntry> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(entry(first + i));
    return out;
}

inline std::vector<std::uint64_t> ids(const Tree& tree) {
    std::vector<std::uint64_t> out;
    tree.for_each([&](const BlockEntry& e) { out.push_back(e.block.id); });
    return out;
}

/// Full structural audit of one tree version. Returns the first violation found.
class InvariantChecker {
  public:
    explicit InvariantChecker(const Tree& tree) : tree_(tree) {}

    std::optional<std::string> check() {
        const Node root = *tree_.store()->get(tree_.root());
        const unsigned t = tree_.min_degree();
        if (root.count() > 2 * t - 1) return "root over capacity";
        if (root.count() == 0 && !(root.leaf && tree_.size() == 0)) return "empty root in a non-empty tree";
        leaf_depth_.reset();
        std::uint64_t total = 0;
        if (auto bad = visit(root, 0, true, total)) return bad;
        if (total != tree_.size()) return "tree size differs from recursive count";
        if (root.digest != tree_.root_digest()) return "cached root digest differs";
        if (tree_.size() > 0) {
            const double bound = std::ceil(std::log(static_cast<double>(tree_.size() + 1) / 2.0) / std::log(t)) + 1;
            if (tree_.height() > bound) return "height above bound";
        }
        return std::nullopt;
    }

  private:
    std::optional<std::string> visit(const Node& node, unsigned depth, bool is_root, std::uint64_t& total) {
        const unsigned t = tree_.min_degree();
        const std::size_t n = node.count();
        if (node.blocks.size() != n) return "blocks/digests length mismatch";
        if (n > 2 * t - 1) return "node over capacity";
        if (!is_root && n < t - 1) return "node under minimum occupancy";
        std::uint64_t sum = n;
        if (node.leaf) {
            if (!node.children.empty() || !node.sizes.empty()) return "leaf with children";
            if (leaf_depth_ && *leaf_depth_ != depth) return "leaves at different depths";
            leaf_depth_ = depth;
        } else {
            if (node.children.size() != n + 1 || node.sizes.size() != n + 1 || node.child_digests.size() != n + 1 ||
                node.child_counts.size() != n + 1) {
                return "internal node child arrays of wrong length";
            }
            for (std::size_t i = 0; i <= n; ++i) {
                const Node child = *tree_.store()->get(node.children[i]);
                std::uint64_t sub = 0;
                if (auto bad = visit(child, depth + 1, false, sub)) return bad;
                if (sub != node.sizes[i]) return "child size incoherent";
                if (child.digest != node.child_digests[i]) return "child digest incoherent";
                if (child.count() != node.child_counts[i]) return "child count incoherent";
                sum += sub;
            }
        }
        if (sum != node.total) return "node total incoherent";
        if (authcodec::node_digest(node) != node.digest) return "node digest incoherent";
        total = sum;
        return std::nullopt;
    }

    const Tree& tree_;
    std::optional<unsigned> leaf_depth_;
};

inline std::optional<std::string> check_invariants(const Tree& tree) { return InvariantChecker(tree).check(); }

/// Encoded bytes of every node reachable from the tree, keyed by node id.
inline std::map<std::uint64_t, Bytes> snapshot(const Tree& tree) {
    std::map<std::uint64_t, Bytes> out;
    std::vector<NodeRef> stack{tree.root()};
    while (!stack.empty()) {
        const NodeRef ref = stack.back();
        stack.pop_back();
        if (out.count(ref.id)) continue;
        const auto node = tree.store()->get(ref);
        out[ref.id] = encode_node_record(*node);
        for (auto c : node->children) stack.push_back(c);
    }
    return out;
}

inline authcodec::Seed fixed_seed(std::uint8_t fill = 7) {
    Bytes b(32, fill);
    return authcodec::Seed::from_bytes(b);
}

}  // namespace ebtree::fixture
