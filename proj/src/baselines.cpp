#include "ebtree/baselines.hpp"

#include <memory>

#include "ebtree/authcodec.hpp"
#include "ebtree/errors.hpp"
#include "ebtree/kernels.hpp"

namespace ebtree::baselines {

namespace {

struct Rehash {
    Digest32 digest;
    std::uint64_t total = 0;
};

Rehash rehash(const NodeStore& store, NodeRef ref) {
    const auto node = store.get(ref);
    Bytes bytes;
    if (node->leaf) {
        authcodec::append_leaf(bytes, node->digests);
        return {sha256(bytes), node->count()};
    }
    std::vector<Digest32> child_digests;
    std::vector<std::uint64_t> child_sizes;
    std::uint64_t total = node->count();
    for (NodeRef c : node->children) {
        const Rehash r = rehash(store, c);
        child_digests.push_back(r.digest);
        child_sizes.push_back(r.total);
        total += r.total;
    }
    authcodec::append_internal(bytes, child_digests, child_sizes, node->digests);
    return {sha256(bytes), total};
}

// Plain pointer B-tree, CLRS style, appends only.
struct OracleNode {
    std::vector<Digest32> digests;
    std::vector<std::unique_ptr<OracleNode>> kids;
    bool leaf() const { return kids.empty(); }
};

void oracle_split(OracleNode& x, std::size_t i, unsigned t) {
    OracleNode& y = *x.kids[i];
    auto z = std::make_unique<OracleNode>();
    for (std::size_t j = t; j < y.digests.size(); ++j) z->digests.push_back(y.digests[j]);
    if (!y.leaf()) {
        for (std::size_t j = t; j < y.kids.size(); ++j) z->kids.push_back(std::move(y.kids[j]));
        y.kids.resize(t);
    }
    x.digests.insert(x.digests.begin() + i, y.digests[t - 1]);
    y.digests.resize(t - 1);
    x.kids.insert(x.kids.begin() + i + 1, std::move(z));
}

void oracle_append_nonfull(OracleNode& x, const Digest32& d, unsigned t) {
    if (x.leaf()) {
        x.digests.push_back(d);
        return;
    }
    if (x.kids.back()->digests.size() == 2 * t - 1) oracle_split(x, x.kids.size() - 1, t);
    oracle_append_nonfull(*x.kids.back(), d, t);
}

Rehash oracle_digest(const OracleNode& x) {
    Bytes bytes;
    if (x.leaf()) {
        authcodec::append_leaf(bytes, x.digests);
        return {sha256(bytes), x.digests.size()};
    }
    std::vector<Digest32> child_digests;
    std::vector<std::uint64_t> child_sizes;
    std::uint64_t total = x.digests.size();
    for (const auto& k : x.kids) {
        const Rehash r = oracle_digest(*k);
        child_digests.push_back(r.digest);
        child_sizes.push_back(r.total);
        total += r.total;
    }
    authcodec::append_internal(bytes, child_digests, child_sizes, x.digests);
    return {sha256(bytes), total};
}

}  // namespace

Digest32 full_rehash_root(const NodeStore& store, NodeRef root) { return rehash(store, root).digest; }

Digest32 naive_root_oracle(std::span<const Digest32> digests, unsigned t) {
    if (t < 2) throw ConfigError("minimum degree must be >= 2");
    auto root = std::make_unique<OracleNode>();
    for (const auto& d : digests) {
        if (root->digests.size() == 2 * t - 1) {
            auto s = std::make_unique<OracleNode>();
            s->kids.push_back(std::move(root));
            oracle_split(*s, 0, t);
            root = std::move(s);
        }
        oracle_append_nonfull(*root, d, t);
    }
    return oracle_digest(*root).digest;
}

Digest32 empty_tree_digest() {
    Bytes bytes;
    authcodec::append_leaf(bytes, {});
    return sha256(bytes);
}

Digest32 MerkleTree::pad_digest() {
    static const Digest32 pad = [] {
        const std::uint8_t tag = 0x05;
        return sha256(ByteView(&tag, 1));
    }();
    return pad;
}

Digest32 MerkleTree::empty_root_digest() {
    static const Digest32 empty = [] {
        const std::uint8_t tag = 0x06;
        return sha256(ByteView(&tag, 1));
    }();
    return empty;
}

MerkleTree::MerkleTree(std::span<const Digest32> leaves, unsigned arity, bool parallel) : arity_(arity) {
    if (arity != 2 && arity != 8) throw ConfigError("MHT arity must be 2 or 8");
    levels_.emplace_back(leaves.begin(), leaves.end());
    rebuild(parallel);
}

void MerkleTree::rebuild(bool parallel) {
    levels_.resize(1);
    if (levels_.front().empty()) {
        root_ = empty_root_digest();
        return;
    }
    while (levels_.size() == 1 || levels_.back().size() > 1) {
        levels_.push_back(parallel ? kernels::mht_parent_level(levels_.back(), arity_, pad_digest())
                                   : kernels::serial::mht_parent_level(levels_.back(), arity_, pad_digest()));
    }
    root_ = levels_.back().front();
}

void MerkleTree::update(std::size_t index, const Digest32& leaf) {
    if (index >= leaf_count()) throw RangeError("MHT leaf index out of range");
    levels_[0][index] = leaf;
    for (std::size_t l = 1; l < levels_.size(); ++l) {
        const std::size_t group = index / arity_;
        Sha256 h;
        h.update(static_cast<std::uint8_t>(arity_));
        for (std::size_t k = 0; k < arity_; ++k) {
            const std::size_t idx = group * arity_ + k;
            h.update(idx < levels_[l - 1].size() ? levels_[l - 1][idx] : pad_digest());
        }
        levels_[l][group] = h.finish();
        index = group;
    }
    root_ = levels_.back().front();
}

MerkleTree::Proof MerkleTree::prove(std::size_t index) const {
    if (index >= leaf_count()) throw RangeError("MHT leaf index out of range");
    Proof proof;
    proof.leaf_index = index;
    for (std::size_t l = 0; l + 1 < levels_.size(); ++l) {
        const std::size_t start = (index / arity_) * arity_;
        std::vector<Digest32> group;
        for (std::size_t k = 0; k < arity_; ++k) {
            if (start + k == index) continue;
            group.push_back(start + k < levels_[l].size() ? levels_[l][start + k] : pad_digest());
        }
        proof.groups.push_back(std::move(group));
        index /= arity_;
    }
    return proof;
}

bool MerkleTree::verify(const Proof& proof, const Digest32& leaf, const Digest32& root, unsigned arity) {
    Digest32 h = leaf;
    std::size_t index = proof.leaf_index;
    for (const auto& group : proof.groups) {
        if (group.size() != arity - 1) return false;
        const std::size_t slot = index % arity;
        Sha256 hasher;
        hasher.update(static_cast<std::uint8_t>(arity));
        for (std::size_t k = 0, g = 0; k < arity; ++k) hasher.update(k == slot ? h : group[g++]);
        h = hasher.finish();
        index /= arity;
    }
    return index == 0 && h == root;
}

std::uint64_t key_exhaustion_demo(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo + 1) throw ConfigError("need at least one free key between lo and hi");
    std::uint64_t steps = 0;
    while (hi - lo - 1 > 0) {
        const std::int64_t free = hi - lo - 1;
        const std::int64_t key = lo + 1 + free / 2;
        ++steps;
        if (key - lo - 1 <= hi - key - 1) {
            hi = key;
        } else {
            lo = key;
        }
    }
    return steps;
}

}  // namespace ebtree::baselines
