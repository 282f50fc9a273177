#include "ebtree/node_store.hpp"

#include <mutex>

#include "ebtree/errors.hpp"

namespace ebtree {

NodeRef MemoryNodeStore::put(const Node& node) { return put(Node(node)); }

NodeRef MemoryNodeStore::put(Node&& node) {
    auto stored = std::make_shared<const Node>(std::move(node));
    std::unique_lock lock(mu_);
    nodes_.push_back(std::move(stored));
    return NodeRef{nodes_.size()};
}

std::shared_ptr<const Node> MemoryNodeStore::get(NodeRef ref) const {
    count_read();
    std::shared_lock lock(mu_);
    if (ref.id == 0 || ref.id > nodes_.size()) {
        throw NotFoundError("unknown node ref " + std::to_string(ref.id));
    }
    return nodes_[ref.id - 1];
}

std::uint64_t MemoryNodeStore::node_count() const {
    std::shared_lock lock(mu_);
    return nodes_.size();
}

BlockRef MemoryBlockStore::put(ByteView payload) {
    auto stored = std::make_shared<const Bytes>(payload.begin(), payload.end());
    std::unique_lock lock(mu_);
    blocks_.push_back(std::move(stored));
    return BlockRef{blocks_.size()};
}

std::shared_ptr<const Bytes> MemoryBlockStore::get(BlockRef ref) const {
    std::shared_lock lock(mu_);
    if (ref.id == 0 || ref.id > blocks_.size()) {
        throw NotFoundError("unknown block ref " + std::to_string(ref.id));
    }
    return blocks_[ref.id - 1];
}

std::uint64_t MemoryBlockStore::block_count() const {
    std::shared_lock lock(mu_);
    return blocks_.size();
}

void MemoryBlockStore::tamper(BlockRef ref, Bytes payload) {
    std::unique_lock lock(mu_);
    if (ref.id == 0 || ref.id > blocks_.size()) throw NotFoundError("unknown block ref");
    blocks_[ref.id - 1] = std::make_shared<const Bytes>(std::move(payload));
}

// Record layout: u8 leaf || u32 n || n x (digest, u64 block ref) || digest
// and, for internal nodes, (n+1) x (u64 child ref, u64 size, digest, u32 count) || u64 total.
Bytes encode_node_record(const Node& node) {
    const std::size_t n = node.count();
    Bytes out;
    out.reserve(16 + n * 40 + (node.leaf ? 0 : (n + 1) * 52) + 40);
    out.push_back(node.leaf ? 1 : 0);
    put_u32_be(out, static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
        out.insert(out.end(), node.digests[i].bytes.begin(), node.digests[i].bytes.end());
        put_u64_be(out, node.blocks[i].id);
    }
    if (!node.leaf) {
        for (std::size_t i = 0; i <= n; ++i) {
            put_u64_be(out, node.children[i].id);
            put_u64_be(out, node.sizes[i]);
            out.insert(out.end(), node.child_digests[i].bytes.begin(), node.child_digests[i].bytes.end());
            put_u32_be(out, node.child_counts[i]);
        }
    }
    put_u64_be(out, node.total);
    out.insert(out.end(), node.digest.bytes.begin(), node.digest.bytes.end());
    return out;
}

Node decode_node_record(ByteView bytes) {
    std::size_t at = 0;
    auto need = [&](std::size_t k) {
        if (at + k > bytes.size()) throw CodecError("truncated node record");
    };
    auto digest = [&] {
        need(32);
        auto d = Digest32::from_bytes(bytes.subspan(at, 32));
        at += 32;
        return d;
    };
    auto u64 = [&] {
        need(8);
        auto v = get_u64_be(bytes.data() + at);
        at += 8;
        return v;
    };
    auto u32 = [&] {
        need(4);
        auto v = get_u32_be(bytes.data() + at);
        at += 4;
        return v;
    };

    Node node;
    need(1);
    const std::uint8_t leaf = bytes[at++];
    if (leaf > 1) throw CodecError("bad leaf flag in node record");
    node.leaf = leaf == 1;
    const std::size_t n = u32();
    if (n > bytes.size()) throw CodecError("implausible block count in node record");
    node.digests.reserve(n);
    node.blocks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        node.digests.push_back(digest());
        node.blocks.push_back(BlockRef{u64()});
    }
    if (!node.leaf) {
        for (std::size_t i = 0; i <= n; ++i) {
            node.children.push_back(NodeRef{u64()});
            node.sizes.push_back(u64());
            node.child_digests.push_back(digest());
            node.child_counts.push_back(u32());
        }
    }
    node.total = u64();
    node.digest = digest();
    if (at != bytes.size()) throw CodecError("trailing bytes in node record");
    return node;
}

}  // namespace ebtree
