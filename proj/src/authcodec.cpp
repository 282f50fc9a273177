#include "ebtree/authcodec.hpp"

#include "ebtree/errors.hpp"

namespace ebtree::authcodec {

Seed Seed::generate() { return from_bytes(random_bytes(32)); }

Seed Seed::from_bytes(ByteView b) {
    if (b.size() != 32) throw CodecError("seed must be 32 bytes");
    Seed s;
    std::copy(b.begin(), b.end(), s.bytes.begin());
    return s;
}

Digest32 block_digest(const Seed& seed, ByteView block) {
    const std::uint8_t tag = kBlockTag;
    return sha256({ByteView(&tag, 1), seed.view(), block});
}

std::size_t leaf_size(std::size_t n) { return kHeaderSize + Digest32::kSize * n; }

std::size_t internal_size(std::size_t n) {
    return kHeaderSize + Digest32::kSize * (2 * n + 1) + kSizeField * (n + 1);
}

std::size_t child_offset(std::size_t i) { return kHeaderSize + (kChildUnit + Digest32::kSize) * i; }
std::size_t internal_block_offset(std::size_t i) { return child_offset(i) + kChildUnit; }
std::size_t leaf_block_offset(std::size_t i) { return kHeaderSize + Digest32::kSize * i; }

void append_leaf(Bytes& out, std::span<const Digest32> block_digests) {
    out.reserve(out.size() + leaf_size(block_digests.size()));
    out.push_back(kLeafTag);
    put_u32_be(out, static_cast<std::uint32_t>(block_digests.size()));
    for (const auto& d : block_digests) out.insert(out.end(), d.bytes.begin(), d.bytes.end());
}

void append_internal(Bytes& out, std::span<const Digest32> child_digests,
                     std::span<const std::uint64_t> child_sizes,
                     std::span<const Digest32> block_digests) {
    const std::size_t n = block_digests.size();
    if (child_digests.size() != n + 1 || child_sizes.size() != n + 1) {
        throw ContractViolation("internal node needs n+1 children");
    }
    out.reserve(out.size() + internal_size(n));
    out.push_back(kInternalTag);
    put_u32_be(out, static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i <= n; ++i) {
        out.insert(out.end(), child_digests[i].bytes.begin(), child_digests[i].bytes.end());
        put_u64_be(out, child_sizes[i]);
        if (i < n) out.insert(out.end(), block_digests[i].bytes.begin(), block_digests[i].bytes.end());
    }
}

Bytes serialize_node(const Node& node) {
    Bytes out;
    if (node.leaf) {
        append_leaf(out, node.digests);
    } else {
        append_internal(out, node.child_digests, node.sizes, node.digests);
    }
    return out;
}

Digest32 node_digest(const Node& node) {
    thread_local Bytes buf;
    buf.clear();
    if (node.leaf) {
        append_leaf(buf, node.digests);
    } else {
        append_internal(buf, node.child_digests, node.sizes, node.digests);
    }
    return sha256(buf);
}

std::size_t AuditProof::byte_size() const {
    std::size_t total = block.size();
    for (const auto& e : path) total += e.prefix.size() + e.suffix.size();
    return total;
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::kAccept: return "accept";
        case Verdict::kDigestMismatch: return "digest-mismatch";
        case Verdict::kMalformed: return "malformed-proof";
        case Verdict::kRankMismatch: return "rank-mismatch";
        case Verdict::kCountMismatch: return "count-mismatch";
    }
    return "unknown";
}

namespace {

// Reads a u64 field at absolute offset `at` of the reassembled serialization. The field
// must not overlap the 32-byte hole.
std::optional<std::uint64_t> read_size(const SiblingPathEntry& e, std::size_t at) {
    const std::size_t hole_end = e.prefix.size() + Digest32::kSize;
    if (at + kSizeField <= e.prefix.size()) return get_u64_be(e.prefix.data() + at);
    if (at >= hole_end && at - hole_end + kSizeField <= e.suffix.size()) {
        return get_u64_be(e.suffix.data() + (at - hole_end));
    }
    return std::nullopt;
}

bool fail(std::string* why, const char* reason) {
    if (why != nullptr) *why = reason;
    return false;
}

}  // namespace

std::optional<PathShape> parse_path(std::span<const SiblingPathEntry> path, std::string* why) {
    if (path.empty()) {
        fail(why, "empty sibling path");
        return std::nullopt;
    }
    PathShape shape;
    std::uint64_t offset = 0;
    std::optional<std::uint64_t> expected_total;
    for (std::size_t level = 0; level < path.size(); ++level) {
        const auto& e = path[level];
        const bool last = level + 1 == path.size();
        if (e.prefix.size() < kHeaderSize) {
            fail(why, "prefix shorter than node header");
            return std::nullopt;
        }
        const std::uint8_t tag = e.prefix[0];
        const std::uint64_t n = get_u32_be(e.prefix.data() + 1);
        const std::size_t full = e.prefix.size() + Digest32::kSize + e.suffix.size();
        const std::size_t rel = e.prefix.size() - kHeaderSize;
        if (n == 0) {
            fail(why, "node with zero blocks");
            return std::nullopt;
        }
        std::uint64_t node_total = n;
        if (tag == kLeafTag) {
            if (full != leaf_size(n) || rel % Digest32::kSize != 0 || !last) {
                fail(why, "leaf entry has inconsistent length or is not last");
                return std::nullopt;
            }
            if (expected_total && *expected_total != node_total) {
                fail(why, "leaf size disagrees with parent");
                return std::nullopt;
            }
            shape.rank = offset + rel / Digest32::kSize + 1;
        } else if (tag == kInternalTag) {
            if (full != internal_size(n)) {
                fail(why, "internal entry has inconsistent length");
                return std::nullopt;
            }
            std::vector<std::uint64_t> sizes(n + 1);
            for (std::size_t i = 0; i <= n; ++i) {
                auto s = read_size(e, child_offset(i) + Digest32::kSize);
                if (!s) {
                    fail(why, "hole overlaps a size field");
                    return std::nullopt;
                }
                sizes[i] = *s;
                if (__builtin_add_overflow(node_total, *s, &node_total)) {
                    fail(why, "subtree size overflow");
                    return std::nullopt;
                }
            }
            if (expected_total && *expected_total != node_total) {
                fail(why, "subtree size disagrees with parent");
                return std::nullopt;
            }
            const std::size_t unit = kChildUnit + Digest32::kSize;
            const std::size_t slot = rel / unit;
            if (rel % unit == 0) {
                if (slot > n || last) {
                    fail(why, "child hole out of range or path ends at a child");
                    return std::nullopt;
                }
                for (std::size_t i = 0; i < slot; ++i) offset += sizes[i] + 1;
                expected_total = sizes[slot];
            } else if (rel % unit == kChildUnit) {
                if (slot >= n || !last) {
                    fail(why, "block hole out of range or not last");
                    return std::nullopt;
                }
                for (std::size_t i = 0; i <= slot; ++i) offset += sizes[i] + 1;
                shape.rank = offset;
            } else {
                fail(why, "hole not aligned to a digest");
                return std::nullopt;
            }
        } else {
            fail(why, "unknown node tag");
            return std::nullopt;
        }
        if (level == 0) shape.total_blocks = node_total;
    }
    return shape;
}

Digest32 fold_path(std::span<const SiblingPathEntry> path, const Digest32& leaf) {
    Digest32 h = leaf;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        h = sha256({ByteView(it->prefix), h.view(), ByteView(it->suffix)});
    }
    return h;
}

VerifyResult verify_proof(const AuditProof& proof, const Seed& seed, const Digest32& expected_root,
                          std::optional<std::uint64_t> expected_blocks) {
    std::string why;
    auto shape = parse_path(proof.path, &why);
    if (!shape) return {Verdict::kMalformed, why};
    const Digest32 root = fold_path(proof.path, block_digest(seed, proof.block));
    if (root != expected_root) {
        return {Verdict::kDigestMismatch, "folded root " + root.hex() + " != " + expected_root.hex()};
    }
    if (shape->rank != proof.position) {
        return {Verdict::kRankMismatch, "path proves rank " + std::to_string(shape->rank) +
                                            ", claimed " + std::to_string(proof.position)};
    }
    if (expected_blocks && shape->total_blocks != *expected_blocks) {
        return {Verdict::kCountMismatch, "path implies " + std::to_string(shape->total_blocks) +
                                             " blocks, expected " + std::to_string(*expected_blocks)};
    }
    return {};
}

}  // namespace ebtree::authcodec
