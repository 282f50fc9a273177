#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebtree/digest.hpp"
#include "ebtree/node.hpp"

namespace ebtree::authcodec {

// Domain-separation tags for every hashed structure.
inline constexpr std::uint8_t kLeafTag = 0x00;
inline constexpr std::uint8_t kInternalTag = 0x01;
inline constexpr std::uint8_t kBlockTag = 0x02;
inline constexpr std::uint8_t kCommitTag = 0x03;
inline constexpr std::uint8_t kPositionTag = 0x04;

inline constexpr std::size_t kHeaderSize = 5;  // tag || u32_be(n)
inline constexpr std::size_t kSizeField = 8;   // u64_be subtree size after each child digest
inline constexpr std::size_t kChildUnit = Digest32::kSize + kSizeField;

/// Client-secret per-file seed. Never sent to the storage server.
struct Seed {
    std::array<std::uint8_t, 32> bytes{};

    static Seed generate();
    static Seed from_bytes(ByteView b);
    ByteView view() const { return {bytes.data(), bytes.size()}; }
    Digest32 fingerprint() const { return sha256(view()); }
};

/// H(0x02 || seed || block).
Digest32 block_digest(const Seed& seed, ByteView block);

std::size_t leaf_size(std::size_t n);
std::size_t internal_size(std::size_t n);

/// Leaf: 0x00 || u32_be(n) || d(B1) || ... || d(Bn).
void append_leaf(Bytes& out, std::span<const Digest32> block_digests);

/// Internal: 0x01 || u32_be(n) || D(C1) || S1 || d(B1) || D(C2) || S2 || ... || d(Bn) || D(Cn+1) || Sn+1,
/// with S_i the child's subtree size as u64_be.
void append_internal(Bytes& out, std::span<const Digest32> child_digests,
                     std::span<const std::uint64_t> child_sizes,
                     std::span<const Digest32> block_digests);

Bytes serialize_node(const Node& node);
Digest32 node_digest(const Node& node);

/// Byte offset of the hole for child i / block i inside serialize_node(node).
std::size_t child_offset(std::size_t i);
std::size_t internal_block_offset(std::size_t i);
std::size_t leaf_block_offset(std::size_t i);

/// One level of a sibling path: the node's serialization with a 32-byte hole cut out.
struct SiblingPathEntry {
    Bytes prefix;
    Bytes suffix;
    friend bool operator==(const SiblingPathEntry&, const SiblingPathEntry&) = default;
};

/// Block payload plus its sibling path, root entry first.
struct AuditProof {
    std::uint64_t position = 0;
    Bytes block;
    std::vector<SiblingPathEntry> path;

    std::size_t byte_size() const;
    friend bool operator==(const AuditProof&, const AuditProof&) = default;
};

enum class Verdict { kAccept, kDigestMismatch, kMalformed, kRankMismatch, kCountMismatch };

struct VerifyResult {
    Verdict verdict = Verdict::kAccept;
    std::string detail;
    bool accepted() const { return verdict == Verdict::kAccept; }
};

const char* to_string(Verdict v);

/// What the path itself says about the block it proves.
struct PathShape {
    std::uint64_t rank = 0;         // 1-based position implied by the path
    std::uint64_t total_blocks = 0;  // subtree size of the root entry
};

/// Parses a path and recomputes the rank and block count it encodes. Returns nullopt
/// (with a reason) when no well-formed tree could have produced it.
std::optional<PathShape> parse_path(std::span<const SiblingPathEntry> path, std::string* why = nullptr);

/// h = blockDigest(seed, block); h = H(prefix || h || suffix) from the deepest entry up.
Digest32 fold_path(std::span<const SiblingPathEntry> path, const Digest32& leaf);

/// Accepts iff the path is well-formed, proves proof.position, and folds to expected_root.
/// When expected_blocks is given the root entry's subtree size must match it too.
VerifyResult verify_proof(const AuditProof& proof, const Seed& seed, const Digest32& expected_root,
                          std::optional<std::uint64_t> expected_blocks = std::nullopt);

}  // namespace ebtree::authcodec
