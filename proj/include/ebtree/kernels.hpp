#pragma once

// Data-parallel hot loops. Every kernel has a serial twin in kernels::serial with the
// same contract; tests hold the two to identical output.

#include <optional>
#include <span>
#include <vector>

#include "ebtree/authcodec.hpp"
#include "ebtree/node.hpp"

namespace ebtree {
class Tree;
struct PathProof;
}  // namespace ebtree

namespace ebtree::kernels {

/// update_attributes() on every node. Child attributes must already be current.
void seal_nodes(std::span<Node> nodes);

/// Seeded digest of every block.
std::vector<Digest32> block_digests(const authcodec::Seed& seed, std::span<const Bytes> blocks);

/// Sibling paths for a batch of ranks against one immutable tree version.
std::vector<PathProof> extract_paths(const Tree& tree, std::span<const std::uint64_t> positions);

/// verify_proof() over a batch, results in input order.
std::vector<authcodec::VerifyResult> verify_proofs(std::span<const authcodec::AuditProof> proofs,
                                                   const authcodec::Seed& seed, const Digest32& root,
                                                   std::optional<std::uint64_t> expected_blocks);

/// One MHT level up: parent j = H(u8(arity) || lower[j*arity .. j*arity+arity-1]), short
/// groups padded with `pad`.
std::vector<Digest32> mht_parent_level(std::span<const Digest32> lower, unsigned arity, const Digest32& pad);

/// Threads the parallel kernels will use.
int max_threads();

namespace serial {

void seal_nodes(std::span<Node> nodes);
std::vector<Digest32> block_digests(const authcodec::Seed& seed, std::span<const Bytes> blocks);
std::vector<PathProof> extract_paths(const Tree& tree, std::span<const std::uint64_t> positions);
std::vector<authcodec::VerifyResult> verify_proofs(std::span<const authcodec::AuditProof> proofs,
                                                   const authcodec::Seed& seed, const Digest32& root,
                                                   std::optional<std::uint64_t> expected_blocks);
std::vector<Digest32> mht_parent_level(std::span<const Digest32> lower, unsigned arity, const Digest32& pad);

}  // namespace serial
}  // namespace ebtree::kernels
