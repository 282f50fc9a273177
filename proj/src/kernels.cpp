#include "ebtree/kernels.hpp"

#include <omp.h>

#include <exception>
#include <mutex>

#include "ebtree/tree.hpp"

namespace ebtree::kernels {

namespace {

Digest32 mht_parent(std::span<const Digest32> lower, std::size_t j, unsigned arity, const Digest32& pad) {
    Sha256 h;
    h.update(static_cast<std::uint8_t>(arity));
    for (std::size_t k = 0; k < arity; ++k) {
        const std::size_t idx = j * arity + k;
        h.update(idx < lower.size() ? lower[idx] : pad);
    }
    return h.finish();
}

// Exceptions must not escape an OpenMP region; the first one is rethrown after the loop.
class FirstError {
  public:
    template <typename F>
    void run(F&& f) {
        try {
            f();
        } catch (...) {
            std::lock_guard lock(mu_);
            if (!error_) error_ = std::current_exception();
        }
    }
    void rethrow() {
        if (error_) std::rethrow_exception(error_);
    }

  private:
    std::mutex mu_;
    std::exception_ptr error_;
};

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void seal_nodes(std::span<Node> nodes) {
    const auto count = static_cast<std::ptrdiff_t>(nodes.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) update_attributes(nodes[i]);
}

std::vector<Digest32> block_digests(const authcodec::Seed& seed, std::span<const Bytes> blocks) {
    std::vector<Digest32> out(blocks.size());
    const auto count = static_cast<std::ptrdiff_t>(blocks.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = authcodec::block_digest(seed, blocks[i]);
    return out;
}

std::vector<PathProof> extract_paths(const Tree& tree, std::span<const std::uint64_t> positions) {
    std::vector<PathProof> out(positions.size());
    FirstError err;
    const auto count = static_cast<std::ptrdiff_t>(positions.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        err.run([&] { out[i] = tree.sibling_path(positions[i]); });
    }
    err.rethrow();
    return out;
}

std::vector<authcodec::VerifyResult> verify_proofs(std::span<const authcodec::AuditProof> proofs,
                                                   const authcodec::Seed& seed, const Digest32& root,
                                                   std::optional<std::uint64_t> expected_blocks) {
    std::vector<authcodec::VerifyResult> out(proofs.size());
    const auto count = static_cast<std::ptrdiff_t>(proofs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        out[i] = authcodec::verify_proof(proofs[i], seed, root, expected_blocks);
    }
    return out;
}

std::vector<Digest32> mht_parent_level(std::span<const Digest32> lower, unsigned arity, const Digest32& pad) {
    std::vector<Digest32> out((lower.size() + arity - 1) / arity);
    const auto count = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < count; ++j) out[j] = mht_parent(lower, j, arity, pad);
    return out;
}

namespace serial {

void seal_nodes(std::span<Node> nodes) {
    for (auto& n : nodes) update_attributes(n);
}

std::vector<Digest32> block_digests(const authcodec::Seed& seed, std::span<const Bytes> blocks) {
    std::vector<Digest32> out;
    out.reserve(blocks.size());
    for (const auto& b : blocks) out.push_back(authcodec::block_digest(seed, b));
    return out;
}

std::vector<PathProof> extract_paths(const Tree& tree, std::span<const std::uint64_t> positions) {
    std::vector<PathProof> out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(tree.sibling_path(p));
    return out;
}

std::vector<authcodec::VerifyResult> verify_proofs(std::span<const authcodec::AuditProof> proofs,
                                                   const authcodec::Seed& seed, const Digest32& root,
                                                   std::optional<std::uint64_t> expected_blocks) {
    std::vector<authcodec::VerifyResult> out;
    out.reserve(proofs.size());
    for (const auto& p : proofs) out.push_back(authcodec::verify_proof(p, seed, root, expected_blocks));
    return out;
}

std::vector<Digest32> mht_parent_level(std::span<const Digest32> lower, unsigned arity, const Digest32& pad) {
    std::vector<Digest32> out;
    out.reserve((lower.size() + arity - 1) / arity);
    for (std::size_t j = 0; j * arity < lower.size(); ++j) out.push_back(mht_parent(lower, j, arity, pad));
    return out;
}

}  // namespace serial
}  // namespace ebtree::kernels
