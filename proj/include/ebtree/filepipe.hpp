#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ebtree/authcodec.hpp"
#include "ebtree/digest.hpp"

namespace ebtree::filepipe {

inline constexpr std::size_t kDefaultBlockSize = 16384;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kKeySize = 32;

using FileId = std::array<std::uint8_t, 16>;

std::string file_id_hex(const FileId& id);
FileId file_id_from_hex(std::string_view hex);
/// Stable id for a file name: the first 16 bytes of H("ebtree-file-id:" || name).
FileId derive_file_id(std::string_view name);

/// ceil(len / block_size) blocks; only the last may be short. Empty input gives no blocks.
std::vector<Bytes> chunk_file(ByteView data, std::size_t block_size = kDefaultBlockSize);
Bytes join_blocks(std::span<const Bytes> blocks);

/// AES-256-GCM block. Stored and hashed on the server as nonce || ciphertext || tag.
struct CipherBlock {
    std::array<std::uint8_t, kNonceSize> nonce{};
    Bytes sealed;  // ciphertext || tag

    Bytes serialize() const;
    static CipherBlock parse(ByteView bytes);  // CodecError if shorter than nonce + tag
};

/// Nonce = first 12 bytes of H(file_id || u64_be(ordinal) || u64_be(op_counter)).
std::array<std::uint8_t, kNonceSize> derive_nonce(const FileId& id, std::uint64_t ordinal,
                                                  std::uint64_t op_counter);

CipherBlock encrypt_block(ByteView key, const FileId& id, std::uint64_t ordinal, std::uint64_t op_counter,
                          ByteView plaintext);
Bytes decrypt_block(ByteView key, const CipherBlock& block);  // IntegrityError on tag failure

/// Client/TPA metadata for one stored file.
struct FileManifest {
    FileId file_id{};
    std::uint64_t block_size = kDefaultBlockSize;
    std::uint64_t block_count = 0;
    std::uint64_t version = 0;
    Digest32 root_digest;
    Digest32 commit;
    Digest32 seed_fingerprint;
    std::uint64_t op_counter = 0;  // last nonce counter used for this file
    std::uint32_t min_degree = 8;

    /// Canonical JSON: sorted keys, no whitespace, lowercase hex byte fields.
    std::string to_json() const;
    static FileManifest from_json(std::string_view text);

    friend bool operator==(const FileManifest&, const FileManifest&) = default;
};

struct Upload {
    std::vector<Bytes> blocks;  // serialized CipherBlocks, in order
    std::vector<Digest32> digests;
    FileManifest manifest;
    Digest32 shadow_root;  // root the server must report for these digests
};

/// Chunk, encrypt (op counter 0, ordinal = index) and digest the ciphertext of every block.
Upload build_upload(ByteView file, ByteView key, const authcodec::Seed& seed, const FileId& id,
                    std::size_t block_size = kDefaultBlockSize, unsigned t = 8, bool parallel = true);

}  // namespace ebtree::filepipe
