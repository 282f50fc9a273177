#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ebtree/authcodec.hpp"
#include "ebtree/filepipe.hpp"
#include "ebtree/version_store.hpp"
#include "ebtree/wire.hpp"

namespace ebtree::audit {

inline constexpr std::uint32_t kDefaultChallengeSize = 300;
inline constexpr std::uint16_t kDefaultPort = 7474;

/// p_i = 1 + (H(0x04 || nonce || u32_be(i)) mod N) for i = 1..k, hash read big-endian.
std::vector<std::uint64_t> derive_positions(const wire::Nonce& nonce, std::uint32_t k, std::uint64_t n);

/// Request/response transport.
class Channel {
  public:
    virtual ~Channel() = default;
    virtual wire::Json request(const wire::Json& message) = 0;  // TransportError on failure
};

/// The storage server: keeps one VersionStore per file and answers wire requests.
/// Mutations on one file are serialized; challenges and reads run concurrently.
class StorageServer {
  public:
    /// In-memory server.
    StorageServer();
    /// Persistent server rooted at `data_dir`.
    explicit StorageServer(std::filesystem::path data_dir, bool sync = true);

    wire::Json handle(const wire::Json& request);

    wire::Ack upload(const filepipe::FileId& file, const std::string& token, unsigned t,
                     std::span<const Bytes> blocks, std::span<const Digest32> digests);
    wire::Ack apply_mutation(const filepipe::FileId& file, const std::string& token, const std::string& op,
                             std::uint64_t base_version, std::uint64_t rank, const std::optional<Bytes>& block,
                             const std::optional<Digest32>& digest);
    wire::ProofBundle handle_challenge(const wire::Challenge& c) const;
    wire::ProofBundle get(const filepipe::FileId& file, const std::string& token, std::uint64_t rank,
                          std::optional<std::uint64_t> version) const;

    /// Number of committed versions of a file.
    std::uint64_t version_count(const filepipe::FileId& file) const;
    /// Direct handle on a file's store (tests and server-side tooling).
    VersionStore& store(const filepipe::FileId& file) const;

    /// Test hook: silently flip one byte of the block currently at `rank`.
    void corrupt_block(const filepipe::FileId& file, std::uint64_t rank, std::size_t byte_index = 0);

  private:
    struct FileState {
        std::unique_ptr<VersionStore> store;
        Digest32 token_hash;
        std::mutex mutate_mu;
    };

    FileState& file_state(const filepipe::FileId& file) const;
    void check_token(const FileState& fs, const std::string& token) const;

    std::optional<std::filesystem::path> data_dir_;
    bool sync_ = true;
    mutable std::mutex files_mu_;
    mutable std::map<std::string, std::unique_ptr<FileState>> files_;
};

/// Channel that calls a StorageServer in-process, through the same JSON encoding.
class LocalChannel final : public Channel {
  public:
    explicit LocalChannel(StorageServer& server) : server_(server) {}
    wire::Json request(const wire::Json& message) override;

  private:
    StorageServer& server_;
};

struct AuditVerdict {
    enum class Outcome { kPass, kIntegrity, kVersionMismatch, kTransport, kServerError };
    Outcome outcome = Outcome::kPass;
    std::uint64_t version = 0;
    std::uint32_t k = 0;
    std::vector<std::uint64_t> failed_ranks;
    std::string detail;

    bool passed() const { return outcome == Outcome::kPass; }
};

const char* to_string(AuditVerdict::Outcome o);

/// Third-party auditor: holds each file's manifest and seed, challenges the server and
/// verifies the returned proofs against the manifest.
class Auditor {
  public:
    /// MANIFEST message: {"type":"MANIFEST","manifest":{...},"seed":hex}.
    void accept(const wire::Json& manifest_message);
    void accept(const filepipe::FileManifest& manifest, const authcodec::Seed& seed);
    const filepipe::FileManifest& manifest(const filepipe::FileId& file) const;

    wire::Challenge make_challenge(const filepipe::FileId& file, std::uint32_t k) const;
    /// Checks a bundle against the challenge and the current manifest.
    AuditVerdict check(const wire::Challenge& challenge, const wire::ProofBundle& bundle) const;
    AuditVerdict run_audit(Channel& channel, const filepipe::FileId& file,
                           std::uint32_t k = kDefaultChallengeSize, int attempts = 3) const;

  private:
    struct Record {
        filepipe::FileManifest manifest;
        authcodec::Seed seed;
    };
    std::map<filepipe::FileId, Record> records_;
};

/// File owner: encrypts, digests and mutates its file, keeping the manifest current.
class Client {
  public:
    Client(Channel& channel, Bytes key, authcodec::Seed seed, std::string token);

    const filepipe::FileManifest& manifest() const { return manifest_; }
    void set_manifest(const filepipe::FileManifest& m) { manifest_ = m; }
    const authcodec::Seed& seed() const { return seed_; }

    /// Uploads as version 0. Fails with IntegrityError if the server's root is not the
    /// root of an independent local build over the same digests.
    const filepipe::FileManifest& upload(ByteView file, const filepipe::FileId& id,
                                         std::size_t block_size = filepipe::kDefaultBlockSize,
                                         unsigned t = kDefaultMinDegree);
    const filepipe::FileManifest& insert(std::uint64_t rank, ByteView plaintext);
    const filepipe::FileManifest& erase(std::uint64_t rank);
    const filepipe::FileManifest& update(std::uint64_t rank, ByteView plaintext);

    /// Fetches, verifies against the manifest root, and decrypts one block.
    Bytes get(std::uint64_t rank);
    /// All blocks in order, decrypted and joined.
    Bytes download();

    /// The MANIFEST message for the TPA.
    wire::Json manifest_message() const;

  private:
    const filepipe::FileManifest& mutate(const char* op, std::uint64_t rank, const Bytes* plaintext);

    Channel& channel_;
    Bytes key_;
    authcodec::Seed seed_;
    std::string token_;
    filepipe::FileManifest manifest_;
};

}  // namespace ebtree::audit
