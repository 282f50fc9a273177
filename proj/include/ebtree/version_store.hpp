#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ebtree/append_log.hpp"
#include "ebtree/node_store.hpp"
#include "ebtree/tree.hpp"

namespace ebtree {

/// What a committed version did to its predecessor.
struct OpDescriptor {
    enum class Kind { kInit, kInsert, kDelete, kUpdate, kBatch };
    Kind kind = Kind::kInit;
    std::uint64_t position = 0;  // insert/delete/update only

    static OpDescriptor init() { return {Kind::kInit, 0}; }
    static OpDescriptor batch() { return {Kind::kBatch, 0}; }
    static OpDescriptor insert(std::uint64_t p) { return {Kind::kInsert, p}; }
    static OpDescriptor erase(std::uint64_t p) { return {Kind::kDelete, p}; }
    static OpDescriptor update(std::uint64_t p) { return {Kind::kUpdate, p}; }

    /// "init", "batch", "insert(P)", "delete(P)" or "update(P)".
    std::string canonical() const;
    static OpDescriptor parse(std::string_view text);  // throws CodecError

    friend bool operator==(const OpDescriptor&, const OpDescriptor&) = default;
};

struct VersionRecord {
    std::uint64_t version = 0;
    NodeRef root;
    Digest32 root_digest;
    OpDescriptor op;
    Digest32 commit;
    std::uint64_t blocks = 0;
    std::uint32_t min_degree = kDefaultMinDegree;

    friend bool operator==(const VersionRecord&, const VersionRecord&) = default;
};

/// H(0x03 || previous commit || root digest || canonical op bytes).
Digest32 chain_commit(const Digest32& previous, const Digest32& root_digest, const OpDescriptor& op);

Bytes encode_version_record(const VersionRecord& r);
VersionRecord decode_version_record(ByteView bytes);

struct ChainCheck {
    bool ok = true;
    std::optional<std::uint64_t> first_bad;
    std::string detail;
};

/// Recomputes every commit; accepts iff all match and versions are dense from 0.
ChainCheck verify_chain(std::span<const VersionRecord> log);

/// Append-only persistence for one stored file: nodes, blocks and the version log.
/// Either fully in memory or backed by FILE.nodes / FILE.blocks / FILE.versions in a directory.
class VersionStore {
  public:
    static std::unique_ptr<VersionStore> in_memory(unsigned t = kDefaultMinDegree);

    /// Opens (or with create=true, creates) the three logs for `file_id` under `dir`.
    /// A read-only store never repairs a torn tail and refuses to commit.
    static std::unique_ptr<VersionStore> open(const std::filesystem::path& dir, const std::string& file_id,
                                              bool create, unsigned t = kDefaultMinDegree, bool sync = true,
                                              bool read_only = false);
    static bool exists(const std::filesystem::path& dir, const std::string& file_id);

    const std::shared_ptr<NodeStore>& nodes() const { return nodes_; }
    const std::shared_ptr<BlockStore>& blocks() const { return blocks_; }
    unsigned min_degree() const { return t_; }

    std::optional<VersionRecord> latest() const;
    std::vector<VersionRecord> records() const;
    VersionRecord record(std::uint64_t version) const;  // NotFoundError

    /// Appends the record following `prev` (nullopt for genesis). Throws ConflictError when
    /// `prev` is not the latest record. Durable before it returns.
    VersionRecord commit(const std::optional<VersionRecord>& prev, const Tree& tree, const OpDescriptor& op);

    Tree load(std::uint64_t version) const;
    Tree load_latest() const;

    /// Re-reads the stored version log (not the in-memory copy) and checks the chain.
    ChainCheck verify_chain() const;

    /// From-scratch rehash of version v equals its recorded root digest and block count, and
    /// every stored derived field (child digests, sizes, counts, totals) and occupancy rule
    /// agrees with the recomputation. False on any mismatch or unreadable node.
    bool verify_version(std::uint64_t version) const;

    /// Test hook for the in-memory store: replace stored record k.
    void tamper_record(std::uint64_t k, const VersionRecord& r);
    /// Test hook for the in-memory store: drop stored record k.
    void drop_record(std::uint64_t k);

    const std::optional<std::filesystem::path>& versions_path() const { return versions_path_; }

  private:
    VersionStore() = default;

    std::shared_ptr<NodeStore> nodes_;
    std::shared_ptr<BlockStore> blocks_;
    std::unique_ptr<AppendLog> version_log_;
    std::optional<std::filesystem::path> versions_path_;
    unsigned t_ = kDefaultMinDegree;

    mutable std::shared_mutex mu_;
    std::mutex commit_mu_;
    std::vector<VersionRecord> records_;
    std::vector<VersionRecord> stored_;  // memory mode: the "storage" copy that hooks may tamper
};

/// NodeStore over an AppendLog; ids are record offsets. Decoded nodes are cached.
class LogNodeStore final : public NodeStore {
  public:
    LogNodeStore(std::filesystem::path path, AppendLog::Mode mode, bool sync);
    NodeRef put(const Node& node) override;
    std::shared_ptr<const Node> get(NodeRef ref) const override;
    std::uint64_t node_count() const override;
    void flush() override { log_.flush(); }
    void drop_cache();

  private:
    AppendLog log_;
    mutable std::shared_mutex mu_;
    mutable std::unordered_map<std::uint64_t, std::shared_ptr<const Node>> cache_;
};

/// BlockStore over an AppendLog. Reads always go to disk.
class LogBlockStore final : public BlockStore {
  public:
    LogBlockStore(std::filesystem::path path, AppendLog::Mode mode, bool sync);
    BlockRef put(ByteView payload) override;
    std::shared_ptr<const Bytes> get(BlockRef ref) const override;
    std::uint64_t block_count() const override;
    void flush() override { log_.flush(); }

  private:
    AppendLog log_;
};

std::filesystem::path nodes_path(const std::filesystem::path& dir, const std::string& file_id);
std::filesystem::path blocks_path(const std::filesystem::path& dir, const std::string& file_id);
std::filesystem::path versions_path(const std::filesystem::path& dir, const std::string& file_id);

}  // namespace ebtree
